//! Task planning and execution for each experiment type.

use anyhow::{anyhow, bail};
use serde::{Deserialize, Serialize};
use striplab::green::{green_oracle, resonance_set, wegner_sample};
use striplab::localization::{correlator_value, decay_fit, fractional_moment_probe, FractionalProbe, Spectrum};
use striplab::lyapunov::{estimate_spectrum, ldp_tail, GammaGrid, LyapunovEstimate, ReferenceCache};
use striplab::model::{assemble, sample_realization, Window};
use striplab::rng::task_seed;
use striplab::stats::{fit_line, median, LineFit};
use striplab::Error;

use crate::config::{Experiment, ExperimentConfig};

/// Logical index of the reference computation in the seed sequence.
const REFERENCE_INDEX: u64 = u64::MAX;

/// One independent unit of work. Its seed depends only on its index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub index: usize,
    pub seed: u64,
    pub energy: Option<f64>,
    pub size: Option<usize>,
    pub replica: Option<u64>,
}

pub fn plan(cfg: &ExperimentConfig) -> Vec<Task> {
    let energies = cfg.energy_values();
    let mut labels: Vec<(Option<f64>, Option<usize>, Option<u64>)> = Vec::new();
    match cfg.experiment {
        Experiment::LyapunovSpectrum | Experiment::GreenOracle => {
            for &e in &energies {
                for &n in &cfg.sizes {
                    labels.push((Some(e), Some(n), None));
                }
            }
        }
        Experiment::LdpTail | Experiment::Wegner => labels.extend(energies.iter().map(|&e| (Some(e), None, None))),
        Experiment::ResonanceMap => {
            for &e in &energies {
                for &n in &cfg.sizes {
                    labels.extend((0..cfg.replicas as u64).map(|r| (Some(e), Some(n), Some(r))));
                }
            }
        }
        Experiment::DecayRates | Experiment::Correlator | Experiment::FractionalMoment => {
            for &n in &cfg.sizes {
                labels.extend((0..cfg.replicas as u64).map(|r| (None, Some(n), Some(r))));
            }
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(index, (energy, size, replica))| Task {
            index,
            seed: task_seed(cfg.seed, index as u64),
            energy,
            size,
            replica,
        })
        .collect()
}

/// Reference exponents computed before any task runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct References {
    pub seed: u64,
    /// Ascending in energy.
    pub estimates: Vec<LyapunovEstimate>,
}

impl References {
    pub fn none() -> Self {
        References { seed: 0, estimates: Vec::new() }
    }

    pub fn gamma_w(&self, energy: f64) -> Option<f64> {
        self.estimates.iter().find(|r| r.energy == energy).map(LyapunovEstimate::gamma_w)
    }

    pub fn grid(&self) -> Option<GammaGrid> {
        GammaGrid::from_points(self.estimates.iter().map(|r| (r.energy, r.gamma_w())).collect()).ok()
    }
}

pub fn reference_seed(cfg: &ExperimentConfig) -> u64 {
    task_seed(cfg.seed, REFERENCE_INDEX)
}

/// Reference `γ̂` at every grid energy, or on an adaptive grid over the
/// interval for interval experiments.
pub fn compute_references(cfg: &ExperimentConfig, cache: &ReferenceCache) -> anyhow::Result<References> {
    if !cfg.experiment.needs_reference() {
        return Ok(References::none());
    }
    let seed = reference_seed(cfg);
    let o = &cfg.options;
    let estimate = |e: f64| {
        cache.get_or_compute(&cfg.ensemble, e, || {
            log::info!("reference exponents at E = {e}");
            estimate_spectrum::<f64>(&cfg.ensemble, e, o.reference_steps, o.reference_replicas, o.reorth_period, seed)
        })
    };
    let mut estimates = Vec::new();
    if cfg.experiment.uses_interval() {
        let (lo, hi) = cfg.interval();
        GammaGrid::build(lo, hi, o.grid_tau, o.grid_max_points, |e| {
            let r = estimate(e)?;
            let g = r.gamma_w();
            estimates.push(r);
            Ok(g)
        })?;
    } else {
        for e in cfg.energy_values() {
            estimates.push(estimate(e)?);
        }
    }
    estimates.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(References { seed, estimates })
}

/// `τ` at energy `e`: the absolute value, or a fraction of `γ̂_W(e)`.
pub fn tau_at(cfg: &ExperimentConfig, refs: &References, e: f64) -> anyhow::Result<(f64, f64)> {
    let gamma = refs.gamma_w(e).ok_or_else(|| anyhow!("no reference exponent at E = {e}"))?;
    let tau = match (cfg.tau, cfg.tau_fraction) {
        (Some(t), _) => t,
        (None, Some(f)) => f * gamma,
        (None, None) => bail!("tau: required"),
    };
    Ok((tau, gamma))
}

/// Checks that need the reference exponents; run before any task.
pub fn validate_with_references(cfg: &ExperimentConfig, refs: &References) -> anyhow::Result<()> {
    if cfg.experiment == Experiment::ResonanceMap {
        let mut bad = Vec::new();
        for e in cfg.energy_values() {
            let (tau, gamma) = tau_at(cfg, refs, e)?;
            if !(tau < gamma) {
                bad.push(format!("tau: {tau} is not below the reference gammaW = {gamma:.6} at E = {e}"));
            }
        }
        if !bad.is_empty() {
            bail!("invalid config:\n  {}", bad.join("\n  "));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenOracleResult {
    pub energy: f64,
    pub n: usize,
    pub instances: usize,
    /// Instances refused as near-singular or degenerate.
    pub skipped: usize,
    pub psi: f64,
    pub x_reconstruction: f64,
    pub x_symmetry: f64,
    pub x_boundary: f64,
    pub green_symmetry: f64,
    /// Median of `‖G(0, N)‖` over the compared instances.
    pub far_norm_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEntry {
    pub energy: f64,
    pub peak_site: i64,
    pub left_slope: Option<f64>,
    pub right_slope: Option<f64>,
    pub rate: f64,
    /// Reference `γ̂_W` interpolated at the eigenvalue.
    pub gamma: f64,
    pub edge_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayResult {
    pub window: Window,
    pub entries: Vec<DecayEntry>,
    /// Eigenpairs without enough resolvable sites on either side.
    pub unfit: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorResult {
    pub window: Window,
    pub x: i64,
    /// `|x − y|` for `y = x + d`, from 0 to the end of the fit range.
    pub distances: Vec<i64>,
    pub values: Vec<f64>,
    /// `log value` against `d` over the fit range.
    pub fit: Option<LineFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalResult {
    pub window: Window,
    pub probes: Vec<FractionalProbe>,
}

fn to_value<R: Serialize>(r: &R) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(r)?)
}

fn box_window(n: usize) -> Window {
    Window { lo: 0, hi: n as i64 - 1 }
}

/// Run one task; the payload is the experiment's result type as JSON.
pub fn execute(cfg: &ExperimentConfig, refs: &References, task: &Task) -> anyhow::Result<serde_json::Value> {
    let spec = &cfg.ensemble;
    let o = &cfg.options;
    let energy = task.energy.unwrap_or(f64::NAN);
    let size = task.size.unwrap_or(0);
    let replica = task.replica.unwrap_or(0);
    match cfg.experiment {
        Experiment::LyapunovSpectrum => {
            to_value(&estimate_spectrum::<f64>(spec, energy, size, cfg.replicas, o.reorth_period, task.seed)?)
        }
        Experiment::LdpTail => {
            let gamma = refs.gamma_w(energy).ok_or_else(|| anyhow!("no reference exponent at E = {energy}"))?;
            let eps = cfg.epsilon.unwrap_or_else(|| cfg.epsilon_fraction.unwrap_or(0.0) * gamma);
            to_value(&ldp_tail::<f64>(spec, energy, eps, &cfg.sizes, cfg.replicas, None, gamma, task.seed)?)
        }
        Experiment::GreenOracle => to_value(&green_oracle_task(cfg, task.seed, energy, size)?),
        Experiment::Wegner => {
            let eps = cfg.epsilon.ok_or_else(|| anyhow!("epsilon: required"))?;
            to_value(&wegner_sample::<f64>(spec, energy, &cfg.sizes, cfg.replicas, eps, task.seed)?)
        }
        Experiment::ResonanceMap => {
            let (tau, gamma) = tau_at(cfg, refs, energy)?;
            let half = o.scan_half_width.unwrap_or((size * size) as i64);
            let scan = Window::centered(0, half);
            let real = sample_realization::<f64>(spec, Window::centered(0, half + size as i64), task.seed, replica)?;
            to_value(&resonance_set(&real, tau, energy, size, scan, gamma)?)
        }
        Experiment::DecayRates => {
            let grid = refs.grid().ok_or_else(|| anyhow!("no reference grid"))?;
            let window = box_window(size);
            let real = sample_realization::<f64>(spec, window, task.seed, replica)?;
            let spectrum = Spectrum::of(&assemble(&real, window)?)?;
            let mut entries = Vec::new();
            let mut unfit = 0;
            for k in spectrum.indices_in(cfg.interval()) {
                match decay_fit(&spectrum.pair(k)) {
                    Ok(f) => entries.push(DecayEntry {
                        energy: f.energy,
                        peak_site: f.peak_site,
                        left_slope: f.left.as_ref().map(|s| s.slope),
                        right_slope: f.right.as_ref().map(|s| s.slope),
                        rate: f.decay_rate(),
                        gamma: grid.interpolate(f.energy),
                        edge_state: f.edge_state,
                    }),
                    Err(Error::InsufficientRange(_)) => unfit += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            to_value(&DecayResult { window, entries, unfit })
        }
        Experiment::Correlator => {
            let window = box_window(size);
            let real = sample_realization::<f64>(spec, window, task.seed, replica)?;
            let spectrum = Spectrum::of(&assemble(&real, window)?)?;
            let x = window.lo + cfg.probe_offset(size);
            let (a, b) = o.fit_range;
            let distances: Vec<i64> = (0..=b).collect();
            let values =
                distances.iter().map(|&d| correlator_value(&spectrum, cfg.interval(), x, x + d)).collect::<Result<Vec<_>, _>>()?;
            let (xs, ys): (Vec<f64>, Vec<f64>) = distances
                .iter()
                .zip(&values)
                .filter(|&(&d, &v)| d >= a && v > 0.0)
                .map(|(&d, &v)| (d as f64, v.ln()))
                .unzip();
            to_value(&CorrelatorResult { window, x, distances, values, fit: fit_line(&xs, &ys) })
        }
        Experiment::FractionalMoment => {
            let window = box_window(size);
            let real = sample_realization::<f64>(spec, window, task.seed, replica)?;
            let spectrum = Spectrum::of(&assemble(&real, window)?)?;
            let x = window.lo + cfg.probe_offset(size);
            let probes = o
                .separations
                .iter()
                .map(|&d| fractional_moment_probe(&spectrum, cfg.interval(), x, x + d, &o.epsilons, o.quadrature_nodes))
                .collect::<Result<Vec<_>, _>>()?;
            to_value(&FractionalResult { window, probes })
        }
    }
}

fn green_oracle_task(cfg: &ExperimentConfig, seed: u64, energy: f64, n: usize) -> anyhow::Result<GreenOracleResult> {
    let mut out = GreenOracleResult {
        energy,
        n,
        instances: cfg.replicas,
        skipped: 0,
        psi: 0.0,
        x_reconstruction: 0.0,
        x_symmetry: 0.0,
        x_boundary: 0.0,
        green_symmetry: 0.0,
        far_norm_median: None,
    };
    let mut far = Vec::with_capacity(cfg.replicas);
    for r in 0..cfg.replicas as u64 {
        let real = sample_realization::<f64>(&cfg.ensemble, Window::centered(0, n as i64 + 1), seed, r)?;
        match green_oracle(&real, 0, n, energy) {
            Ok(m) => {
                out.psi = out.psi.max(m.psi);
                out.x_reconstruction = out.x_reconstruction.max(m.x_reconstruction);
                out.x_symmetry = out.x_symmetry.max(m.x_symmetry);
                out.x_boundary = out.x_boundary.max(m.x_boundary);
                out.green_symmetry = out.green_symmetry.max(m.green_symmetry);
                far.push(m.far_norm);
            }
            Err(Error::NearSingular { .. } | Error::Degenerate { .. }) => out.skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    out.far_norm_median = median(&far);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use striplab::model::EnsembleSpec;

    fn cfg(experiment: &str, sizes: &[usize], replicas: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(
            &serde_json::json!({
                "experiment": experiment,
                "ensemble": EnsembleSpec::free_strip(1),
                "energies": {"lo": -1.0, "hi": 1.0, "points": 3},
                "sizes": sizes,
                "replicas": replicas,
                "seed": 9,
                "tau": 0.01,
                "epsilon": 0.1
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn plan_enumerates_energy_size_replica() {
        let c = cfg("resonance-map", &[2, 3], 4);
        let tasks = plan(&c);
        assert_eq!(tasks.len(), 3 * 2 * 4);
        assert!(tasks.iter().enumerate().all(|(k, t)| t.index == k && t.seed == task_seed(9, k as u64)));
        assert_eq!(tasks[5].energy, Some(-1.0));
        assert_eq!(tasks[5].size, Some(3));
        assert_eq!(tasks[5].replica, Some(1));
    }

    #[test]
    fn plan_depends_only_on_config() {
        let c = cfg("lyapunov-spectrum", &[100, 200], 2);
        assert_eq!(plan(&c), plan(&c));
        assert_eq!(plan(&c).len(), 6);
    }

    #[test]
    fn green_oracle_task_reports_mismatches() {
        let mut c = cfg("green-oracle", &[4], 5);
        c.ensemble = EnsembleSpec::anderson_strip(2, striplab::model::ScalarLaw::Uniform { lo: -1.0, hi: 1.0 });
        let r = green_oracle_task(&c, 3, 0.3, 4).unwrap();
        assert_eq!(r.instances, 5);
        assert!(r.psi < 1e-6 && r.x_boundary < 1e-10);
        assert!(r.far_norm_median.is_some());
    }
}
