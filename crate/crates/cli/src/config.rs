//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use striplab::lyapunov::{DEFAULT_REORTH_PERIOD, REFERENCE_REPLICAS, REFERENCE_STEPS};
use striplab::localization::{DEFAULT_EPSILONS, MAX_EIGEN_DIM};
use striplab::model::EnsembleSpec;
use striplab::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LyapunovSpectrum,
    LdpTail,
    GreenOracle,
    Wegner,
    ResonanceMap,
    DecayRates,
    Correlator,
    FractionalMoment,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::LyapunovSpectrum => "lyapunov-spectrum",
            Experiment::LdpTail => "ldp-tail",
            Experiment::GreenOracle => "green-oracle",
            Experiment::Wegner => "wegner",
            Experiment::ResonanceMap => "resonance-map",
            Experiment::DecayRates => "decay-rates",
            Experiment::Correlator => "correlator",
            Experiment::FractionalMoment => "fractional-moment",
        }
    }

    /// Experiments that take an energy interval `[lo, hi]` rather than a grid.
    pub fn uses_interval(self) -> bool {
        matches!(self, Experiment::DecayRates | Experiment::Correlator | Experiment::FractionalMoment)
    }

    /// Experiments that need reference exponents before the tasks run.
    pub fn needs_reference(self) -> bool {
        matches!(
            self,
            Experiment::LdpTail | Experiment::ResonanceMap | Experiment::DecayRates | Experiment::Correlator
        )
    }
}

/// `points` equally spaced energies from `lo` to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl EnergyGrid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.lo],
            p => (0..p).map(|k| self.lo + (self.hi - self.lo) * k as f64 / (p - 1) as f64).collect(),
        }
    }
}

/// Per-experiment knobs with defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    pub reorth_period: usize,
    pub reference_steps: usize,
    pub reference_replicas: usize,
    /// Spacing criterion of the reference `γ_W` grid (interval experiments).
    pub grid_tau: f64,
    pub grid_max_points: usize,
    /// Half-width of the resonance scan window; `N²` when absent.
    pub scan_half_width: Option<i64>,
    /// Site `x` of the correlator and fractional-moment probes, as an offset
    /// from the left end of the box; centred when absent.
    pub probe_offset: Option<i64>,
    /// Distances `|x − y|` fitted by the correlator experiment.
    pub fit_range: (i64, i64),
    /// Distances `|x − y|` probed by the fractional-moment experiment.
    pub separations: Vec<i64>,
    pub epsilons: Vec<f64>,
    pub quadrature_nodes: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            reorth_period: DEFAULT_REORTH_PERIOD,
            reference_steps: REFERENCE_STEPS,
            reference_replicas: REFERENCE_REPLICAS,
            grid_tau: 0.01,
            grid_max_points: 33,
            scan_half_width: None,
            probe_offset: None,
            fit_range: (20, 80),
            separations: vec![0, 2, 4, 8],
            epsilons: DEFAULT_EPSILONS.to_vec(),
            quadrature_nodes: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub ensemble: EnsembleSpec,
    pub energies: EnergyGrid,
    /// Lengths `N` (steps, half-widths or box lengths depending on the
    /// experiment).
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub seed: u64,
    /// Absolute `τ` of the resonance map.
    #[serde(default)]
    pub tau: Option<f64>,
    /// `τ` as a fraction of the reference `γ_W(E)`.
    #[serde(default)]
    pub tau_fraction: Option<f64>,
    /// Absolute `ε` of the tail and Wegner experiments.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// `ε` as a fraction of the reference `γ_W(E)` (tail experiment).
    #[serde(default)]
    pub epsilon_fraction: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub options: Options,
}

fn field(errors: &mut Vec<String>, name: &str, msg: impl std::fmt::Display) {
    errors.push(format!("{name}: {msg}"));
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialization with `output_dir` removed, so
    /// that redirecting the output does not change the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        crate::runner::hex(text.as_bytes())
    }

    /// `[lo, hi]` of the interval experiments.
    pub fn interval(&self) -> (f64, f64) {
        (self.energies.lo, self.energies.hi)
    }

    pub fn energy_values(&self) -> Vec<f64> {
        if self.experiment.uses_interval() {
            Vec::new()
        } else {
            self.energies.values()
        }
    }

    /// Largest `|x − y|` probed by the correlator or fractional-moment run.
    pub fn probe_reach(&self) -> i64 {
        match self.experiment {
            Experiment::Correlator => self.options.fit_range.1,
            _ => self.options.separations.iter().copied().max().unwrap_or(0),
        }
    }

    /// Probe site offset from the left end of a box of `len` sites; by
    /// default the probe pair is centred in the box.
    pub fn probe_offset(&self, len: usize) -> i64 {
        self.options.probe_offset.unwrap_or((len as i64 - 1 - self.probe_reach()) / 2)
    }

    /// Every violated constraint, one `field: message` line each.
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut e = Vec::new();
        if let Err(err) = self.ensemble.validate() {
            field(&mut e, "ensemble", err);
        }
        let g = &self.energies;
        if !(g.lo.is_finite() && g.hi.is_finite()) || g.lo > g.hi {
            field(&mut e, "energies", format!("need finite lo <= hi, got [{}, {}]", g.lo, g.hi));
        }
        if g.points == 0 {
            field(&mut e, "energies.points", "must be at least 1");
        }
        if g.points == 1 && g.lo != g.hi && !self.experiment.uses_interval() {
            field(&mut e, "energies.points", "a single point needs lo == hi");
        }
        if self.experiment.uses_interval() && g.lo >= g.hi {
            field(&mut e, "energies", "interval experiments need lo < hi");
        }
        if self.sizes.is_empty() {
            field(&mut e, "sizes", "must list at least one size");
        }
        if self.sizes.contains(&0) {
            field(&mut e, "sizes", "sizes must be positive");
        }
        if self.replicas == 0 {
            field(&mut e, "replicas", "must be at least 1");
        }
        let o = &self.options;
        if o.reorth_period == 0 {
            field(&mut e, "options.reorth_period", "must be at least 1");
        }
        if self.experiment.needs_reference() {
            if o.reference_steps < o.reorth_period {
                field(&mut e, "options.reference_steps", "must be at least reorth_period");
            }
            if o.reference_replicas == 0 {
                field(&mut e, "options.reference_replicas", "must be at least 1");
            }
        }
        let w = self.ensemble.width;
        match self.experiment {
            Experiment::LyapunovSpectrum => {
                if let Some(&n) = self.sizes.iter().find(|&&n| n < o.reorth_period) {
                    field(&mut e, "sizes", format!("{n} is shorter than reorth_period {}", o.reorth_period));
                }
            }
            Experiment::LdpTail => {
                self.check_epsilon(&mut e, true);
                if self.sizes.windows(2).any(|p| p[0] >= p[1]) {
                    field(&mut e, "sizes", "must be strictly increasing");
                }
            }
            Experiment::GreenOracle => {
                if let Some(&n) = self.sizes.iter().find(|&&n| n > 99) {
                    field(&mut e, "sizes", format!("half-width {n} exceeds 99 (transfer products are capped at 200 steps)"));
                }
            }
            Experiment::Wegner => {
                self.check_epsilon(&mut e, false);
                self.check_dim(&mut e, |n| w * (2 * n + 1));
            }
            Experiment::ResonanceMap => {
                match (self.tau, self.tau_fraction) {
                    (Some(_), Some(_)) => field(&mut e, "tau", "give either tau or tau_fraction, not both"),
                    (None, None) => field(&mut e, "tau", "required (or tau_fraction)"),
                    (Some(t), None) if !(t > 0.0) => field(&mut e, "tau", format!("must be positive, got {t}")),
                    (None, Some(f)) if !(f > 0.0 && f < 1.0) => {
                        field(&mut e, "tau_fraction", format!("must lie in (0, 1), got {f}"))
                    }
                    _ => {}
                }
                if matches!(o.scan_half_width, Some(h) if h < 0) {
                    field(&mut e, "options.scan_half_width", "must be non-negative");
                }
            }
            Experiment::DecayRates | Experiment::Correlator | Experiment::FractionalMoment => {
                self.check_dim(&mut e, |n| w * n);
                if !(o.grid_tau > 0.0) && self.experiment != Experiment::FractionalMoment {
                    field(&mut e, "options.grid_tau", "must be positive");
                }
                if self.experiment == Experiment::DecayRates {
                    if let Some(&n) = self.sizes.iter().find(|&&n| n < 40) {
                        field(&mut e, "sizes", format!("box of {n} sites is shorter than 40"));
                    }
                }
                let (a, b) = o.fit_range;
                if self.experiment == Experiment::Correlator && !(0 <= a && a < b) {
                    field(&mut e, "options.fit_range", format!("need 0 <= lo < hi, got ({a}, {b})"));
                }
                let reach = self.probe_reach();
                if self.experiment == Experiment::FractionalMoment {
                    if o.separations.is_empty() || o.separations.iter().any(|&d| d < 0) {
                        field(&mut e, "options.separations", "need at least one non-negative separation");
                    }
                    if o.epsilons.is_empty() || o.epsilons.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                        field(&mut e, "options.epsilons", "every epsilon must lie in (0, 1)");
                    }
                    if o.quadrature_nodes < 2 {
                        field(&mut e, "options.quadrature_nodes", "must be at least 2");
                    }
                }
                for &n in &self.sizes {
                    let x = self.probe_offset(n);
                    if x < 0 || x + reach >= n as i64 {
                        field(&mut e, "options.probe_offset", format!("probe {x}..{} leaves the box of {n} sites", x + reach));
                    }
                }
            }
        }
        if !e.is_empty() {
            bail!("invalid config:\n  {}", e.join("\n  "));
        }
        Ok(())
    }

    fn check_epsilon(&self, e: &mut Vec<String>, fraction_allowed: bool) {
        match (self.epsilon, self.epsilon_fraction) {
            (Some(_), Some(_)) => field(e, "epsilon", "give either epsilon or epsilon_fraction, not both"),
            (None, None) => field(e, "epsilon", "required"),
            (Some(x), None) if !(x > 0.0) => field(e, "epsilon", format!("must be positive, got {x}")),
            (None, Some(_)) if !fraction_allowed => {
                field(e, "epsilon_fraction", "not supported by this experiment; use epsilon")
            }
            (None, Some(f)) if !(f > 0.0) => field(e, "epsilon_fraction", format!("must be positive, got {f}")),
            _ => {}
        }
    }

    fn check_dim(&self, e: &mut Vec<String>, dim: impl Fn(usize) -> usize) {
        if let Some(&n) = self.sizes.iter().find(|&&n| dim(n) > MAX_EIGEN_DIM) {
            field(e, "sizes", format!("size {n} gives dimension {} above {MAX_EIGEN_DIM}", dim(n)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "experiment": "lyapunov-spectrum",
            "ensemble": serde_json::to_value(EnsembleSpec::free_strip(1)).unwrap(),
            "energies": {"lo": 3.0, "hi": 3.0, "points": 1},
            "sizes": [1000],
            "replicas": 1,
            "seed": 1
        })
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(&base().to_string()).unwrap();
        assert_eq!(cfg.options, Options::default());
        assert_eq!(cfg.energies.values(), vec![3.0]);
    }

    #[test]
    fn seed_is_mandatory() {
        let mut v = base();
        v.as_object_mut().unwrap().remove("seed");
        let err = format!("{:#}", ExperimentConfig::from_json(&v.to_string()).unwrap_err());
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn errors_name_the_field() {
        let mut v = base();
        v["replicas"] = 0.into();
        v["sizes"] = serde_json::json!([]);
        let err = format!("{:#}", ExperimentConfig::from_json(&v.to_string()).unwrap_err());
        assert!(err.contains("replicas:") && err.contains("sizes:"), "{err}");
    }

    #[test]
    fn resonance_needs_tau() {
        let mut v = base();
        v["experiment"] = "resonance-map".into();
        let err = format!("{:#}", ExperimentConfig::from_json(&v.to_string()).unwrap_err());
        assert!(err.contains("tau: required"), "{err}");
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut a = ExperimentConfig::from_json(&base().to_string()).unwrap();
        let h = a.hash();
        a.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), h);
        a.seed = 2;
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = EnergyGrid { lo: -1.0, hi: 1.0, points: 5 };
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }
}
