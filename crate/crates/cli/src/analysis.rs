//! Bundled acceptance checks, CSV tables and plots, all derived from the
//! stored records so that `report` can recompute them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use striplab::green::{ResonanceReport, WegnerSample};
use striplab::lyapunov::{LyapunovEstimate, TailFit};
use striplab::stats::{median, non_increasing_within, Proportion};

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{CorrelatorResult, DecayResult, FractionalResult, GreenOracleResult};
use crate::plot::{Plot, Series};
use crate::records::{references_from, task_payloads, Record, RecordKind};

/// Fitted decay rates must reach this fraction of `γ̂_W(λ)`.
pub const DECAY_RATE_FRACTION: f64 = 0.9;
/// Fraction of interior eigenpairs that must satisfy the rate bound.
pub const DECAY_PAIR_FRACTION: f64 = 0.9;
/// Median correlator slope must be at most `−CORRELATOR_SLOPE_FRACTION ·
/// inf_I γ̂_W`.
pub const CORRELATOR_SLOPE_FRACTION: f64 = 0.9;
/// Slack on the correlator bound `≤ W`.
pub const CORRELATOR_BOUND_SLACK: f64 = 1e-6;
/// Absolute floor of the exponent-pairing test. Single-replica runs have no
/// standard error, and between reorthogonalizations the weakest direction
/// loses about `ε_mach·e^{(γ_1 − γ_{2W})p}` to rounding.
pub const PAIRING_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub threshold: String,
    pub detail: String,
}

fn check(name: impl Into<String>, passed: bool, threshold: impl Into<String>, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, threshold: threshold.into(), detail: detail.into() }
}

/// `γ_j + γ_{2W−1−j}` (0-based) with its three-sigma allowance.
pub fn pairing(est: &LyapunovEstimate) -> Vec<(f64, f64)> {
    let m = est.exponents.len();
    (0..m / 2)
        .map(|j| {
            let k = m - 1 - j;
            let sum = est.exponents[j] + est.exponents[k];
            let se = (est.stderr[j].powi(2) + est.stderr[k].powi(2)).sqrt();
            (sum, 3.0 * se + PAIRING_FLOOR)
        })
        .collect()
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Probability that the resonance diameter exceeds `2N`, per energy and `N`.
pub fn resonance_tail(records: &[(&Record, ResonanceReport)]) -> BTreeMap<(u64, usize), Proportion> {
    let mut out: BTreeMap<(u64, usize), Proportion> = BTreeMap::new();
    for (_, r) in records {
        let p = out.entry((r.energy.to_bits(), r.n)).or_insert(Proportion { hits: 0, trials: 0 });
        p.trials += 1;
        if r.diameter > 2 * r.n as i64 {
            p.hits += 1;
        }
    }
    out
}

/// Group `(energy bits, n) → p` by energy, ordered by `n`.
fn by_energy(tail: &BTreeMap<(u64, usize), Proportion>) -> BTreeMap<u64, Vec<(usize, Proportion)>> {
    let mut out: BTreeMap<u64, Vec<(usize, Proportion)>> = BTreeMap::new();
    for (&(e, n), &p) in tail {
        out.entry(e).or_default().push((n, p));
    }
    for v in out.values_mut() {
        v.sort_by_key(|x| x.0);
    }
    out
}

fn sorted_energy(bits: u64) -> f64 {
    f64::from_bits(bits)
}

/// Every bundled check of the experiment, preceded by the task-status check.
pub fn evaluate(cfg: &ExperimentConfig, records: &[Record]) -> anyhow::Result<Vec<Check>> {
    let tasks: Vec<&Record> = records.iter().filter(|r| r.kind == RecordKind::Task).collect();
    let failed: Vec<String> = tasks.iter().filter(|r| !r.ok).map(|r| format!("#{}", r.index)).collect();
    let mut checks = vec![check(
        "tasks",
        failed.is_empty() && !tasks.is_empty(),
        "every task succeeds",
        if failed.is_empty() {
            format!("{} tasks succeeded", tasks.len())
        } else {
            format!("{} of {} tasks failed: {}", failed.len(), tasks.len(), failed.join(" "))
        },
    )];
    let tol = &cfg.tolerances;
    match cfg.experiment {
        Experiment::LyapunovSpectrum => {
            for (r, est) in task_payloads::<LyapunovEstimate>(records)? {
                let pairs = pairing(&est);
                let worst = pairs.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
                checks.push(check(
                    format!("symmetry E={} N={}", est.energy, r.size.unwrap_or(est.steps)),
                    pairs.iter().all(|&(s, allow)| s.abs() <= allow),
                    format!("|gamma_j + gamma_(2W+1-j)| <= 3 combined stderr + {PAIRING_FLOOR:e}"),
                    format!("exponents {} stderr {} max pair sum {worst:.3e}", fmt_list(&est.exponents), fmt_list(&est.stderr)),
                ));
            }
        }
        Experiment::LdpTail => {
            for (_, fit) in task_payloads::<TailFit>(records)? {
                let slope_ok = fit.slope.is_none_or(|s| s < 0.0);
                let detail = match (fit.slope, fit.rate_lower_bound) {
                    (Some(s), _) => format!("tail {} slope {s:.4e}", fmt_list(&fit.tail_probabilities())),
                    (None, Some(b)) => format!("tail {} rate >= {b:.4e}", fmt_list(&fit.tail_probabilities())),
                    _ => format!("tail {}", fmt_list(&fit.tail_probabilities())),
                };
                checks.push(check(
                    format!("tail E={} eps={:.4e}", fit.energy, fit.epsilon),
                    fit.monotone && slope_ok,
                    "non-increasing within 2 binomial stderr; fitted log-tail slope < 0",
                    detail,
                ));
            }
        }
        Experiment::GreenOracle => {
            for (_, g) in task_payloads::<GreenOracleResult>(records)? {
                let passed = g.skipped < g.instances
                    && g.psi <= tol.green_oracle
                    && g.x_reconstruction <= tol.green_oracle
                    && g.x_symmetry <= tol.x_symmetry
                    && g.x_boundary <= tol.x_boundary
                    && g.green_symmetry <= tol.green_symmetry;
                checks.push(check(
                    format!("oracle E={} N={}", g.energy, g.n),
                    passed,
                    format!(
                        "psi, X reconstruction <= {:e}; X symmetry <= {:e}; X boundary <= {:e}; G symmetry <= {:e}",
                        tol.green_oracle, tol.x_symmetry, tol.x_boundary, tol.green_symmetry
                    ),
                    format!(
                        "psi {:.2e} X {:.2e} Xsym {:.2e} Xbnd {:.2e} Gsym {:.2e} ({} of {} skipped)",
                        g.psi, g.x_reconstruction, g.x_symmetry, g.x_boundary, g.green_symmetry, g.skipped, g.instances
                    ),
                ));
            }
        }
        Experiment::Wegner => {
            for (_, w) in task_payloads::<WegnerSample>(records)? {
                let freq: Vec<f64> = w.frequency.iter().map(Proportion::value).collect();
                checks.push(check(
                    format!("wegner E={} eps={}", w.energy, w.epsilon),
                    w.monotone,
                    "frequency non-increasing in N within 2 binomial stderr",
                    format!("N {:?} frequency {}", w.ns, fmt_list(&freq)),
                ));
            }
        }
        Experiment::ResonanceMap => {
            let reports = task_payloads::<ResonanceReport>(records)?;
            for (e, series) in by_energy(&resonance_tail(&reports)) {
                let props: Vec<Proportion> = series.iter().map(|s| s.1).collect();
                let ns: Vec<usize> = series.iter().map(|s| s.0).collect();
                let values: Vec<f64> = props.iter().map(Proportion::value).collect();
                checks.push(check(
                    format!("resonance E={}", sorted_energy(e)),
                    non_increasing_within(&props, 2.0),
                    "P{diam > 2N} non-increasing in N within 2 binomial stderr",
                    format!("N {ns:?} P {}", fmt_list(&values)),
                ));
            }
        }
        Experiment::DecayRates => {
            let results = task_payloads::<DecayResult>(records)?;
            let interior: Vec<_> = results.iter().flat_map(|(_, d)| d.entries.iter()).filter(|e| !e.edge_state).collect();
            let good = interior.iter().filter(|e| e.rate >= DECAY_RATE_FRACTION * e.gamma).count();
            let frac = if interior.is_empty() { 0.0 } else { good as f64 / interior.len() as f64 };
            let unfit: usize = results.iter().map(|(_, d)| d.unfit).sum();
            checks.push(check(
                "decay rates",
                !interior.is_empty() && frac >= DECAY_PAIR_FRACTION,
                format!(">= {DECAY_PAIR_FRACTION} of interior eigenpairs with rate >= {DECAY_RATE_FRACTION} gammaW(lambda)"),
                format!("{good} of {} interior pairs ({frac:.3}); {unfit} pairs without a fit", interior.len()),
            ));
        }
        Experiment::Correlator => {
            let results = task_payloads::<CorrelatorResult>(records)?;
            let grid = references_from(records)?.grid().ok_or_else(|| anyhow::anyhow!("no reference records"))?;
            let (lo, hi) = cfg.interval();
            let gamma_inf = grid.min_over(lo, hi);
            let slopes: Vec<f64> = results.iter().filter_map(|(_, c)| c.fit.map(|f| f.slope)).collect();
            let med = median(&slopes);
            let bound = -CORRELATOR_SLOPE_FRACTION * gamma_inf;
            checks.push(check(
                "correlator slope",
                med.is_some_and(|m| m <= bound),
                format!("median slope over d in {:?} <= -{CORRELATOR_SLOPE_FRACTION} inf gammaW = {bound:.5}", cfg.options.fit_range),
                match med {
                    Some(m) => format!("median slope {m:.5} over {} replicas", slopes.len()),
                    None => "no fitted slopes".into(),
                },
            ));
            let max = results.iter().flat_map(|(_, c)| c.values.iter().copied()).fold(0.0, f64::max);
            let w = cfg.ensemble.width as f64;
            checks.push(check(
                "correlator bound",
                max <= w + CORRELATOR_BOUND_SLACK,
                format!("every value <= W + {CORRELATOR_BOUND_SLACK:e} = {}", w + CORRELATOR_BOUND_SLACK),
                format!("max value {max:.6}"),
            ));
        }
        Experiment::FractionalMoment => {
            let results = task_payloads::<FractionalResult>(records)?;
            let probes: Vec<_> = results.iter().flat_map(|(_, f)| f.probes.iter()).collect();
            let max_corr = probes.iter().map(|p| p.correlator).fold(0.0, f64::max);
            let finite = probes.iter().flat_map(|p| p.moments.iter()).all(|m| m.value.is_finite() && m.value >= 0.0);
            let warnings = probes.iter().flat_map(|p| p.moments.iter()).filter(|m| m.warning.is_some()).count();
            let w = cfg.ensemble.width as f64;
            checks.push(check(
                "fractional moments",
                finite && max_corr <= w + CORRELATOR_BOUND_SLACK,
                format!("finite non-negative moments; correlator <= W + {CORRELATOR_BOUND_SLACK:e}"),
                format!("{} probes, max correlator {max_corr:.6}, {warnings} quadrature warnings", probes.len()),
            ));
        }
    }
    Ok(checks)
}

/// A CSV table: header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn column(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("known column")
    }

    /// `(x, y)` pairs of two numeric columns, filtered by `keep`.
    fn xy(&self, x: &str, y: &str, keep: impl Fn(&[String]) -> bool) -> Vec<(f64, f64)> {
        let (i, j) = (self.column(x), self.column(y));
        self.rows
            .iter()
            .filter(|r| keep(r))
            .filter_map(|r| Some((r[i].parse().ok()?, r[j].parse().ok()?)))
            .collect()
    }

    fn distinct(&self, col: &str) -> Vec<String> {
        let k = self.column(col);
        let mut seen: Vec<String> = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r[k]) {
                seen.push(r[k].clone());
            }
        }
        seen
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn tables(cfg: &ExperimentConfig, records: &[Record]) -> anyhow::Result<Vec<Table>> {
    let name = cfg.experiment.name();
    let mut out = Vec::new();
    match cfg.experiment {
        Experiment::LyapunovSpectrum => {
            let mut t = Table::new(name, &["energy", "n", "j", "gamma", "stderr"]);
            for (r, est) in task_payloads::<LyapunovEstimate>(records)? {
                for (j, (g, s)) in est.exponents.iter().zip(&est.stderr).enumerate() {
                    t.push(vec![num(est.energy), r.size.unwrap_or(est.steps).to_string(), (j + 1).to_string(), num(*g), num(*s)]);
                }
            }
            out.push(t);
        }
        Experiment::LdpTail => {
            let mut t = Table::new(name, &["energy", "epsilon", "n", "hits", "trials", "probability", "stderr"]);
            for (_, fit) in task_payloads::<TailFit>(records)? {
                for (n, p) in fit.ns.iter().zip(&fit.tail) {
                    t.push(vec![
                        num(fit.energy),
                        num(fit.epsilon),
                        n.to_string(),
                        p.hits.to_string(),
                        p.trials.to_string(),
                        num(p.value()),
                        num(p.stderr()),
                    ]);
                }
            }
            out.push(t);
        }
        Experiment::GreenOracle => {
            let mut t = Table::new(
                name,
                &["energy", "n", "instances", "skipped", "psi", "x_reconstruction", "x_symmetry", "x_boundary", "green_symmetry", "far_norm_median"],
            );
            for (_, g) in task_payloads::<GreenOracleResult>(records)? {
                t.push(vec![
                    num(g.energy),
                    g.n.to_string(),
                    g.instances.to_string(),
                    g.skipped.to_string(),
                    num(g.psi),
                    num(g.x_reconstruction),
                    num(g.x_symmetry),
                    num(g.x_boundary),
                    num(g.green_symmetry),
                    opt(g.far_norm_median),
                ]);
            }
            out.push(t);
        }
        Experiment::Wegner => {
            let mut t = Table::new(name, &["energy", "epsilon", "n", "hits", "trials", "frequency", "stderr"]);
            for (_, w) in task_payloads::<WegnerSample>(records)? {
                for (n, p) in w.ns.iter().zip(&w.frequency) {
                    t.push(vec![
                        num(w.energy),
                        num(w.epsilon),
                        n.to_string(),
                        p.hits.to_string(),
                        p.trials.to_string(),
                        num(p.value()),
                        num(p.stderr()),
                    ]);
                }
            }
            out.push(t);
        }
        Experiment::ResonanceMap => {
            let reports = task_payloads::<ResonanceReport>(records)?;
            let mut map = Table::new(name, &["site", "energy", "n", "replica", "resonant"]);
            for (r, rep) in reports.iter().filter(|(r, _)| r.replica == Some(0)) {
                for x in rep.window.sites() {
                    map.push(vec![
                        x.to_string(),
                        num(rep.energy),
                        rep.n.to_string(),
                        r.replica.unwrap_or(0).to_string(),
                        u8::from(rep.is_resonant(x)).to_string(),
                    ]);
                }
            }
            let mut summary = Table::new(&format!("{name}-summary"), &["energy", "n", "hits", "trials", "probability", "stderr"]);
            for ((e, n), p) in resonance_tail(&reports) {
                summary.push(vec![
                    num(sorted_energy(e)),
                    n.to_string(),
                    p.hits.to_string(),
                    p.trials.to_string(),
                    num(p.value()),
                    num(p.stderr()),
                ]);
            }
            out.push(map);
            out.push(summary);
        }
        Experiment::DecayRates => {
            let mut t = Table::new(
                name,
                &["replica", "energy", "peak_site", "left_slope", "right_slope", "rate", "gamma", "edge_state"],
            );
            for (r, d) in task_payloads::<DecayResult>(records)? {
                for e in &d.entries {
                    t.push(vec![
                        r.replica.unwrap_or(0).to_string(),
                        num(e.energy),
                        e.peak_site.to_string(),
                        opt(e.left_slope),
                        opt(e.right_slope),
                        num(e.rate),
                        num(e.gamma),
                        e.edge_state.to_string(),
                    ]);
                }
            }
            out.push(t);
            out.push(reference_table(&format!("{name}-reference"), records)?);
        }
        Experiment::Correlator => {
            let results = task_payloads::<CorrelatorResult>(records)?;
            let mut t = Table::new(name, &["replica", "x", "distance", "value"]);
            for (r, c) in &results {
                for (d, v) in c.distances.iter().zip(&c.values) {
                    t.push(vec![r.replica.unwrap_or(0).to_string(), c.x.to_string(), d.to_string(), num(*v)]);
                }
            }
            let mut m = Table::new(&format!("{name}-median"), &["distance", "median"]);
            if let Some((_, first)) = results.first() {
                for (k, d) in first.distances.iter().enumerate() {
                    let col: Vec<f64> = results.iter().filter_map(|(_, c)| c.values.get(k).copied()).collect();
                    m.push(vec![d.to_string(), opt(median(&col))]);
                }
            }
            out.push(t);
            out.push(m);
        }
        Experiment::FractionalMoment => {
            let mut t = Table::new(
                name,
                &["replica", "x", "y", "epsilon", "value", "quadrature_error", "correlator", "warning"],
            );
            for (r, f) in task_payloads::<FractionalResult>(records)? {
                for p in &f.probes {
                    for m in &p.moments {
                        t.push(vec![
                            r.replica.unwrap_or(0).to_string(),
                            p.x.to_string(),
                            p.y.to_string(),
                            num(m.epsilon),
                            num(m.value),
                            num(m.quadrature_error),
                            num(p.correlator),
                            m.warning.clone().unwrap_or_default(),
                        ]);
                    }
                }
            }
            out.push(t);
        }
    }
    Ok(out)
}

fn reference_table(name: &str, records: &[Record]) -> anyhow::Result<Table> {
    let mut t = Table::new(name, &["energy", "gamma_w", "stderr"]);
    for r in references_from(records)?.estimates {
        t.push(vec![num(r.energy), num(r.gamma_w()), num(r.gamma_w_stderr())]);
    }
    Ok(t)
}

fn find<'a>(tables: &'a [Table], name: &str) -> Option<&'a Table> {
    tables.iter().find(|t| t.name == name)
}

/// Line plots drawn from the tables.
pub fn plots(cfg: &ExperimentConfig, tables: &[Table]) -> Vec<(String, Plot)> {
    let name = cfg.experiment.name();
    let Some(main) = find(tables, name) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    match cfg.experiment {
        Experiment::LyapunovSpectrum => {
            let mut p = Plot::new("Lyapunov spectrum", "energy", "gamma_j");
            let largest_n = main.distinct("n").last().cloned().unwrap_or_default();
            for j in main.distinct("j") {
                let pts = main.xy("energy", "gamma", |r| r[1] == largest_n && r[2] == j);
                p = p.with(if pts.len() > 1 { Series::line(format!("j = {j}"), pts) } else { Series::markers(format!("j = {j}"), pts) });
            }
            out.push((name.to_string(), p));
        }
        Experiment::LdpTail | Experiment::Wegner => {
            let (title, y) = if cfg.experiment == Experiment::LdpTail {
                ("Large-deviation tail", "probability")
            } else {
                ("Wegner exceedance frequency", "frequency")
            };
            let mut p = Plot::new(title, "N", y).log_y();
            for e in main.distinct("energy") {
                p = p.with(Series::line(format!("E = {e}"), main.xy("n", y, |r| r[0] == e)));
            }
            out.push((name.to_string(), p));
        }
        Experiment::GreenOracle => {
            let mut p = Plot::new("Green-function decay", "N", "median |G(0, N)|").log_y();
            let mut q = Plot::new("Oracle mismatch", "N", "max relative mismatch").log_y();
            for e in main.distinct("energy") {
                p = p.with(Series::line(format!("E = {e}"), main.xy("n", "far_norm_median", |r| r[0] == e)));
                q = q.with(Series::line(format!("psi, E = {e}"), main.xy("n", "psi", |r| r[0] == e)));
                q = q.with(Series::line(format!("X, E = {e}"), main.xy("n", "x_reconstruction", |r| r[0] == e)));
            }
            out.push((name.to_string(), p));
            out.push((format!("{name}-mismatch"), q));
        }
        Experiment::ResonanceMap => {
            if let Some(s) = find(tables, &format!("{name}-summary")) {
                let mut p = Plot::new("Resonance diameter", "N", "P{diam > 2N}").log_y();
                for e in s.distinct("energy") {
                    p = p.with(Series::line(format!("E = {e}"), s.xy("n", "probability", |r| r[0] == e)));
                }
                out.push((name.to_string(), p));
            }
        }
        Experiment::DecayRates => {
            let mut p = Plot::new("Eigenfunction decay rates", "energy", "rate").with(Series::markers(
                "fitted rate",
                main.xy("energy", "rate", |r| r[7] == "false"),
            ));
            if let Some(g) = find(tables, &format!("{name}-reference")) {
                p = p.with(Series::line("reference gammaW", g.xy("energy", "gamma_w", |_| true)));
            }
            out.push((name.to_string(), p));
        }
        Experiment::Correlator => {
            if let Some(m) = find(tables, &format!("{name}-median")) {
                let p = Plot::new("Eigenfunction correlator", "|x - y|", "median correlator")
                    .log_y()
                    .with(Series::line("median over replicas", m.xy("distance", "median", |_| true)));
                out.push((name.to_string(), p));
            }
        }
        Experiment::FractionalMoment => {
            let mut p = Plot::new("Fractional moments", "epsilon", "moment").log_y();
            for y in main.distinct("y") {
                let pts = main.xy("epsilon", "value", |r| r[0] == "0" && r[2] == y);
                p = p.with(Series::line(format!("y = {y}, replica 0"), pts));
            }
            out.push((name.to_string(), p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::plan;
    use striplab::model::EnsembleSpec;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            &serde_json::json!({
                "experiment": "lyapunov-spectrum",
                "ensemble": EnsembleSpec::free_strip(1),
                "energies": {"lo": 3.0, "hi": 3.0, "points": 1},
                "sizes": [100, 200],
                "replicas": 1,
                "seed": 1
            })
            .to_string(),
        )
        .unwrap()
    }

    fn estimate(sum: f64, se: f64) -> serde_json::Value {
        serde_json::to_value(LyapunovEstimate {
            spec_hash: "x".into(),
            energy: 3.0,
            exponents: vec![0.9, sum - 0.9],
            stderr: vec![se, se],
            steps: 100,
            replicas: 1,
            reorth_period: 10,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn failed_task_fails_the_run() {
        let cfg = config();
        let tasks = plan(&cfg);
        let records = vec![
            Record::task(cfg.experiment, "h", &tasks[0], Ok(estimate(0.0, 0.0))),
            Record::task(cfg.experiment, "h", &tasks[1], Err("boom".into())),
        ];
        let checks = evaluate(&cfg, &records).unwrap();
        assert!(!checks[0].passed && checks[0].detail.contains("#1"));
        assert!(checks[1].passed);
    }

    #[test]
    fn pairing_allows_three_standard_errors() {
        let cfg = config();
        let t = plan(&cfg);
        let ok = Record::task(cfg.experiment, "h", &t[0], Ok(estimate(0.02, 0.005)));
        let bad = Record::task(cfg.experiment, "h", &t[1], Ok(estimate(0.03, 0.005)));
        let checks = evaluate(&cfg, &[ok, bad]).unwrap();
        assert!(checks[1].passed, "{:?}", checks[1]);
        assert!(!checks[2].passed, "{:?}", checks[2]);
    }
}
