//! Lyapunov spectra of the symplectic transfer cocycle.
//!
//! All long products are accumulated with periodic thin-QR
//! re-orthogonalization: the frame is pushed by conjugated one-step
//! matrices, re-orthonormalized every `reorth_period` steps, and the logs of
//! the (sign-fixed, positive) diagonal of the triangular factor are summed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EnsembleSpec;
use crate::rng::{substream, Tag};
use crate::scalar::Real;
use crate::stats::{fit_line, MeanStd, Proportion};
use crate::transfer::{q_matrix, symplectic_form};

pub const DEFAULT_REORTH_PERIOD: usize = 10;
/// Steps used for reference exponents shared by downstream modules.
pub const REFERENCE_STEPS: usize = 10_000;
pub const REFERENCE_REPLICAS: usize = 64;
/// Tail-rate fits only use lengths with at least this many exceedances.
pub const MIN_TAIL_EXCEEDANCES: usize = 5;

/// Below this magnitude a triangular diagonal entry counts as underflow.
const DEGENERATE_DIAGONAL: f64 = 1e-300;

/// Orthonormal basis of a Lagrangian subspace `F ⊂ ℝ^{2W}`, stored as the
/// `2W × W` matrix `π_F^*` (so `π_F` is its transpose).
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame<T: Real> {
    basis: DMatrix<T>,
}

impl<T: Real> LagrangianFrame<T> {
    /// Checks orthonormality (to `1e-12`) and isotropy (to `1e-10`), both
    /// relaxed proportionally to the roundoff of `T`.
    pub fn new(basis: DMatrix<T>) -> Result<Self> {
        let (rows, w) = basis.shape();
        if rows != 2 * w || w == 0 {
            return Err(Error::Config(format!("Lagrangian frame must be 2W x W, got {rows}x{w}")));
        }
        let scale = (<T as Real>::epsilon().as_f64() / f64::EPSILON).max(1.0);
        let ortho = (basis.transpose() * &basis - DMatrix::identity(w, w)).norm().as_f64();
        if ortho > 1e-12 * scale {
            return Err(Error::Config(format!("frame columns not orthonormal (defect {ortho:e})")));
        }
        let iso = isotropy_defect(&basis).as_f64();
        if iso > 1e-10 * scale {
            return Err(Error::Config(format!("frame is not isotropic (defect {iso:e})")));
        }
        Ok(LagrangianFrame { basis })
    }

    /// `F_+ = {(x, 0)ᵀ}`.
    pub fn f_plus(w: usize) -> Self {
        let mut basis = DMatrix::zeros(2 * w, w);
        basis.view_mut((0, 0), (w, w)).fill_with_identity();
        LagrangianFrame { basis }
    }

    /// `F_- = {(0, y)ᵀ}`.
    pub fn f_minus(w: usize) -> Self {
        let mut basis = DMatrix::zeros(2 * w, w);
        basis.view_mut((w, 0), (w, w)).fill_with_identity();
        LagrangianFrame { basis }
    }

    pub fn basis(&self) -> &DMatrix<T> {
        &self.basis
    }

    pub fn width(&self) -> usize {
        self.basis.ncols()
    }
}

/// `‖BᵀJB‖_F`: zero exactly when the column span of `B` is isotropic.
pub fn isotropy_defect<T: Real>(basis: &DMatrix<T>) -> T {
    let j = symplectic_form::<T>(basis.nrows() / 2);
    (basis.transpose() * j * basis).norm()
}

/// Sample a Lagrangian frame whose law is invariant under the orthogonal
/// symplectic group `Sp(2W) ∩ O(2W) ≅ U(W)`.
///
/// A Haar unitary `U = A + iB` gives the orthogonal symplectic matrix
/// `[[A, −B], [B, A]]`; its first `W` columns `[A; B]` span a Lagrangian
/// subspace.
pub fn random_lagrangian<T: Real>(w: usize, seed: u64) -> LagrangianFrame<T> {
    assert!(w >= 1, "width must be at least 1");
    let mut rng = substream(seed, 0, 0, Tag::Frame);
    let g = DMatrix::<Complex64>::from_fn(w, w, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    });
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for k in 0..w {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..w {
            q[(i, k)] *= phase;
        }
    }
    let basis = DMatrix::from_fn(2 * w, w, |i, k| {
        let v = if i < w { q[(i, k)].re } else { q[(i - w, k)].im };
        T::lit(v)
    });
    LagrangianFrame { basis }
}

/// `T̃_x(E)` for one site, sampled directly from the ensemble.
pub fn site_transfer<T: Real>(spec: &EnsembleSpec, seed: u64, replica: u64, x: i64, energy: f64) -> Result<DMatrix<T>> {
    let (l, _) = spec.sample_hopping(seed, replica, x)?;
    let v = spec.sample_potential(seed, replica, x);
    let z = DMatrix::identity(spec.width, spec.width) * energy - v;
    q_matrix(&l.map(T::lit), &z.map(T::lit))
}

/// Thin QR with a non-negative diagonal in `R`.
fn qr_positive<T: Real>(m: DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let qr = m.qr();
    let (mut q, mut r) = (qr.q(), qr.r());
    for k in 0..r.nrows() {
        if r[(k, k)] < T::zero() {
            q.column_mut(k).neg_mut();
            r.row_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Frame propagation state shared by all estimators.
struct FrameProduct<T: Real> {
    frame: DMatrix<T>,
    log_diag: Vec<f64>,
    steps_since_qr: usize,
    period: usize,
    degenerate: bool,
}

impl<T: Real> FrameProduct<T> {
    fn new(frame: DMatrix<T>, period: usize) -> Self {
        let k = frame.ncols();
        FrameProduct { frame, log_diag: vec![0.0; k], steps_since_qr: 0, period, degenerate: false }
    }

    fn push(&mut self, t: &DMatrix<T>, site: i64) -> Result<()> {
        self.frame = t * &self.frame;
        if self.frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { site, what: "transfer-matrix product".into() });
        }
        self.steps_since_qr += 1;
        if self.steps_since_qr >= self.period {
            self.orthonormalize();
        }
        Ok(())
    }

    /// Re-orthonormalize; returns the triangular factor.
    fn orthonormalize(&mut self) -> DMatrix<T> {
        let (q, r) = qr_positive(std::mem::replace(&mut self.frame, DMatrix::zeros(0, 0)));
        for (k, acc) in self.log_diag.iter_mut().enumerate() {
            let d = r[(k, k)].as_f64();
            if !(d.is_finite() && d > DEGENERATE_DIAGONAL) {
                self.degenerate = true;
            }
            *acc += d.ln();
        }
        self.frame = q;
        self.steps_since_qr = 0;
        r
    }

    fn finish(&mut self) -> &[f64] {
        if self.steps_since_qr > 0 {
            self.orthonormalize();
        }
        &self.log_diag
    }
}

/// Per-replica output of the full-spectrum accumulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSpectrum {
    /// `(1/N)·Σ log R_jj`, sorted descending.
    pub exponents: Vec<f64>,
    /// `(1/N)·Σ_x log|det T̃_x|`, when requested.
    pub log_det_per_step: Option<f64>,
}

/// Accumulate the full `2W` spectrum of `Φ̃_N(E)` for one replica.
pub fn replica_spectrum<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    reorth_period: usize,
    seed: u64,
    replica: u64,
    track_determinant: bool,
) -> Result<ReplicaSpectrum> {
    if steps == 0 || reorth_period == 0 || reorth_period > steps {
        return Err(Error::Precondition(format!(
            "need N >= reorth_period >= 1, got N={steps}, reorth_period={reorth_period}"
        )));
    }
    let w2 = 2 * spec.width;
    let mut acc = FrameProduct::<T>::new(DMatrix::identity(w2, w2), reorth_period);
    let mut log_det = 0.0;
    for x in 0..steps as i64 {
        let t = site_transfer::<T>(spec, seed, replica, x, energy)?;
        if track_determinant {
            log_det += t.clone().lu().determinant().as_f64().abs().ln();
        }
        acc.push(&t, x)?;
    }
    let n = steps as f64;
    let mut exponents: Vec<f64> = acc.finish().iter().map(|s| s / n).collect();
    // Stable sort keeps index order on ties.
    exponents.sort_by(|a, b| b.partial_cmp(a).expect("finite exponents"));
    Ok(ReplicaSpectrum { exponents, log_det_per_step: track_determinant.then_some(log_det / n) })
}

/// Estimate of all `2W` Lyapunov exponents at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub spec_hash: String,
    pub energy: f64,
    /// `γ̂_1 ≥ … ≥ γ̂_{2W}`.
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub steps: usize,
    pub replicas: usize,
    pub reorth_period: usize,
    pub seed: u64,
}

impl LyapunovEstimate {
    pub fn width(&self) -> usize {
        self.exponents.len() / 2
    }

    /// Slowest positive exponent `γ̂_W`.
    pub fn gamma_w(&self) -> f64 {
        self.exponents[self.width() - 1]
    }

    pub fn gamma_w_stderr(&self) -> f64 {
        self.stderr[self.width() - 1]
    }

    /// `|γ̂_j + γ̂_{2W+1−j}| / (se_j + se_{2W+1−j})` for `j = 1..W`; infinite
    /// when the standard errors vanish and the sum does not.
    pub fn symmetry_ratios(&self) -> Vec<f64> {
        let n = self.exponents.len();
        (0..self.width())
            .map(|j| {
                let sum = (self.exponents[j] + self.exponents[n - 1 - j]).abs();
                let se = self.stderr[j] + self.stderr[n - 1 - j];
                if sum == 0.0 {
                    0.0
                } else {
                    sum / se
                }
            })
            .collect()
    }
}

/// Full-spectrum estimate averaged over independent replicas.
pub fn estimate_spectrum<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    replicas: usize,
    reorth_period: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    spec.validate()?;
    if replicas == 0 {
        return Err(Error::Precondition("replicas must be at least 1".into()));
    }
    let per_replica = (0..replicas as u64)
        .map(|r| replica_spectrum::<T>(spec, energy, steps, reorth_period, seed, r, false))
        .collect::<Result<Vec<_>>>()?;
    let k = 2 * spec.width;
    let mut exponents = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for j in 0..k {
        let xs: Vec<f64> = per_replica.iter().map(|r| r.exponents[j]).collect();
        let m = MeanStd::from_slice(&xs);
        exponents.push(m.mean);
        stderr.push(m.stderr());
    }
    Ok(LyapunovEstimate {
        spec_hash: spec.hash(),
        energy,
        exponents,
        stderr,
        steps,
        replicas,
        reorth_period,
        seed,
    })
}

/// Growth rates `(1/N)·log s_j(Φ̃_N π_F^*)`, `j = 1..W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEstimate {
    pub energy: f64,
    pub exponents: Vec<f64>,
    pub stderr: Vec<f64>,
    pub steps: usize,
    /// Replicas that contributed.
    pub replicas: usize,
    /// Replicas dropped because the frame degenerated.
    pub dropped: usize,
}

/// Push the frame `F` through `N` conjugated steps in every replica.
pub fn estimate_restricted<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    frame: &LagrangianFrame<T>,
    replicas: usize,
    seed: u64,
) -> Result<RestrictedEstimate> {
    spec.validate()?;
    let w = spec.width;
    if frame.width() != w {
        return Err(Error::Config(format!("frame width {} does not match ensemble width {w}", frame.width())));
    }
    if replicas == 0 {
        return Err(Error::Precondition("replicas must be at least 1".into()));
    }
    if steps == 0 {
        return Ok(RestrictedEstimate {
            energy,
            exponents: vec![0.0; w],
            stderr: vec![0.0; w],
            steps,
            replicas,
            dropped: 0,
        });
    }
    let mut rows = Vec::with_capacity(replicas);
    let mut dropped = 0;
    for r in 0..replicas as u64 {
        let mut acc = FrameProduct::new(frame.basis().clone(), DEFAULT_REORTH_PERIOD.min(steps));
        for x in 0..steps as i64 {
            acc.push(&site_transfer::<T>(spec, seed, r, x, energy)?, x)?;
        }
        let logs = acc.finish().to_vec();
        if acc.degenerate {
            dropped += 1;
            continue;
        }
        rows.push(logs.iter().map(|s| s / steps as f64).collect::<Vec<_>>());
    }
    let mut exponents = Vec::with_capacity(w);
    let mut stderr = Vec::with_capacity(w);
    for j in 0..w {
        let xs: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = MeanStd::from_slice(&xs);
        exponents.push(m.mean);
        stderr.push(m.stderr());
    }
    Ok(RestrictedEstimate { energy, exponents, stderr, steps, replicas: rows.len(), dropped })
}

/// Accumulates `Φ̃_N π_F^*` as `Q · R_tot` and evaluates the finite-`N`
/// singular value `s_W` at checkpoints.
struct SingularTracker<T: Real> {
    acc: FrameProduct<T>,
    /// `R_tot / exp(log_scale)`.
    r_scaled: DMatrix<T>,
    log_scale: f64,
}

/// Ratio `s_1/s_W` above which the SVD of the accumulated factor is no
/// longer trusted and the graded diagonal is used instead.
const MAX_DIRECT_CONDITION: f64 = 1e8;

impl<T: Real> SingularTracker<T> {
    fn new(frame: DMatrix<T>) -> Self {
        let k = frame.ncols();
        // Orthonormalize after every step so each R factor is recorded.
        SingularTracker { acc: FrameProduct::new(frame, usize::MAX), r_scaled: DMatrix::identity(k, k), log_scale: 0.0 }
    }

    fn push(&mut self, t: &DMatrix<T>, site: i64) -> Result<()> {
        self.acc.push(t, site)?;
        let r = self.acc.orthonormalize();
        self.r_scaled = r * &self.r_scaled;
        let m = self.r_scaled.amax();
        if m > T::zero() && m.is_finite() {
            self.r_scaled /= m;
            self.log_scale += m.as_f64().ln();
        }
        Ok(())
    }

    /// `log s_w` of the accumulated product (1-based `w`).
    fn log_singular(&self, w: usize) -> f64 {
        let mut s: Vec<f64> = self.r_scaled.singular_values().iter().map(|v| v.as_f64()).collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sw = s[w - 1];
        if sw > 0.0 && s[0] / sw < MAX_DIRECT_CONDITION {
            self.log_scale + sw.ln()
        } else {
            // Strongly graded: singular values follow the diagonal.
            let mut d = self.acc.log_diag.clone();
            d.sort_by(|a, b| b.partial_cmp(a).unwrap());
            d[w - 1]
        }
    }
}

/// Fitted exponential decay of large-deviation tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub energy: f64,
    pub epsilon: f64,
    /// Reference value the finite-`N` rates are compared with.
    pub reference: f64,
    pub ns: Vec<usize>,
    pub tail: Vec<Proportion>,
    /// Slope of `log tail_prob` against `N` (negative for decay).
    pub slope: Option<f64>,
    /// Fitted decay rate `c = −slope` with a two-standard-error interval.
    pub rate: Option<f64>,
    pub rate_interval: Option<(f64, f64)>,
    /// Reported instead of `rate` when too few lengths have enough
    /// exceedances to fit.
    pub rate_lower_bound: Option<f64>,
    /// Tail probability non-increasing within two binomial errors.
    pub monotone: bool,
    pub restricted: bool,
}

impl TailFit {
    pub fn tail_probabilities(&self) -> Vec<f64> {
        self.tail.iter().map(Proportion::value).collect()
    }
}

/// Empirical `P{|(1/N) log s_W(Φ̃_N π_F^*) − reference| ≥ ε}` for each `N`
/// (unrestricted `s_W(Φ̃_N)` when `frame` is `None`).
///
/// One product per replica is grown to the largest `N`; smaller lengths are
/// read off its prefix.
#[allow(clippy::too_many_arguments)]
pub fn ldp_tail<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    epsilon: f64,
    ns: &[usize],
    replicas: usize,
    frame: Option<&LagrangianFrame<T>>,
    reference: f64,
    seed: u64,
) -> Result<TailFit> {
    spec.validate()?;
    if !(epsilon > 0.0) {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    if ns.is_empty() || ns[0] == 0 || ns.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Precondition("Ns must be positive and strictly increasing".into()));
    }
    if replicas == 0 {
        return Err(Error::Precondition("replicas must be at least 1".into()));
    }
    let w = spec.width;
    let start = match frame {
        Some(f) => f.basis().clone(),
        None => DMatrix::identity(2 * w, 2 * w),
    };
    let n_max = *ns.last().unwrap();
    let mut hits = vec![0usize; ns.len()];
    for r in 0..replicas as u64 {
        let mut tracker = SingularTracker::new(start.clone());
        let mut next = 0;
        for x in 0..n_max as i64 {
            tracker.push(&site_transfer::<T>(spec, seed, r, x, energy)?, x)?;
            if (x + 1) as usize == ns[next] {
                let rate = tracker.log_singular(w) / ns[next] as f64;
                if (rate - reference).abs() >= epsilon {
                    hits[next] += 1;
                }
                next += 1;
            }
        }
    }
    let tail: Vec<Proportion> = hits.iter().map(|&h| Proportion { hits: h, trials: replicas }).collect();
    let usable: Vec<(f64, f64)> = ns
        .iter()
        .zip(&tail)
        .filter(|(_, p)| p.hits >= MIN_TAIL_EXCEEDANCES)
        .map(|(&n, p)| (n as f64, p.value().ln()))
        .collect();
    let fit = if usable.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
        fit_line(&xs, &ys)
    } else {
        None
    };
    let (slope, rate, rate_interval, rate_lower_bound) = match fit {
        Some(f) => (
            Some(f.slope),
            Some(-f.slope),
            Some((-f.slope - 2.0 * f.slope_stderr, -f.slope + 2.0 * f.slope_stderr)),
            None,
        ),
        None => {
            // With fewer than MIN_TAIL_EXCEEDANCES hits the tail is below
            // ~MIN/R; with C = 1 that bounds c from below at the largest N.
            let p_max = MIN_TAIL_EXCEEDANCES as f64 / replicas as f64;
            let bound = if p_max < 1.0 { -p_max.ln() / n_max as f64 } else { 0.0 };
            (None, None, None, Some(bound))
        }
    };
    Ok(TailFit {
        energy,
        epsilon,
        reference,
        ns: ns.to_vec(),
        monotone: crate::stats::non_increasing_within(&tail, 2.0),
        tail,
        slope,
        rate,
        rate_interval,
        rate_lower_bound,
        restricted: frame.is_some(),
    })
}

/// `s_W(π_{F_+} V_Nᵀ π_F^*)` where `Φ̃_N = U Σ V_Nᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdAlignment {
    pub steps: usize,
    pub s_w: f64,
    /// `(1/N)·log s_W`; absent for `N = 0`.
    pub log_rate: Option<f64>,
    /// `true` when the leading right singular subspace came from the
    /// stabilized backward product instead of a dense SVD.
    pub stabilized: bool,
}

/// Products up to this length are formed explicitly and decomposed.
pub const MAX_DIRECT_SVD_STEPS: usize = 200;

/// Alignment of the top-`W` right singular subspace of `Φ̃_N(E)` with `F`.
pub fn svd_alignment<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    frame: &LagrangianFrame<T>,
    seed: u64,
    replica: u64,
) -> Result<SvdAlignment> {
    alignment_route(spec, energy, steps, frame, seed, replica, steps > MAX_DIRECT_SVD_STEPS)
}

fn alignment_route<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    frame: &LagrangianFrame<T>,
    seed: u64,
    replica: u64,
    backward: bool,
) -> Result<SvdAlignment> {
    spec.validate()?;
    let w = spec.width;
    if frame.width() != w {
        return Err(Error::Config("frame width does not match ensemble width".into()));
    }
    let direct = if backward { None } else { direct_top_subspace(spec, energy, steps, w, seed, replica)? };
    let (top, stabilized) = match direct {
        Some(top) => (top, false),
        None => {
            // The leading left singular subspace of Φ̃_Nᵀ = T̃_0ᵀ⋯T̃_{N−1}ᵀ is
            // reached by pushing a generic frame through the transposed steps.
            let start = random_lagrangian::<T>(w, seed ^ 0x5eed).basis().clone();
            let mut acc = FrameProduct::new(start, DEFAULT_REORTH_PERIOD);
            for x in (0..steps as i64).rev() {
                acc.push(&site_transfer::<T>(spec, seed, replica, x, energy)?.transpose(), x)?;
            }
            acc.finish();
            (acc.frame.clone(), true)
        }
    };
    let corner = top.transpose() * frame.basis();
    let s_w = corner.singular_values().iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min);
    let log_rate = (steps > 0).then(|| s_w.ln() / steps as f64);
    Ok(SvdAlignment { steps, s_w, log_rate, stabilized })
}

/// Leading `W` right singular vectors of the explicit product, or `None`
/// when `s_1/s_W` is large enough that roundoff in the dense SVD would
/// pollute the subspace (error ≈ ε·s_1/s_W).
fn direct_top_subspace<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    steps: usize,
    w: usize,
    seed: u64,
    replica: u64,
) -> Result<Option<DMatrix<T>>> {
    let mut m = DMatrix::<T>::identity(2 * w, 2 * w);
    for x in 0..steps as i64 {
        m = site_transfer::<T>(spec, seed, replica, x, energy)? * m;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let svd = SVD::try_new(m, false, true, <T as Real>::epsilon(), 0)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))?;
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..2 * w).collect();
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let spread = (s[order[0]] / s[order[w - 1]]).as_f64();
    if <T as Real>::epsilon().as_f64() * spread > DIRECT_SUBSPACE_ACCURACY {
        return Ok(None);
    }
    let v_t = svd.v_t.expect("requested");
    Ok(Some(DMatrix::from_fn(2 * w, w, |i, k| v_t[(order[k], i)])))
}

const DIRECT_SUBSPACE_ACCURACY: f64 = 1e-10;

/// Write-once store of reference exponents keyed by `(spec hash, E)`.
#[derive(Default)]
pub struct ReferenceCache {
    entries: Mutex<HashMap<(String, u64), Arc<OnceLock<LyapunovEstimate>>>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reference estimate at `REFERENCE_STEPS` steps and
    /// `REFERENCE_REPLICAS` replicas, computed at most once per key.
    pub fn reference(&self, spec: &EnsembleSpec, energy: f64, seed: u64) -> Result<LyapunovEstimate> {
        self.get_or_compute(spec, energy, || {
            estimate_spectrum::<f64>(spec, energy, REFERENCE_STEPS, REFERENCE_REPLICAS, DEFAULT_REORTH_PERIOD, seed)
        })
    }

    pub fn get_or_compute<F>(&self, spec: &EnsembleSpec, energy: f64, compute: F) -> Result<LyapunovEstimate>
    where
        F: FnOnce() -> Result<LyapunovEstimate>,
    {
        let cell = {
            let mut map = self.entries.lock().expect("cache lock");
            map.entry((spec.hash(), energy.to_bits())).or_default().clone()
        };
        if let Some(v) = cell.get() {
            return Ok(v.clone());
        }
        let value = compute()?;
        Ok(cell.get_or_init(|| value).clone())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").values().filter(|c| c.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const INITIAL_GRID_POINTS: usize = 9;

/// `γ_W` tabulated on an energy grid and linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    /// `(E, γ̂_W(E))`, ascending in `E`.
    pub points: Vec<(f64, f64)>,
}

impl GammaGrid {
    pub fn from_points(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("energy grid is empty".into()));
        }
        points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(GammaGrid { points })
    }

    /// Tabulate `gamma_w` on `[lo, hi]`, bisecting every interval whose
    /// endpoint values differ by `τ/4` or more (up to `max_points`).
    pub fn build<F>(lo: f64, hi: f64, tau: f64, max_points: usize, mut gamma_w: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if !(hi >= lo) || !(tau > 0.0) {
            return Err(Error::Config("grid needs lo <= hi and tau > 0".into()));
        }
        let n0 = if hi > lo { INITIAL_GRID_POINTS } else { 1 };
        let mut points = Vec::with_capacity(n0);
        for k in 0..n0 {
            let e = if n0 == 1 { lo } else { lo + (hi - lo) * k as f64 / (n0 - 1) as f64 };
            points.push((e, gamma_w(e)?));
        }
        loop {
            let split = points.windows(2).position(|p| (p[1].1 - p[0].1).abs() >= tau / 4.0);
            match split {
                Some(k) if points.len() < max_points => {
                    let mid = 0.5 * (points[k].0 + points[k + 1].0);
                    let g = gamma_w(mid)?;
                    points.insert(k + 1, (mid, g));
                }
                _ => break,
            }
        }
        Ok(GammaGrid { points })
    }

    pub fn interpolate(&self, energy: f64) -> f64 {
        let p = &self.points;
        if energy <= p[0].0 {
            return p[0].1;
        }
        if energy >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let k = p.partition_point(|q| q.0 <= energy);
        let (a, b) = (p[k - 1], p[k]);
        a.1 + (b.1 - a.1) * (energy - a.0) / (b.0 - a.0)
    }

    /// Minimum of the interpolant over `[lo, hi]`.
    pub fn min_over(&self, lo: f64, hi: f64) -> f64 {
        let mut m = self.interpolate(lo).min(self.interpolate(hi));
        for &(e, g) in &self.points {
            if lo <= e && e <= hi {
                m = m.min(g);
            }
        }
        m
    }
}
