//! Eigenfunction decay and eigenfunction correlators in finite boxes.
//!
//! The correlator `sup_{|f| ≤ 1} ‖f(H)_{xy}‖` is replaced by the sum of
//! spectral-projection block norms `Σ_{λ_k ∈ I} ‖(Π_k)_{xy}‖`. For `W = 1`
//! the two agree; for wider strips the sum is an upper bound, so decay of the
//! surrogate implies decay of the correlator.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{DMatrix, DVector, DVectorView, Dyn, U1};
use serde::{Deserialize, Serialize};

use crate::eigen::eigensystem;
use crate::error::{Error, Result};
use crate::green::operator_norm;
use crate::model::{assemble, sample_realization, BlockOperator, EnsembleSpec, Window};
use crate::scalar::Real;
use crate::stats::fit_line;

/// Largest dense eigenproblem accepted.
pub const MAX_EIGEN_DIM: usize = 4000;
/// Block norms below this floor are excluded from decay fits.
pub const NORM_FLOOR: f64 = 1e-300;
/// Peaks closer than this to the box boundary are flagged as edge states.
pub const EDGE_MARGIN: i64 = 10;
/// Fits start this many sites from the peak and stop this many before the
/// boundary.
pub const FIT_MARGIN: i64 = 5;
pub const MIN_FIT_POINTS: usize = 10;
pub const SURROGATE: &str = "sum of spectral-projection block norms";

/// One normalized eigenpair of `H_Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair<T: Real> {
    pub energy: T,
    pub window: Window,
    pub width: usize,
    vector: DVector<T>,
}

impl<T: Real> EigenPair<T> {
    /// Wrap an arbitrary vector (normalized here) as an eigenpair of a box.
    pub fn new(energy: T, window: Window, width: usize, vector: DVector<T>) -> Result<Self> {
        if vector.len() != window.len() * width {
            return Err(Error::Config("vector length does not match the box".into()));
        }
        let norm = vector.norm();
        if !(norm > T::zero()) {
            return Err(Error::Config("zero vector".into()));
        }
        Ok(EigenPair { energy, window, width, vector: vector / norm })
    }

    pub fn vector(&self) -> &DVector<T> {
        &self.vector
    }

    /// The `W`-component block `ψ(x)`.
    pub fn block(&self, x: i64) -> Result<DVectorView<'_, T>> {
        let k = self.window.offset(x)?;
        Ok(self.vector.rows(k * self.width, self.width))
    }

    /// `‖ψ(x)‖` for every site of the box.
    pub fn site_norms(&self) -> Vec<f64> {
        (0..self.window.len()).map(|k| self.vector.rows(k * self.width, self.width).norm().as_f64()).collect()
    }

    /// `‖Hψ − λψ‖`.
    pub fn residual(&self, h: &BlockOperator<T>) -> f64 {
        (h.to_dense() * &self.vector - &self.vector * self.energy).norm().as_f64()
    }
}

/// Full eigensystem of a box, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T: Real> {
    pub window: Window,
    pub width: usize,
    pub values: Vec<T>,
    /// Eigenvectors as columns.
    pub vectors: DMatrix<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn of(h: &BlockOperator<T>) -> Result<Self> {
        if h.dim() > MAX_EIGEN_DIM {
            return Err(Error::Precondition(format!("dimension {} exceeds {MAX_EIGEN_DIM}", h.dim())));
        }
        let (values, vectors) = eigensystem(h)?;
        Ok(Spectrum { window: h.window(), width: h.width(), values, vectors })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn pair(&self, k: usize) -> EigenPair<T> {
        EigenPair { energy: self.values[k], window: self.window, width: self.width, vector: self.vectors.column(k).into_owned() }
    }

    pub fn pairs(&self) -> Vec<EigenPair<T>> {
        (0..self.len()).map(|k| self.pair(k)).collect()
    }

    /// Indices of eigenvalues in the closed interval.
    pub fn indices_in(&self, interval: (f64, f64)) -> std::ops::Range<usize> {
        let lo = self.values.partition_point(|v| v.as_f64() < interval.0);
        let hi = self.values.partition_point(|v| v.as_f64() <= interval.1);
        lo..hi.max(lo)
    }

    fn block(&self, k: usize, x: i64) -> Result<DVectorView<'_, T>> {
        let r = self.window.offset(x)?;
        Ok(self.vectors.generic_view((r * self.width, k), (Dyn(self.width), U1)))
    }

    /// `(Π_k)_{xy} = ψ_k(x) ψ_k(y)ᵀ`.
    pub fn projection_block(&self, k: usize, x: i64, y: i64) -> Result<DMatrix<T>> {
        Ok(self.block(k, x)? * self.block(k, y)?.transpose())
    }
}

/// Eigenpairs of `H`, eigenvalues ascending.
pub fn eigenpairs<T: Real>(h: &BlockOperator<T>) -> Result<Vec<EigenPair<T>>> {
    Ok(Spectrum::of(h)?.pairs())
}

/// One-sided exponential fit of an eigenfunction profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideFit {
    pub slope: f64,
    pub r2: f64,
    /// Distances from the peak covered by the fit.
    pub range: (i64, i64),
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub energy: f64,
    pub peak_site: i64,
    pub left: Option<SideFit>,
    pub right: Option<SideFit>,
    /// Peak within [`EDGE_MARGIN`] sites of the boundary.
    pub edge_state: bool,
}

impl DecayFit {
    /// `min(−left_slope, −right_slope)` over the fitted sides.
    pub fn decay_rate(&self) -> f64 {
        [&self.left, &self.right].iter().filter_map(|s| s.as_ref()).map(|s| -s.slope).fold(f64::INFINITY, f64::min)
    }
}

fn fit_side(norms: &[f64], peak: usize, dir: i64) -> Option<SideFit> {
    let edge = if dir < 0 { peak as i64 } else { (norms.len() - 1 - peak) as i64 };
    let (from, to) = (FIT_MARGIN, edge - FIT_MARGIN);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (from..=to)
        .filter_map(|d| {
            let v = norms[(peak as i64 + dir * d) as usize];
            (v >= NORM_FLOOR).then(|| (d as f64, v.ln()))
        })
        .unzip();
    if xs.len() < MIN_FIT_POINTS {
        return None;
    }
    let f = fit_line(&xs, &ys)?;
    Some(SideFit { slope: f.slope, r2: f.r2, range: (from, to), points: xs.len() })
}

/// Least-squares slopes of `log‖ψ(x)‖` against the distance from the peak,
/// on each side over `[5, edge − 5]`.
pub fn decay_fit<T: Real>(pair: &EigenPair<T>) -> Result<DecayFit> {
    let len = pair.window.len();
    if len < 40 {
        return Err(Error::Precondition(format!("box of {len} sites is shorter than 40")));
    }
    let norms = pair.site_norms();
    let peak = norms
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
        .0;
    let edge_state = (peak as i64) < EDGE_MARGIN || ((len - 1 - peak) as i64) < EDGE_MARGIN;
    let left = fit_side(&norms, peak, -1);
    let right = fit_side(&norms, peak, 1);
    if left.is_none() && right.is_none() {
        return Err(Error::InsufficientRange(format!(
            "fewer than {MIN_FIT_POINTS} usable points on both sides of the peak"
        )));
    }
    Ok(DecayFit { energy: pair.energy.as_f64(), peak_site: pair.window.lo + peak as i64, left, right, edge_state })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEstimate {
    pub window: Window,
    pub interval: (f64, f64),
    pub x: i64,
    pub y: i64,
    pub value: f64,
    pub sup_over_boxes: Option<f64>,
    /// Box family of the supremum; empty for a single-box estimate.
    pub boxes: Vec<Window>,
    pub surrogate: String,
}

/// `Σ_{λ_k ∈ I} ‖(Π_k)_{xy}‖`; each block has rank one, so its norm is
/// `‖ψ_k(x)‖·‖ψ_k(y)‖`.
pub fn correlator_value<T: Real>(spectrum: &Spectrum<T>, interval: (f64, f64), x: i64, y: i64) -> Result<f64> {
    let mut total = 0.0;
    for k in spectrum.indices_in(interval) {
        total += spectrum.block(k, x)?.norm().as_f64() * spectrum.block(k, y)?.norm().as_f64();
    }
    Ok(total)
}

pub fn correlator<T: Real>(spectrum: &Spectrum<T>, interval: (f64, f64), x: i64, y: i64) -> Result<CorrelatorEstimate> {
    Ok(CorrelatorEstimate {
        window: spectrum.window,
        interval,
        x,
        y,
        value: correlator_value(spectrum, interval, x, y)?,
        sup_over_boxes: None,
        boxes: Vec::new(),
        surrogate: SURROGATE.into(),
    })
}

/// Correlator on the first box of `boxes` together with its maximum over the
/// whole family, all boxes cut from one realization.
pub fn correlator_sup<T: Real>(
    spec: &EnsembleSpec,
    interval: (f64, f64),
    x: i64,
    y: i64,
    boxes: &[Window],
    seed: u64,
    replica: u64,
) -> Result<CorrelatorEstimate> {
    let Some(first) = boxes.first() else {
        return Err(Error::Config("empty box family".into()));
    };
    if let Some(b) = boxes.iter().find(|b| !b.contains(x) || !b.contains(y)) {
        return Err(Error::Config(format!("box {b} does not contain both {x} and {y}")));
    }
    let hull = Window::new(boxes.iter().map(|b| b.lo).min().unwrap(), boxes.iter().map(|b| b.hi).max().unwrap())?;
    let real = sample_realization::<T>(spec, hull, seed, replica)?;
    let mut values = Vec::with_capacity(boxes.len());
    for b in boxes {
        let s = Spectrum::of(&assemble(&real, *b)?)?;
        values.push(correlator_value(&s, interval, x, y)?);
    }
    Ok(CorrelatorEstimate {
        window: *first,
        interval,
        x,
        y,
        value: values[0],
        sup_over_boxes: Some(values.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        boxes: boxes.to_vec(),
        surrogate: SURROGATE.into(),
    })
}

/// `(ε/2)·∫_I ‖G_E(x, y)‖^{1−ε} dE` at one `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalMoment {
    pub epsilon: f64,
    pub value: f64,
    /// Largest disagreement between the `n`- and `2n`-node rules on a
    /// subinterval that could not be refined further.
    pub quadrature_error: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalProbe {
    pub interval: (f64, f64),
    pub x: i64,
    pub y: i64,
    pub nodes: usize,
    pub moments: Vec<FractionalMoment>,
    /// Linear extrapolation to `ε = 0` from the two smallest `ε`; a trend
    /// indicator, not a limit.
    pub extrapolated: Option<f64>,
    /// Correlator surrogate on the same box and interval (the `ε → 0`
    /// limit for simple eigenvalues).
    pub correlator: f64,
}

pub const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.02];
const QUAD_RELATIVE: f64 = 1e-8;
const QUAD_WARN: f64 = 1e-4;
const MAX_BISECTIONS: u32 = 24;

struct Adaptive<'a> {
    coarse: &'a GaussLegendre,
    fine: &'a GaussLegendre,
    worst: f64,
}

impl Adaptive<'_> {
    fn integrate<F: Fn(f64) -> f64>(&mut self, f: &F, a: f64, b: f64, scale: f64, depth: u32) -> f64 {
        let c = self.coarse.integrate(a, b, f);
        let fi = self.fine.integrate(a, b, f);
        let err = (c - fi).abs();
        if err <= QUAD_RELATIVE * (fi.abs().max(scale)) + 1e-300 {
            return fi;
        }
        if depth >= MAX_BISECTIONS {
            self.worst = self.worst.max(err);
            return fi;
        }
        let m = 0.5 * (a + b);
        self.integrate(f, a, m, scale, depth + 1) + self.integrate(f, m, b, scale, depth + 1)
    }
}

/// Evaluates the fractional-moment integral from the spectral
/// decomposition `G_E(x,y) = Σ_k (Π_k)_{xy}/(λ_k − E)`.
///
/// `I` is cut at every eigenvalue inside it and at the midpoints between
/// consecutive cut points. On a piece `[a, b]` ending at a pole `λ`, the
/// substitution `E = λ ± h·s^{1/ε}` (`h = b − a`) turns
/// `(ε/2)·‖G‖^{1−ε} dE` into the bounded integrand
/// `(h^ε/2)·‖(Π_λ)_{xy} − t·R(E)‖^{1−ε} ds` with `t = E − λ` and `R` the
/// remaining spectral sum, so no node ever sits on the pole.
pub fn fractional_moment_probe<T: Real>(
    spectrum: &Spectrum<T>,
    interval: (f64, f64),
    x: i64,
    y: i64,
    epsilons: &[f64],
    nodes: usize,
) -> Result<FractionalProbe> {
    let (lo, hi) = interval;
    if !(lo < hi) {
        return Err(Error::Config("interval must have lo < hi".into()));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::Precondition(format!("epsilon {e} not in (0, 1)")));
    }
    let n = NonZeroUsize::new(nodes).ok_or_else(|| Error::Config("need at least one quadrature node".into()))?;
    let coarse = GaussLegendre::new(n);
    let fine = GaussLegendre::new(NonZeroUsize::new(2 * nodes).unwrap());

    let poles: Vec<f64> = spectrum.values.iter().map(|v| v.as_f64()).collect();
    let blocks: Vec<DMatrix<f64>> = (0..poles.len())
        .map(|k| spectrum.projection_block(k, x, y).map(|b| b.map(|v| v.as_f64())))
        .collect::<Result<_>>()?;
    let w = spectrum.width;
    // Σ_{k≠skip} P_k/(λ_k − E).
    let rest = |e: f64, skip: Option<usize>| {
        let mut g = DMatrix::<f64>::zeros(w, w);
        for (k, (p, &l)) in blocks.iter().zip(&poles).enumerate() {
            if Some(k) != skip {
                g += p / (l - e);
            }
        }
        g
    };

    // Cut points: (position, pole index if it is an eigenvalue).
    let inside = spectrum.indices_in(interval);
    let mut cuts: Vec<(f64, Option<usize>)> = vec![(lo, None)];
    for k in inside.clone() {
        cuts.push((poles[k], Some(k)));
    }
    cuts.push((hi, None));
    cuts.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 = a.1.or(b.1);
            true
        } else {
            false
        }
    });
    let mut pieces: Vec<(f64, f64, Option<usize>, bool)> = Vec::new();
    for pair in cuts.windows(2) {
        let ((a, pa), (b, pb)) = (pair[0], pair[1]);
        let m = 0.5 * (a + b);
        // (start, end, pole, pole at start)
        pieces.push((a, m, pa, true));
        pieces.push((m, b, pb, false));
    }

    let mut moments = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut quad = Adaptive { coarse: &coarse, fine: &fine, worst: 0.0 };
        let mut total = 0.0;
        for &(a, b, pole, at_start) in &pieces {
            let h = b - a;
            if h <= 0.0 {
                continue;
            }
            match pole {
                Some(k) => {
                    let lambda = if at_start { a } else { b };
                    let dir = if at_start { 1.0 } else { -1.0 };
                    let f = |s: f64| {
                        let t = dir * h * s.powf(1.0 / eps);
                        let m = &blocks[k] - rest(lambda + t, Some(k)) * t;
                        operator_norm(&m).powf(1.0 - eps)
                    };
                    total += 0.5 * h.powf(eps) * quad.integrate(&f, 0.0, 1.0, 1.0, 0);
                }
                None => {
                    let f = |e: f64| operator_norm(&rest(e, None)).powf(1.0 - eps);
                    total += 0.5 * eps * quad.integrate(&f, a, b, 0.0, 0);
                }
            }
        }
        let relative = quad.worst / total.abs().max(1e-300);
        let warning = (relative > QUAD_WARN).then(|| {
            format!("quadrature did not resolve a pole cluster (n vs 2n relative gap {relative:.1e})")
        });
        moments.push(FractionalMoment { epsilon: eps, value: total, quadrature_error: quad.worst, warning });
    }
    let mut sorted: Vec<&FractionalMoment> = moments.iter().collect();
    sorted.sort_by(|a, b| a.epsilon.partial_cmp(&b.epsilon).unwrap());
    let extrapolated = (sorted.len() >= 2).then(|| {
        let (p, q) = (sorted[0], sorted[1]);
        p.value - p.epsilon * (q.value - p.value) / (q.epsilon - p.epsilon)
    });
    Ok(FractionalProbe {
        interval,
        x,
        y,
        nodes,
        moments,
        extrapolated,
        correlator: correlator_value(spectrum, interval, x, y)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DisorderRealization, ScalarLaw};
    use proptest::prelude::*;

    fn chain(potential: &[f64]) -> BlockOperator<f64> {
        let n = potential.len() as i64;
        let w = Window::new(0, n - 1).unwrap();
        let r = DisorderRealization::from_blocks(
            EnsembleSpec::free_strip(1),
            w,
            vec![DMatrix::from_element(1, 1, 1.0); n as usize],
            potential.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        )
        .unwrap();
        assemble(&r, w).unwrap()
    }

    fn random_box(w: usize, len: i64, seed: u64) -> BlockOperator<f64> {
        let spec = EnsembleSpec::anderson_strip(w, ScalarLaw::Uniform { lo: -2.0, hi: 2.0 });
        let r = sample_realization(&spec, Window::new(0, len - 1).unwrap(), seed, 0).unwrap();
        assemble(&r, r.window()).unwrap()
    }

    #[test]
    fn single_site_pair() {
        let p = eigenpairs(&chain(&[3.0])).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].energy, 3.0);
        assert!((p[0].vector()[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_site_pairs() {
        let h = chain(&[0.0, 0.0]);
        let p = eigenpairs(&h).unwrap();
        assert!((p[0].energy + 1.0).abs() < 1e-14 && (p[1].energy - 1.0).abs() < 1e-14);
        for q in &p {
            assert!(q.residual(&h) < 1e-12);
        }
    }

    #[test]
    fn projections_are_complete() {
        let h = random_box(3, 12, 1);
        let s = Spectrum::of(&h).unwrap();
        for (x, y) in [(0, 0), (3, 3), (2, 7), (11, 10)] {
            let mut sum = DMatrix::<f64>::zeros(3, 3);
            for k in 0..s.len() {
                sum += s.projection_block(k, x, y).unwrap();
            }
            let expect = if x == y { DMatrix::identity(3, 3) } else { DMatrix::zeros(3, 3) };
            assert!((sum - expect).norm() < 1e-8);
        }
        for p in s.pairs() {
            assert!((p.vector().norm() - 1.0).abs() < 1e-10);
            assert!(p.residual(&h) <= 1e-8 * h.frobenius_norm());
        }
    }

    fn synthetic(rate: f64, noise: Option<u64>) -> EigenPair<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise.unwrap_or(0));
        let window = Window::new(-100, 100).unwrap();
        let v = DVector::from_fn(201 * 2, |i, _| {
            let x = (i / 2) as f64 - 100.0;
            let c = if i % 2 == 0 { 0.6 } else { 0.8 };
            let jitter = if noise.is_some() { 1.0 + 0.01 * rng.random_range(-1.0..1.0) } else { 1.0 };
            c * (-rate * x.abs()).exp() * jitter
        });
        EigenPair::new(0.0, window, 2, v).unwrap()
    }

    #[test]
    fn exact_exponential_profile() {
        let f = decay_fit(&synthetic(0.3, None)).unwrap();
        assert_eq!(f.peak_site, 0);
        assert!(!f.edge_state);
        assert!((f.left.as_ref().unwrap().slope + 0.3).abs() < 1e-6);
        assert!((f.right.as_ref().unwrap().slope + 0.3).abs() < 1e-6);
    }

    #[test]
    fn noisy_exponential_profile() {
        let f = decay_fit(&synthetic(0.3, Some(5))).unwrap();
        assert!((f.left.unwrap().slope + 0.3).abs() < 0.01);
        assert!((f.right.unwrap().slope + 0.3).abs() < 0.01);
    }

    #[test]
    fn edge_peak_is_flagged_and_short_boxes_refused() {
        let window = Window::new(0, 59).unwrap();
        let v = DVector::from_fn(60, |i, _| (-0.2 * i as f64).exp());
        let f = decay_fit(&EigenPair::new(0.0, window, 1, v).unwrap()).unwrap();
        assert!(f.edge_state && f.left.is_none() && f.right.is_some());
        let short = EigenPair::new(0.0, Window::new(0, 20).unwrap(), 1, DVector::from_element(21, 1.0)).unwrap();
        assert!(matches!(decay_fit(&short), Err(Error::Precondition(_))));
    }

    #[test]
    fn underflowed_profile_has_insufficient_range() {
        let window = Window::new(0, 59).unwrap();
        let v = DVector::from_fn(60, |i, _| if i == 30 { 1.0 } else { 0.0 });
        assert!(matches!(decay_fit(&EigenPair::new(0.0, window, 1, v).unwrap()), Err(Error::InsufficientRange(_))));
    }

    #[test]
    fn correlator_basics() {
        let s = Spectrum::of(&chain(&[0.0; 8])).unwrap();
        assert_eq!(correlator(&s, (5.0, 6.0), 1, 4).unwrap().value, 0.0);
        assert!((correlator(&s, (-3.0, 3.0), 2, 2).unwrap().value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn correlator_sup_families() {
        let spec = EnsembleSpec::anderson_strip(1, ScalarLaw::Uniform { lo: -1.0, hi: 1.0 });
        let b = Window::new(-10, 10).unwrap();
        let one = correlator_sup::<f64>(&spec, (-0.5, 0.5), 0, 3, &[b], 2, 0).unwrap();
        assert_eq!(one.sup_over_boxes, Some(one.value));
        let family: Vec<Window> = (0..5).map(|k| Window::new(-10 - 2 * k, 10 + 2 * k).unwrap()).collect();
        let all = correlator_sup::<f64>(&spec, (-0.5, 0.5), 0, 3, &family, 2, 0).unwrap();
        assert!(all.sup_over_boxes.unwrap() >= all.value);
        assert_eq!(all.value, one.value);
        let free = correlator_sup::<f64>(&EnsembleSpec::free_strip(1), (3.0, 4.0), 0, 3, &family, 2, 0).unwrap();
        assert_eq!(free.sup_over_boxes, Some(0.0));
        assert!(matches!(correlator_sup::<f64>(&spec, (0.0, 1.0), 0, 1, &[], 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn single_site_fractional_moment() {
        // (ε/2)∫_2^4 |3 − E|^{ε−1} dE = 1 for every ε.
        let s = Spectrum::of(&chain(&[3.0])).unwrap();
        let p = fractional_moment_probe(&s, (2.0, 4.0), 0, 0, &DEFAULT_EPSILONS, 16).unwrap();
        for m in &p.moments {
            assert!((m.value - 1.0).abs() < 1e-4, "{m:?}");
            assert!(m.warning.is_none());
        }
    }

    #[test]
    fn single_site_asymmetric_interval() {
        // (ε/2)(1 + 2^ε)/ε on [2, 5].
        let s = Spectrum::of(&chain(&[3.0])).unwrap();
        let p = fractional_moment_probe(&s, (2.0, 5.0), 0, 0, &[0.3], 16).unwrap();
        assert!((p.moments[0].value - 0.5 * (1.0 + 2f64.powf(0.3))).abs() < 1e-6);
    }

    #[test]
    fn off_spectrum_moment_vanishes_with_epsilon() {
        let s = Spectrum::of(&chain(&[0.0; 6])).unwrap();
        let p = fractional_moment_probe(&s, (3.0, 4.0), 1, 3, &[0.2, 0.02], 16).unwrap();
        assert!(p.moments[1].value < p.moments[0].value);
        assert!(p.moments[1].value < 0.01);
    }

    #[test]
    fn small_epsilon_tracks_correlator() {
        let s = Spectrum::of(&random_box(1, 30, 3)).unwrap();
        let p = fractional_moment_probe(&s, (-1.0, 1.0), 10, 14, &DEFAULT_EPSILONS, 24).unwrap();
        let last = p.moments.last().unwrap().value;
        assert!(last >= p.correlator - 0.05 * p.correlator.max(0.05), "{last} vs {}", p.correlator);
        assert!((p.extrapolated.unwrap() - p.correlator).abs() < 0.05 * p.correlator.max(0.05) + 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn correlator_bounded_and_monotone(w in 1usize..=3, seed in 0u64..10_000, x in 0i64..15, y in 0i64..15, a in -3.0f64..0.0, b in 0.0f64..3.0) {
            let s = Spectrum::of(&random_box(w, 15, seed)).unwrap();
            let inner = correlator_value(&s, (a / 2.0, b / 2.0), x, y).unwrap();
            let outer = correlator_value(&s, (a, b), x, y).unwrap();
            prop_assert!(outer <= w as f64 + 1e-6);
            prop_assert!(inner <= outer + 1e-10);
            prop_assert!(inner >= 0.0);
        }

        #[test]
        fn fractional_moments_respect_the_bound(w in 1usize..=2, seed in 0u64..10_000, x in 0i64..10, y in 0i64..10) {
            let s = Spectrum::of(&random_box(w, 10, seed)).unwrap();
            let p = fractional_moment_probe(&s, (-1.5, 1.5), x, y, &[0.2, 0.05], 16).unwrap();
            for m in &p.moments {
                prop_assert!(m.value <= 1.001 * w as f64, "{:?}", m);
            }
        }
    }
}
