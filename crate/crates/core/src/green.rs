//! Finite-volume Green-function blocks.
//!
//! Blocks are indexed in the standard way: `G(i, j)` is the `(i, j)` block of
//! `(H_Λ − E)⁻¹`, so the column `G(·, j)` solves `(H − E)·G(·, j) = δ_j`.
//! Three independent routes are provided: block-tridiagonal elimination, the
//! boundary-value solutions `Ψ^±` and the `X^±` matrices built from the
//! conjugated cocycle.

use std::ops::RangeInclusive;

use nalgebra::{ComplexField, DMatrix, Scalar};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::eigen::{count_below, distance_to_spectrum, eigenvalues, distance_in_sorted};
use crate::error::{Error, Result};
use crate::model::{assemble, sample_realization, BlockOperator, DisorderRealization, EnsembleSpec, Window};
use crate::scalar::Real;
use crate::stats::{fit_line, non_increasing_within, LineFit, Proportion};
use crate::tolerance::Tolerances;
use crate::transfer::{conjugated_one_step, inverse, inverse_one_step, smallest_singular_value};

/// Dense LU is used as a fallback up to this dimension.
pub const MAX_DENSE_DIM: usize = 4000;
/// Raw `Ψ` entries beyond this magnitude are reported as overflow.
const PSI_OVERFLOW: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GreenMethod {
    DirectSolve,
    PsiFormula,
    XFormula,
}

/// One `W × W` block `G_E[H_box](row_site, col_site)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenBlock<S: Scalar> {
    pub value: DMatrix<S>,
    pub window: Window,
    pub row_site: i64,
    pub col_site: i64,
    pub energy: S,
    pub method: GreenMethod,
}

/// `‖A − B‖_F / ‖B‖_F` (absolute when `B = 0`).
pub fn relative_mismatch<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    let d = (a - b).norm().as_f64();
    let s = b.norm().as_f64();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

/// Largest singular value.
pub fn operator_norm<T: Real>(m: &DMatrix<T>) -> f64 {
    if m.ncols() == 1 && m.nrows() == 1 {
        return m[(0, 0)].abs().as_f64();
    }
    m.singular_values().iter().map(|s| s.as_f64()).fold(0.0, f64::max)
}

/// `max_{α,β} |A_{αβ}|`.
pub fn entrywise_max_norm<T: Real>(m: &DMatrix<T>) -> f64 {
    m.amax().as_f64()
}

/// Block-tridiagonal elimination for one block column of `(H − E)⁻¹`.
fn thomas_column<S: ComplexField + Copy>(
    diag: &[DMatrix<S>],
    upper: &[DMatrix<S>],
    energy: S,
    col: usize,
) -> Option<Vec<DMatrix<S>>> {
    let n = diag.len();
    let w = diag[0].nrows();
    let id = DMatrix::<S>::identity(w, w);
    let mut s_inv: Vec<DMatrix<S>> = Vec::with_capacity(n);
    let mut y: Vec<DMatrix<S>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut s = &diag[k] - &id * energy;
        let mut rhs = if k == col { id.clone() } else { DMatrix::zeros(w, w) };
        if k > 0 {
            let cs = upper[k - 1].transpose() * &s_inv[k - 1];
            s -= &cs * &upper[k - 1];
            if k > col {
                rhs -= &cs * &y[k - 1];
            }
        }
        s_inv.push(s.try_inverse()?);
        y.push(rhs);
    }
    let mut x = vec![DMatrix::zeros(w, w); n];
    x[n - 1] = &s_inv[n - 1] * &y[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = &s_inv[k] * (&y[k] - &upper[k] * &x[k + 1]);
    }
    x.iter().all(|b| b.iter().all(|v| v.is_finite())).then_some(x)
}

fn dense_column<S: ComplexField + Copy>(
    diag: &[DMatrix<S>],
    upper: &[DMatrix<S>],
    energy: S,
    col: usize,
) -> Option<Vec<DMatrix<S>>> {
    let n = diag.len();
    let w = diag[0].nrows();
    let dim = n * w;
    let mut a = DMatrix::<S>::zeros(dim, dim);
    for k in 0..n {
        a.view_mut((k * w, k * w), (w, w)).copy_from(&(&diag[k] - DMatrix::identity(w, w) * energy));
        if k + 1 < n {
            a.view_mut((k * w, (k + 1) * w), (w, w)).copy_from(&upper[k]);
            a.view_mut(((k + 1) * w, k * w), (w, w)).copy_from(&upper[k].transpose());
        }
    }
    let mut rhs = DMatrix::<S>::zeros(dim, w);
    rhs.view_mut((col * w, 0), (w, w)).fill_with_identity();
    let x = a.lu().solve(&rhs)?;
    Some((0..n).map(|k| x.view((k * w, 0), (w, w)).into_owned()).collect())
}

/// `(‖(H−E)X − δ‖_F, ‖X‖_F · ‖H−E‖_F)`.
fn column_residual<T: Real, S: ComplexField<RealField = T> + Copy>(
    diag: &[DMatrix<S>],
    upper: &[DMatrix<S>],
    energy: S,
    col: usize,
    x: &[DMatrix<S>],
) -> (f64, f64) {
    let n = diag.len();
    let w = diag[0].nrows();
    let id = DMatrix::<S>::identity(w, w);
    let mut res = T::zero();
    let mut xn = T::zero();
    let mut hn = T::zero();
    for k in 0..n {
        let shifted = &diag[k] - &id * energy;
        let mut r = &shifted * &x[k];
        if k > 0 {
            r += upper[k - 1].transpose() * &x[k - 1];
            hn += upper[k - 1].norm_squared() * T::lit(2.0);
        }
        if k + 1 < n {
            r += &upper[k] * &x[k + 1];
        }
        if k == col {
            r -= &id;
        }
        res += r.norm_squared();
        xn += x[k].norm_squared();
        hn += shifted.norm_squared();
    }
    (res.sqrt().as_f64(), (xn.sqrt() * hn.sqrt()).as_f64())
}

fn solve_column<T: Real, S: ComplexField<RealField = T> + Copy>(
    diag: &[DMatrix<S>],
    upper: &[DMatrix<S>],
    energy: S,
    col: usize,
    tol: &Tolerances,
) -> Result<Vec<DMatrix<S>>> {
    let accept = |x: &[DMatrix<S>]| {
        let (r, scale) = column_residual(diag, upper, energy, col, x);
        r <= tol.residual * scale
    };
    if let Some(x) = thomas_column(diag, upper, energy, col) {
        if accept(&x) {
            return Ok(x);
        }
    }
    let dim = diag.len() * diag[0].nrows();
    if dim <= MAX_DENSE_DIM {
        if let Some(x) = dense_column(diag, upper, energy, col) {
            if accept(&x) {
                return Ok(x);
            }
        }
    }
    Err(Error::Numeric(format!("resolvent column {col} failed the residual check")))
}

/// Refuse real energies within `tol.near_singular` of `σ(H)`, using the
/// inertia count on both sides of `E`.
fn near_singular_guard<T: Real>(h: &BlockOperator<T>, energy: T, tol: &Tolerances) -> Result<()> {
    let d = T::lit(tol.near_singular);
    if count_below(h, energy - d) != count_below(h, energy + d) {
        let dist = distance_to_spectrum(h, energy)?.as_f64();
        return Err(Error::NearSingular { dist });
    }
    Ok(())
}

/// The block column `G(·, j)` over the whole box, top to bottom.
pub fn green_column<T: Real>(h: &BlockOperator<T>, energy: T, j: i64, tol: &Tolerances) -> Result<Vec<DMatrix<T>>> {
    let col = h.window().offset(j)?;
    near_singular_guard(h, energy, tol)?;
    solve_column(h.diagonal_blocks(), h.upper_blocks(), energy, col, tol)
}

/// `G_E[H](i, j)` at a real energy off the spectrum.
pub fn green_direct<T: Real>(h: &BlockOperator<T>, energy: T, i: i64, j: i64) -> Result<GreenBlock<T>> {
    let row = h.window().offset(i)?;
    let column = green_column(h, energy, j, &Tolerances::default())?;
    Ok(GreenBlock {
        value: column[row].clone(),
        window: h.window(),
        row_site: i,
        col_site: j,
        energy,
        method: GreenMethod::DirectSolve,
    })
}

/// `G_E[H](i, j)` at a complex energy.
pub fn green_direct_complex<T: Real>(
    h: &BlockOperator<T>,
    energy: Complex<T>,
    i: i64,
    j: i64,
) -> Result<GreenBlock<Complex<T>>> {
    let tol = Tolerances::default();
    let row = h.window().offset(i)?;
    let col = h.window().offset(j)?;
    if energy.im.abs().as_f64() <= tol.near_singular {
        near_singular_guard(h, energy.re, &tol)?;
    }
    let lift = |m: &DMatrix<T>| m.map(|v| Complex::new(v, T::zero()));
    let diag: Vec<_> = h.diagonal_blocks().iter().map(lift).collect();
    let upper: Vec<_> = h.upper_blocks().iter().map(lift).collect();
    let column = solve_column(&diag, &upper, energy, col, &tol)?;
    Ok(GreenBlock {
        value: column[row].clone(),
        window: h.window(),
        row_site: i,
        col_site: j,
        energy,
        method: GreenMethod::DirectSolve,
    })
}

/// Boundary-value solutions on `[c − N, c + N]`.
///
/// `Ψ_i^+` solves the eigenvalue equation on the box with `Ψ_{c+N+1}^+ = 0`,
/// `Ψ_{c+N}^+ = 1`; `Ψ_i^-` with `Ψ_{c−N−1}^- = 0`, `Ψ_{c−N}^- = 1`. Both are
/// stored for `i ∈ [c − N, c + N + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiPair<T: Real> {
    pub center: i64,
    pub n: usize,
    pub energy: T,
    plus: Vec<DMatrix<T>>,
    minus: Vec<DMatrix<T>>,
}

impl<T: Real> PsiPair<T> {
    pub fn sites(&self) -> RangeInclusive<i64> {
        self.center - self.n as i64..=self.center + self.n as i64 + 1
    }

    fn index(&self, i: i64) -> Result<usize> {
        let r = self.sites();
        if !r.contains(&i) {
            return Err(Error::OutOfRange { site: i, lo: *r.start(), hi: *r.end() });
        }
        Ok((i - r.start()) as usize)
    }

    pub fn plus(&self, i: i64) -> Result<&DMatrix<T>> {
        Ok(&self.plus[self.index(i)?])
    }

    pub fn minus(&self, i: i64) -> Result<&DMatrix<T>> {
        Ok(&self.minus[self.index(i)?])
    }
}

fn shifted<T: Real>(real: &DisorderRealization<T>, x: i64, energy: T) -> Result<DMatrix<T>> {
    let v = real.potential(x)?;
    Ok(DMatrix::identity(v.nrows(), v.ncols()) * energy - v)
}

/// `ψ(i+1) = L_i⁻¹((E − V_i)ψ(i) − L_{i−1}ᵀψ(i−1))`.
fn forward<T: Real>(
    real: &DisorderRealization<T>,
    i: i64,
    energy: T,
    cur: &DMatrix<T>,
    prev: Option<&DMatrix<T>>,
) -> Result<DMatrix<T>> {
    let mut rhs = shifted(real, i, energy)? * cur;
    if let Some(p) = prev {
        rhs -= real.hopping(i - 1)?.transpose() * p;
    }
    Ok(inverse(real.hopping(i)?, &format!("L_{i}"))? * rhs)
}

/// `ψ(i−1) = L_{i−1}⁻ᵀ((E − V_i)ψ(i) − L_iψ(i+1))`.
fn backward<T: Real>(
    real: &DisorderRealization<T>,
    i: i64,
    energy: T,
    cur: &DMatrix<T>,
    next: Option<&DMatrix<T>>,
) -> Result<DMatrix<T>> {
    let mut rhs = shifted(real, i, energy)? * cur;
    if let Some(n) = next {
        rhs -= real.hopping(i)? * n;
    }
    Ok(inverse(&real.hopping(i - 1)?.transpose(), &format!("L_{}", i - 1))? * rhs)
}

/// Raw `Ψ^±` on the box `[c − N, c + N]`; the realization must cover it.
pub fn psi_matrices<T: Real>(real: &DisorderRealization<T>, center: i64, n: usize, energy: T) -> Result<PsiPair<T>> {
    let (lo, hi) = (center - n as i64, center + n as i64);
    real.require(lo, hi)?;
    let w = real.width();
    let len = 2 * n + 2;
    let id = DMatrix::<T>::identity(w, w);

    let mut plus = vec![DMatrix::zeros(w, w); len];
    plus[len - 2] = id.clone();
    for i in (lo + 1..=hi).rev() {
        let k = (i - lo) as usize;
        let next = (i < hi).then(|| &plus[k + 1]);
        plus[k - 1] = backward(real, i, energy, &plus[k], next)?;
    }

    let mut minus = vec![DMatrix::zeros(w, w); len];
    minus[0] = id;
    for i in lo..=hi {
        let k = (i - lo) as usize;
        let prev = (i > lo).then(|| &minus[k - 1]);
        minus[k + 1] = forward(real, i, energy, &minus[k], prev)?;
    }

    let blown = |ms: &[DMatrix<T>]| ms.iter().any(|m| m.iter().any(|v| !(v.abs().as_f64() <= PSI_OVERFLOW)));
    if blown(&plus) || blown(&minus) {
        return Err(Error::Numeric(format!(
            "raw Psi matrices overflow at N = {n}; use psi_ratios / green_diagonal for long boxes"
        )));
    }
    Ok(PsiPair { center, n, energy, plus, minus })
}

/// `G(c, c − N)`, `G(c, c + N)` and `G(c, c)` from the `Ψ` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiGreen<T: Real> {
    pub left: GreenBlock<T>,
    pub right: GreenBlock<T>,
    pub diagonal: GreenBlock<T>,
}

fn checked_inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let smin = smallest_singular_value(m);
    let scale = m.norm().as_f64();
    if !(smin > scale * <T as Real>::epsilon().as_f64()) {
        return Err(Error::Degenerate { what: what.into(), smin });
    }
    inverse(m, what)
}

/// `(R_i^+ − R_i^-)⁻¹ L_i⁻¹` with `R_i^± = Ψ_{i+1}^±(Ψ_i^±)⁻¹`.
fn diagonal_from_ratios<T: Real>(
    real: &DisorderRealization<T>,
    i: i64,
    r_plus: &DMatrix<T>,
    r_minus: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let diff = checked_inverse(&(r_plus - r_minus), "R^+ - R^-")?;
    Ok(diff * inverse(real.hopping(i)?, &format!("L_{i}"))?)
}

pub fn green_via_psi<T: Real>(real: &DisorderRealization<T>, center: i64, n: usize, energy: T) -> Result<PsiGreen<T>> {
    let psi = psi_matrices(real, center, n, energy)?;
    let c = center;
    let inv_plus = checked_inverse(psi.plus(c)?, "Psi^+_c")?;
    let inv_minus = checked_inverse(psi.minus(c)?, "Psi^-_c")?;
    let g = diagonal_from_ratios(real, c, &(psi.plus(c + 1)? * &inv_plus), &(psi.minus(c + 1)? * &inv_minus))?;
    // Column c is Ψ^+_j α^+ for j ≥ c and Ψ^-_j α^- for j ≤ c with
    // Ψ^±_c α^± = G(c, c); the far ends have Ψ = 1.
    let far_right = &inv_plus * &g;
    let far_left = &inv_minus * &g;
    let window = Window::centered(c, n as i64);
    let block = |value: DMatrix<T>, col: i64| GreenBlock {
        value,
        window,
        row_site: c,
        col_site: col,
        energy,
        method: GreenMethod::PsiFormula,
    };
    Ok(PsiGreen {
        left: block(far_left.transpose(), c - n as i64),
        right: block(far_right.transpose(), c + n as i64),
        diagonal: block(g, c),
    })
}

/// `R_i^± = Ψ_{i+1}^±(Ψ_i^±)⁻¹` for `i ∈ [c − N, c + N]`, propagated with
/// QR-normalized pairs so that long boxes do not overflow.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiRatios<T: Real> {
    pub center: i64,
    pub n: usize,
    plus: Vec<DMatrix<T>>,
    minus: Vec<DMatrix<T>>,
}

impl<T: Real> PsiRatios<T> {
    fn index(&self, i: i64) -> Result<usize> {
        let (lo, hi) = (self.center - self.n as i64, self.center + self.n as i64);
        if i < lo || i > hi {
            return Err(Error::OutOfRange { site: i, lo, hi });
        }
        Ok((i - lo) as usize)
    }

    pub fn plus(&self, i: i64) -> Result<&DMatrix<T>> {
        Ok(&self.plus[self.index(i)?])
    }

    pub fn minus(&self, i: i64) -> Result<&DMatrix<T>> {
        Ok(&self.minus[self.index(i)?])
    }
}

/// Right-multiply the pair `(a; b)` by a common factor making it orthonormal.
fn normalize_pair<T: Real>(a: DMatrix<T>, b: DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let w = a.nrows();
    let mut stacked = DMatrix::zeros(2 * w, w);
    stacked.view_mut((0, 0), (w, w)).copy_from(&a);
    stacked.view_mut((w, 0), (w, w)).copy_from(&b);
    let q = stacked.qr().q();
    (q.view((0, 0), (w, w)).into_owned(), q.view((w, 0), (w, w)).into_owned())
}

pub fn psi_ratios<T: Real>(real: &DisorderRealization<T>, center: i64, n: usize, energy: T) -> Result<PsiRatios<T>> {
    let (lo, hi) = (center - n as i64, center + n as i64);
    real.require(lo, hi)?;
    let w = real.width();
    let len = 2 * n + 1;
    let mut plus = vec![DMatrix::zeros(w, w); len];
    let mut minus = vec![DMatrix::zeros(w, w); len];

    // (upper, lower) = (Ψ_{i+1}, Ψ_i) up to a common right factor.
    let (mut upper, mut lower) = (DMatrix::zeros(w, w), DMatrix::identity(w, w));
    for i in (lo..=hi).rev() {
        let k = (i - lo) as usize;
        plus[k] = &upper * checked_inverse(&lower, &format!("Psi^+_{i}"))?;
        if i > lo {
            let below = backward(real, i, energy, &lower, Some(&upper))?;
            (upper, lower) = normalize_pair(lower, below);
        }
    }

    // (cur, prev) = (Ψ_i, Ψ_{i−1}).
    let (mut cur, mut prev) = (DMatrix::identity(w, w), DMatrix::zeros(w, w));
    for i in lo..=hi {
        let k = (i - lo) as usize;
        let next = forward(real, i, energy, &cur, Some(&prev).filter(|_| i > lo))?;
        minus[k] = &next * checked_inverse(&cur, &format!("Psi^-_{i}"))?;
        (cur, prev) = normalize_pair(next, cur);
    }
    Ok(PsiRatios { center, n, plus, minus })
}

/// `G(i, i)` for the box `[c − N, c + N]` via normalized ratios.
pub fn green_diagonal<T: Real>(
    real: &DisorderRealization<T>,
    center: i64,
    n: usize,
    i: i64,
    energy: T,
) -> Result<GreenBlock<T>> {
    let r = psi_ratios(real, center, n, energy)?;
    let value = diagonal_from_ratios(real, i, r.plus(i)?, r.minus(i)?)?;
    Ok(GreenBlock {
        value,
        window: Window::centered(center, n as i64),
        row_site: i,
        col_site: i,
        energy,
        method: GreenMethod::PsiFormula,
    })
}

/// `X^±` at site `i` of the box `[c − N, c + N]` and the diagonal block they
/// reconstruct, `G(i, i) = L_i⁻ᵀ (X^+ − X^-)⁻¹ L_i⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct XPair<T: Real> {
    pub site: i64,
    pub plus: DMatrix<T>,
    pub minus: DMatrix<T>,
    pub diagonal: GreenBlock<T>,
}

impl<T: Real> XPair<T> {
    /// `max_± ‖X − Xᵀ‖_F / ‖X‖_F`.
    pub fn symmetry_defect(&self) -> f64 {
        [&self.plus, &self.minus]
            .iter()
            .map(|x| {
                let s = x.norm().as_f64();
                let d = (*x - x.transpose()).norm().as_f64();
                if s > 0.0 {
                    d / s
                } else {
                    d
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `top · bottom⁻¹` of a `2W × W` pair of blocks.
fn block_ratio<T: Real>(top: DMatrix<T>, bottom: DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    Ok(top * checked_inverse(&bottom, what)?)
}

/// Push a `2W × W` pair through `steps`, re-orthonormalizing after each one.
/// Right multiplication leaves `top · bottom⁻¹` unchanged.
fn propagate<T: Real>(
    mut pair: DMatrix<T>,
    steps: impl Iterator<Item = i64>,
    step: impl Fn(i64) -> Result<DMatrix<T>>,
) -> Result<DMatrix<T>> {
    for k in steps {
        pair = (step(k)? * pair).qr().q();
    }
    Ok(pair)
}

/// `X^- = Φ̃_11 Φ̃_21⁻¹` for `Φ̃ = Φ̃_{i+1, c−N}` and `X^+ = Φ̃_12 Φ̃_22⁻¹`
/// for `Φ̃ = Φ̃_{i+1, c+N+1}`.
///
/// `X^+` is the ratio of the two halves of `Φ̃_{i+1,c+N+1}(0; 1)`. The first
/// inverse step sends `(0; 1)` to `(1; E − V_{c+N}) L_{c+N}⁻ᵀ`, so the
/// propagation starts from `(1; E − V_{c+N})` and never reads `L_{c+N}`.
pub fn x_matrices<T: Real>(
    real: &DisorderRealization<T>,
    center: i64,
    n: usize,
    i: i64,
    energy: T,
) -> Result<XPair<T>> {
    let (lo, hi) = (center - n as i64, center + n as i64);
    real.require(lo, hi)?;
    if i < lo || i > hi {
        return Err(Error::OutOfRange { site: i, lo, hi });
    }
    let w = real.width();
    let mut start = DMatrix::zeros(2 * w, w);
    start.view_mut((0, 0), (w, w)).fill_with_identity();
    let left = propagate(start.clone(), lo..=i, |k| Ok(conjugated_one_step(real, k, energy)?.entries))?;
    let minus = block_ratio(left.rows(0, w).into_owned(), left.rows(w, w).into_owned(), "(Phi~)_21")?;
    let plus = if i == hi {
        DMatrix::zeros(w, w)
    } else {
        let z = DMatrix::identity(w, w) * energy - real.potential(hi)?;
        start.view_mut((w, 0), (w, w)).copy_from(&z);
        let right = propagate(start, (i + 1..hi).rev(), |k| inverse_one_step(real, k, energy, true))?;
        block_ratio(right.rows(0, w).into_owned(), right.rows(w, w).into_owned(), "(Phi~)_22")?
    };
    let l_inv = inverse(real.hopping(i)?, &format!("L_{i}"))?;
    let core = checked_inverse(&(&plus - &minus), "X^+ - X^-")?;
    let value = l_inv.transpose() * core * &l_inv;
    Ok(XPair {
        site: i,
        plus,
        minus,
        diagonal: GreenBlock {
            value,
            window: Window::centered(center, n as i64),
            row_site: i,
            col_site: i,
            energy,
            method: GreenMethod::XFormula,
        },
    })
}

/// How far the `Ψ` and `X` routes are from the direct solve on one box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleMismatch {
    /// Largest relative mismatch over `G(c, c)` and `G(c, c ± N)`.
    pub psi: f64,
    /// Relative mismatch of `G(c, c)` rebuilt from `X^±`.
    pub x_reconstruction: f64,
    pub x_symmetry: f64,
    /// Relative change of `X^+` when `L_{c+N}` is replaced.
    pub x_boundary: f64,
    /// `G(c, c + N)` against `G(c + N, c)ᵀ`.
    pub green_symmetry: f64,
    /// `‖G(c, c + N)‖`.
    pub far_norm: f64,
}

/// Compare all three routes on the box `[c − N, c + N]`. Near-singular
/// energies and degenerate configurations surface as errors.
pub fn green_oracle<T: Real>(
    real: &DisorderRealization<T>,
    center: i64,
    n: usize,
    energy: T,
) -> Result<OracleMismatch> {
    let (c, ni) = (center, n as i64);
    let h = assemble(real, Window::centered(c, ni))?;
    let direct = |i, j| green_direct(&h, energy, i, j).map(|g| g.value);
    let (g00, gl, gr, gr_t) = (direct(c, c)?, direct(c, c - ni)?, direct(c, c + ni)?, direct(c + ni, c)?);
    let psi = green_via_psi(real, c, n, energy)?;
    let x = x_matrices(real, c, n, c, energy)?;
    let last = real.hopping(c + ni)?;
    let shift = T::lit(operator_norm(last) + 1.0);
    let replaced = real.with_hopping(c + ni, last + DMatrix::identity(last.nrows(), last.ncols()) * shift)?;
    let x2 = x_matrices(&replaced, c, n, c, energy)?;
    Ok(OracleMismatch {
        psi: relative_mismatch(&psi.diagonal.value, &g00)
            .max(relative_mismatch(&psi.left.value, &gl))
            .max(relative_mismatch(&psi.right.value, &gr)),
        x_reconstruction: relative_mismatch(&x.diagonal.value, &g00),
        x_symmetry: x.symmetry_defect(),
        x_boundary: relative_mismatch(&x2.plus, &x.plus),
        green_symmetry: relative_mismatch(&gr, &gr_t.transpose()),
        far_norm: operator_norm(&gr),
    })
}

/// Frequency of `dist(E, σ(H_{[−N,N]})) ≤ e^{−εN}` across an `N`-list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WegnerSample {
    pub energy: f64,
    pub epsilon: f64,
    pub ns: Vec<usize>,
    pub frequency: Vec<Proportion>,
    /// Fit of `log frequency` against `N` over lengths with any hit.
    pub fit: Option<LineFit>,
    pub monotone: bool,
}

/// `dist(E, σ(H_{[−N,N]}))` for replicas `0..replicas`.
pub fn wegner_distances<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let window = Window::centered(0, n as i64);
    (0..replicas as u64)
        .map(|r| {
            let real = sample_realization::<T>(spec, window, seed, r)?;
            let h = assemble(&real, window)?;
            let values = eigenvalues(&h)?;
            Ok(distance_in_sorted(&values, T::lit(energy)).as_f64())
        })
        .collect()
}

pub fn wegner_sample<T: Real>(
    spec: &EnsembleSpec,
    energy: f64,
    ns: &[usize],
    replicas: usize,
    epsilon: f64,
    seed: u64,
) -> Result<WegnerSample> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition("epsilon must be positive".into()));
    }
    let mut frequency = Vec::with_capacity(ns.len());
    for &n in ns {
        let threshold = (-epsilon * n as f64).exp();
        let hits = wegner_distances::<T>(spec, energy, n, replicas, seed)?.iter().filter(|&&d| d <= threshold).count();
        frequency.push(Proportion { hits, trials: replicas });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(&frequency)
        .filter(|(_, p)| p.hits > 0)
        .map(|(&n, p)| (n as f64, p.value().ln()))
        .unzip();
    Ok(WegnerSample {
        energy,
        epsilon,
        ns: ns.to_vec(),
        monotone: non_increasing_within(&frequency, 2.0),
        fit: fit_line(&xs, &ys),
        frequency,
    })
}

/// Resonant sites of a scan window at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub tau: f64,
    pub energy: f64,
    pub n: usize,
    pub window: Window,
    pub resonant_sites: Vec<i64>,
    /// `max − min` of the resonant sites; 0 for one site, −1 for none.
    pub diameter: i64,
    pub gamma_w_used: f64,
    /// Sites flagged because `‖L_x‖ > e^{τN}`.
    pub hopping_violations: Vec<i64>,
    /// Sites whose local box has `E` within the near-singular tolerance of
    /// its spectrum.
    pub near_singular_sites: Vec<i64>,
}

impl ResonanceReport {
    pub fn is_resonant(&self, x: i64) -> bool {
        self.resonant_sites.binary_search(&x).is_ok()
    }
}

fn diameter(sites: &[i64]) -> i64 {
    match (sites.first(), sites.last()) {
        (Some(a), Some(b)) => b - a,
        _ => -1,
    }
}

/// Far-end blocks `(G(x+N, x), G(x−N, x))` of the box `[x−N, x+N]`, or
/// `None` when `E` is numerically on its spectrum.
fn far_blocks<T: Real>(
    real: &DisorderRealization<T>,
    x: i64,
    n: usize,
    energy: T,
    tol: &Tolerances,
) -> Result<Option<(DMatrix<T>, DMatrix<T>)>> {
    let h = assemble(real, Window::centered(x, n as i64))?;
    match green_column(&h, energy, x, tol) {
        Ok(col) => {
            let last = col.len() - 1;
            Ok(Some((col[last].clone(), col[0].clone())))
        }
        Err(Error::NearSingular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// A site `x` is non-resonant when both `‖G(x, x±N)‖ ≤ e^{−(γ_W − τ)N}` on
/// the box `[x−N, x+N]` (operator norm) and `‖L_x‖ ≤ e^{τN}`.
pub fn resonance_set<T: Real>(
    real: &DisorderRealization<T>,
    tau: f64,
    energy: f64,
    n: usize,
    scan: Window,
    gamma_w: f64,
) -> Result<ResonanceReport> {
    if !(tau < gamma_w) {
        return Err(Error::Precondition(format!("tau = {tau} must be below gammaW = {gamma_w}")));
    }
    let reach = n as i64;
    real.require(scan.lo - reach, scan.hi + reach)?;
    let tol = Tolerances::default();
    let g_bound = (-(gamma_w - tau) * n as f64).exp();
    let l_bound = (tau * n as f64).exp();
    let mut resonant = Vec::new();
    let mut hopping_violations = Vec::new();
    let mut near_singular_sites = Vec::new();
    for x in scan.sites() {
        let mut flagged = false;
        if operator_norm(real.hopping(x)?) > l_bound {
            hopping_violations.push(x);
            flagged = true;
        }
        match far_blocks(real, x, n, T::lit(energy), &tol)? {
            // ‖Aᵀ‖ = ‖A‖, so the column blocks serve for row x as well.
            Some((right, left)) => {
                if operator_norm(&right) > g_bound || operator_norm(&left) > g_bound {
                    flagged = true;
                }
            }
            None => {
                near_singular_sites.push(x);
                flagged = true;
            }
        }
        if flagged {
            resonant.push(x);
        }
    }
    Ok(ResonanceReport {
        tau,
        energy,
        n,
        window: scan,
        diameter: diameter(&resonant),
        resonant_sites: resonant,
        gamma_w_used: gamma_w,
        hopping_violations,
        near_singular_sites,
    })
}

/// Grid energies at which site `x` is resonant in the entrywise-max sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResStarScan {
    pub site: i64,
    pub n: usize,
    pub tau: f64,
    pub gamma_ref: f64,
    pub energies: Vec<f64>,
    pub marked: Vec<bool>,
    /// Maximal runs of consecutive marked grid points.
    pub runs: usize,
    /// `W(W+1)·W(2N+1)/2`.
    pub run_bound: usize,
}

impl ResStarScan {
    pub fn marked_energies(&self) -> Vec<f64> {
        self.energies.iter().zip(&self.marked).filter(|(_, &m)| m).map(|(&e, _)| e).collect()
    }
}

pub fn res_star_bound(w: usize, n: usize) -> usize {
    w * (w + 1) * w * (2 * n + 1) / 2
}

/// Marks `E` when `max_± ‖G_E(x, x±N)‖_{1,∞} ≥ e^{−(γ − τ/2)N}`.
pub fn res_star_scan<T: Real>(
    real: &DisorderRealization<T>,
    x: i64,
    n: usize,
    energies: &[f64],
    tau: f64,
    gamma_ref: f64,
) -> Result<ResStarScan> {
    if energies.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Precondition("energy grid must be strictly increasing".into()));
    }
    real.require(x - n as i64, x + n as i64)?;
    let tol = Tolerances::default();
    let bound = (-(gamma_ref - tau / 2.0) * n as f64).exp();
    let mut marked = Vec::with_capacity(energies.len());
    for &e in energies {
        let hit = match far_blocks(real, x, n, T::lit(e), &tol)? {
            Some((right, left)) => entrywise_max_norm(&right).max(entrywise_max_norm(&left)) >= bound,
            None => true,
        };
        marked.push(hit);
    }
    let runs = marked.iter().enumerate().filter(|&(k, &m)| m && (k == 0 || !marked[k - 1])).count();
    Ok(ResStarScan {
        site: x,
        n,
        tau,
        gamma_ref,
        energies: energies.to_vec(),
        marked,
        runs,
        run_bound: res_star_bound(real.width(), n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScalarLaw;
    use crate::transfer::multi_step;
    use proptest::prelude::*;

    fn chain(potential: &[f64], hopping: f64, lo: i64) -> DisorderRealization<f64> {
        let n = potential.len();
        let w = Window::new(lo, lo + n as i64 - 1).unwrap();
        DisorderRealization::from_blocks(
            EnsembleSpec::free_strip(1),
            w,
            vec![DMatrix::from_element(1, 1, hopping); n],
            potential.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
        )
        .unwrap()
    }

    fn random(w: usize, n: usize, seed: u64) -> DisorderRealization<f64> {
        let spec = EnsembleSpec::anderson_strip(w, ScalarLaw::Uniform { lo: -1.0, hi: 1.0 });
        sample_realization(&spec, Window::centered(0, n as i64 + 1), seed, 0).unwrap()
    }

    fn wide_hopping(w: usize, n: usize, seed: u64) -> DisorderRealization<f64> {
        sample_realization(&EnsembleSpec::random_hopping(w, 0.4), Window::centered(0, n as i64 + 1), seed, 0).unwrap()
    }

    #[test]
    fn single_site_resolvent() {
        let r = chain(&[3.0], 1.0, 0);
        let h = assemble(&r, r.window()).unwrap();
        let g = green_direct(&h, 5.0, 0, 0).unwrap();
        assert!((g.value[(0, 0)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_site_resolvent() {
        let r = chain(&[0.0, 0.0], 1.0, 0);
        let h = assemble(&r, r.window()).unwrap();
        assert!((green_direct(&h, 2.0, 0, 0).unwrap().value[(0, 0)] + 2.0 / 3.0).abs() < 1e-14);
        assert!((green_direct(&h, 2.0, 0, 1).unwrap().value[(0, 0)] + 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn residual_and_symmetry_on_random_strip() {
        let r = random(2, 6, 3);
        let h = assemble(&r, Window::centered(0, 6)).unwrap();
        let dense = h.to_dense();
        let inv = (dense - DMatrix::identity(h.dim(), h.dim()) * 0.37).try_inverse().unwrap();
        for (i, j) in [(-6, 6), (0, 3), (2, -1)] {
            let g = green_direct(&h, 0.37, i, j).unwrap().value;
            let gt = green_direct(&h, 0.37, j, i).unwrap().value.transpose();
            assert!(relative_mismatch(&g, &gt) < 1e-8);
            let (a, b) = (((i + 6) * 2) as usize, ((j + 6) * 2) as usize);
            assert!(relative_mismatch(&g, &inv.view((a, b), (2, 2)).into_owned()) < 1e-10);
        }
    }

    #[test]
    fn near_singular_energy_is_refused() {
        let r = chain(&[0.0, 0.0], 1.0, 0);
        let h = assemble(&r, r.window()).unwrap();
        match green_direct(&h, 1.0, 0, 0) {
            Err(Error::NearSingular { dist }) => assert!(dist < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn complex_energy_matches_dense_inverse() {
        let r = random(2, 3, 5);
        let h = assemble(&r, Window::centered(0, 3)).unwrap();
        let e = Complex::new(0.2, 0.05);
        let dense = h.to_dense().map(|v| Complex::new(v, 0.0)) - DMatrix::identity(h.dim(), h.dim()) * e;
        let inv = dense.try_inverse().unwrap();
        let g = green_direct_complex(&h, e, -3, 2).unwrap().value;
        let expect = inv.view((0, 10), (2, 2)).into_owned();
        assert!((g - expect).norm() < 1e-10);
    }

    #[test]
    fn psi_boundary_and_free_chain() {
        let r = chain(&[0.0; 5], 1.0, -2);
        let psi = psi_matrices(&r, 0, 2, 2.0).unwrap();
        assert_eq!(psi.plus(2).unwrap()[(0, 0)], 1.0);
        assert_eq!(psi.minus(-2).unwrap()[(0, 0)], 1.0);
        assert_eq!(psi.plus(3).unwrap()[(0, 0)], 0.0);
        assert!((psi.plus(0).unwrap()[(0, 0)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn psi_matches_both_cocycle_extractions() {
        let r = wide_hopping(3, 5, 11);
        let psi = psi_matrices(&r, 0, 5, 0.3).unwrap();
        let w = 3;
        for i in -5..=5 {
            let top = multi_step(&r, i, 6, 0.3, false).unwrap().entries.view((0, w), (w, w)).into_owned();
            let bottom = multi_step(&r, i + 1, 6, 0.3, false).unwrap().entries.view((w, w), (w, w)).into_owned();
            assert!(relative_mismatch(&top, psi.plus(i).unwrap()) < 1e-8);
            assert!(relative_mismatch(&bottom, psi.plus(i).unwrap()) < 1e-8);
            let top = multi_step(&r, i, -5, 0.3, false).unwrap().entries.view((0, 0), (w, w)).into_owned();
            let bottom = multi_step(&r, i + 1, -5, 0.3, false).unwrap().entries.view((w, 0), (w, w)).into_owned();
            assert!(relative_mismatch(&top, psi.minus(i).unwrap()) < 1e-8);
            assert!(relative_mismatch(&bottom, psi.minus(i).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn psi_formula_on_free_chain() {
        let r = chain(&[0.0; 5], 1.0, -2);
        let h = assemble(&r, r.window()).unwrap();
        let g = green_via_psi(&r, 0, 2, 2.0).unwrap();
        for (block, col) in [(&g.diagonal, 0), (&g.left, -2), (&g.right, 2)] {
            let d = green_direct(&h, 2.0, 0, col).unwrap();
            assert!((block.value[(0, 0)] - d.value[(0, 0)]).abs() < 1e-10);
        }
    }

    #[test]
    fn psi_formula_at_the_edge() {
        // For i = c + N − 1 and i = c + N the ratio formula must still hold.
        let r = random(2, 4, 9);
        let ratios = psi_ratios(&r, 0, 4, 0.1).unwrap();
        let h = assemble(&r, Window::centered(0, 4)).unwrap();
        for i in [3, 4, -4] {
            let g = diagonal_from_ratios(&r, i, ratios.plus(i).unwrap(), ratios.minus(i).unwrap()).unwrap();
            let d = green_direct(&h, 0.1, i, i).unwrap().value;
            assert!(relative_mismatch(&g, &d) < 1e-10, "i={i}");
        }
    }

    #[test]
    fn normalized_diagonal_survives_long_boxes() {
        let spec = EnsembleSpec::anderson_strip(2, ScalarLaw::Uniform { lo: -6.0, hi: 6.0 });
        let r = sample_realization::<f64>(&spec, Window::centered(0, 400), 1, 0).unwrap();
        assert!(psi_matrices(&r, 0, 400, 0.3).is_err());
        let h = assemble(&r, Window::centered(0, 400)).unwrap();
        for i in [-400, 0, 17, 400] {
            let g = green_diagonal(&r, 0, 400, i, 0.3).unwrap().value;
            let d = green_direct(&h, 0.3, i, i).unwrap().value;
            assert!(relative_mismatch(&g, &d) < 1e-6, "i={i}");
        }
    }

    #[test]
    fn x_matrices_reconstruct_scalar_diagonal() {
        let r = chain(&[0.0; 7], 1.0, -3);
        let h = assemble(&r, r.window()).unwrap();
        for i in -3..=3 {
            let x = x_matrices(&r, 0, 3, i, 2.5).unwrap();
            let g = green_direct(&h, 2.5, i, i).unwrap().value[(0, 0)];
            assert!((x.plus[(0, 0)] - x.minus[(0, 0)] - 1.0 / g).abs() < 1e-10);
        }
    }

    #[test]
    fn x_plus_ignores_last_hopping() {
        let r = wide_hopping(3, 6, 2);
        let a = x_matrices(&r, 0, 6, 1, -0.4).unwrap();
        let r2 = r.with_hopping(6, DMatrix::identity(3, 3)).unwrap();
        let b = x_matrices(&r2, 0, 6, 1, -0.4).unwrap();
        assert!(relative_mismatch(&a.plus, &b.plus) < 1e-10);
    }

    #[test]
    fn wegner_free_chain_outside_band() {
        let s = wegner_sample::<f64>(&EnsembleSpec::free_strip(1), 3.0, &[5, 10, 20], 10, 0.1, 0).unwrap();
        assert!(s.frequency.iter().all(|p| p.hits == 0));
    }

    #[test]
    fn wegner_distances_are_seeded() {
        let spec = EnsembleSpec::anderson_strip(1, ScalarLaw::Uniform { lo: -1.0, hi: 1.0 });
        let a = wegner_distances::<f64>(&spec, 0.0, 10, 20, 4).unwrap();
        let b = wegner_distances::<f64>(&spec, 0.0, 10, 20, 4).unwrap();
        assert_eq!(a, b);
        let head = wegner_distances::<f64>(&spec, 0.0, 10, 5, 4).unwrap();
        assert_eq!(&a[..5], &head[..]);
    }

    #[test]
    fn free_chain_off_band_is_not_resonant() {
        let r = sample_realization::<f64>(&EnsembleSpec::free_strip(1), Window::new(-30, 30).unwrap(), 0, 0).unwrap();
        let gamma = ((3.0 + 5f64.sqrt()) / 2.0).ln();
        let rep = resonance_set(&r, 0.1, 3.0, 10, Window::new(-20, 20).unwrap(), gamma).unwrap();
        assert!(rep.resonant_sites.is_empty());
        assert_eq!(rep.diameter, -1);
    }

    #[test]
    fn tau_at_or_above_gamma_is_rejected() {
        let r = random(1, 12, 0);
        let err = resonance_set(&r, 0.5, 0.0, 4, Window::new(-2, 2).unwrap(), 0.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn res_star_empty_off_band() {
        let r = sample_realization::<f64>(&EnsembleSpec::free_strip(1), Window::new(-10, 10).unwrap(), 0, 0).unwrap();
        let grid: Vec<f64> = (0..1000).map(|k| 3.0 + k as f64 * 1e-3).collect();
        let scan = res_star_scan(&r, 0, 8, &grid, 0.1, 0.9).unwrap();
        assert_eq!(scan.runs, 0);
        assert!(scan.marked_energies().is_empty());
    }

    #[test]
    fn res_star_runs_bounded_and_refinement_monotone() {
        for seed in 0..5 {
            let r = random(2, 6, seed);
            let coarse: Vec<f64> = (0..400).map(|k| -3.0 + k as f64 * 0.015).collect();
            let fine: Vec<f64> = (0..799).map(|k| -3.0 + k as f64 * 0.0075).collect();
            let a = res_star_scan(&r, 0, 5, &coarse, 0.1, 0.3).unwrap();
            let b = res_star_scan(&r, 0, 5, &fine, 0.1, 0.3).unwrap();
            assert!(a.runs <= a.run_bound && b.runs <= b.run_bound);
            // Coarse points are every other fine point.
            for (k, &m) in a.marked.iter().enumerate() {
                assert_eq!(m, b.marked[2 * k]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn psi_and_x_routes_agree_with_direct(w in 1usize..=4, n in 2usize..=12, seed in 0u64..10_000, e in -2.0f64..2.0) {
            let r = wide_hopping(w, n, seed);
            let h = assemble(&r, Window::centered(0, n as i64)).unwrap();
            let ni = n as i64;
            let direct = |i, j| green_direct(&h, e, i, j).map(|g| g.value);
            let (Ok(g00), Ok(gl), Ok(gr)) = (direct(0, 0), direct(0, -ni), direct(0, ni)) else {
                return Ok(());
            };
            let psi = green_via_psi(&r, 0, n, e).unwrap();
            prop_assert!(relative_mismatch(&psi.diagonal.value, &g00) < 1e-6);
            prop_assert!(relative_mismatch(&psi.left.value, &gl) < 1e-6);
            prop_assert!(relative_mismatch(&psi.right.value, &gr) < 1e-6);
            let x = x_matrices(&r, 0, n, 0, e).unwrap();
            prop_assert!(x.symmetry_defect() < 1e-8);
            prop_assert!(relative_mismatch(&x.diagonal.value, &g00) < 1e-6);
        }

        #[test]
        fn oracle_bundle_within_tolerance(w in 1usize..=3, n in 2usize..=10, seed in 0u64..10_000, e in -2.0f64..2.0) {
            let r = random(w, n, seed);
            if let Ok(m) = green_oracle(&r, 0, n, e) {
                prop_assert!(m.psi < 1e-6 && m.x_reconstruction < 1e-6);
                prop_assert!(m.x_symmetry < 1e-8 && m.x_boundary < 1e-10 && m.green_symmetry < 1e-8);
            }
        }

        #[test]
        fn green_is_symmetric(w in 1usize..=3, n in 1usize..=8, seed in 0u64..10_000, i in -8i64..=8, j in -8i64..=8) {
            let r = random(w, n, seed);
            let h = assemble(&r, Window::centered(0, n as i64)).unwrap();
            let (i, j) = (i.clamp(-(n as i64), n as i64), j.clamp(-(n as i64), n as i64));
            if let (Ok(a), Ok(b)) = (green_direct(&h, 0.123, i, j), green_direct(&h, 0.123, j, i)) {
                prop_assert!(relative_mismatch(&a.value, &b.value.transpose()) < 1e-8);
            }
        }
    }
}
