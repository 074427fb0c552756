//! One-step and multi-step transfer matrices and their symplectic
//! conjugates.
//!
//! For a formal solution of `Hψ = Eψ` the pair `(ψ(x+1), ψ(x))` is obtained
//! from `(ψ(x), ψ(x-1))` by
//!
//! ```text
//! T_x(E) = [ L_x⁻¹(E − V_x)   −L_x⁻¹ L_{x−1}ᵀ ]
//!          [ 1                 0              ]
//! ```
//!
//! `T_x` is not symplectic, but `T̃_x = D_x T_x D_{x−1}⁻¹ = Q(L_x, E − V_x)`
//! with `D_x = diag(1, L_xᵀ)` is.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DisorderRealization;
use crate::scalar::Real;

/// Longest segment [`multi_step`] multiplies out directly. Longer products
/// overflow and must go through the stabilized accumulators in
/// [`crate::lyapunov`].
pub const MAX_RAW_STEPS: i64 = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix<T: Real> {
    pub entries: DMatrix<T>,
    pub energy: T,
    pub site: i64,
    /// `false` for `T_x`, `true` for the symplectic `T̃_x`.
    pub conjugated: bool,
}

/// `Φ_{to, from}`: maps `(ψ(from), ψ(from−1))` to `(ψ(to), ψ(to−1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CocycleSegment<T: Real> {
    pub entries: DMatrix<T>,
    pub from: i64,
    pub to: i64,
    pub energy: T,
    pub conjugated: bool,
}

/// The standard skew form `J = [[0, −1], [1, 0]]` on `ℝ^{2W}`.
pub fn symplectic_form<T: Real>(w: usize) -> DMatrix<T> {
    let mut j = DMatrix::zeros(2 * w, 2 * w);
    for i in 0..w {
        j[(i, w + i)] = -T::one();
        j[(w + i, i)] = T::one();
    }
    j
}

/// `‖MᵀJM − J‖_F`.
pub fn symplectic_defect<T: Real>(m: &DMatrix<T>) -> T {
    let j = symplectic_form::<T>(m.nrows() / 2);
    (m.transpose() * &j * m - j).norm()
}

/// Symplectic defect divided by `‖M‖_F²`. Evaluated on `M/s` with `s` the
/// largest entry, against `J/s²`, so that long products do not overflow.
pub fn relative_symplectic_defect<T: Real>(m: &DMatrix<T>) -> T {
    let s = m.amax();
    if s == T::zero() {
        return symplectic_defect(m);
    }
    let scaled = m / s;
    let j = symplectic_form::<T>(m.nrows() / 2);
    (scaled.transpose() * &j * &scaled - j / (s * s)).norm() / scaled.norm_squared()
}

/// Inverse of a symplectic matrix: `J⁻¹MᵀJ`.
pub fn symplectic_inverse<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let j = symplectic_form::<T>(m.nrows() / 2);
    -(&j * m.transpose() * &j)
}

pub(crate) fn inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    m.clone().lu().try_inverse().filter(|inv| inv.iter().all(|v| v.is_finite())).ok_or_else(|| {
        Error::Degenerate { what: what.to_string(), smin: smallest_singular_value(m) }
    })
}

pub(crate) fn smallest_singular_value<T: Real>(m: &DMatrix<T>) -> f64 {
    m.singular_values().iter().map(|s| s.as_f64()).fold(f64::INFINITY, f64::min)
}

/// `Q(L, Z) = [[L⁻¹Z, −L⁻¹], [Lᵀ, 0]]`, symplectic for symmetric `Z`.
pub fn q_matrix<T: Real>(l: &DMatrix<T>, z: &DMatrix<T>) -> Result<DMatrix<T>> {
    let w = l.nrows();
    let lu = l.clone().lu();
    let linv_z = lu.solve(z).ok_or_else(|| Error::Degenerate { what: "L".into(), smin: smallest_singular_value(l) })?;
    let linv = lu.try_inverse().ok_or_else(|| Error::Degenerate { what: "L".into(), smin: 0.0 })?;
    let mut q = DMatrix::zeros(2 * w, 2 * w);
    q.view_mut((0, 0), (w, w)).copy_from(&linv_z);
    q.view_mut((0, w), (w, w)).copy_from(&(-linv));
    q.view_mut((w, 0), (w, w)).copy_from(&l.transpose());
    Ok(q)
}

/// `D_x = diag(1, L_xᵀ)`.
pub fn conjugator<T: Real>(real: &DisorderRealization<T>, x: i64) -> Result<DMatrix<T>> {
    let l = real.hopping(x)?;
    let w = l.nrows();
    let mut d = DMatrix::identity(2 * w, 2 * w);
    d.view_mut((w, w), (w, w)).copy_from(&l.transpose());
    Ok(d)
}

fn shifted_energy<T: Real>(v: &DMatrix<T>, energy: T) -> DMatrix<T> {
    DMatrix::identity(v.nrows(), v.ncols()) * energy - v
}

/// `T_x(E)`. Needs sites `x − 1` and `x` in the realization.
pub fn one_step<T: Real>(real: &DisorderRealization<T>, x: i64, energy: T) -> Result<TransferMatrix<T>> {
    let w = real.width();
    let l = real.hopping(x)?;
    let l_prev = real.hopping(x - 1)?;
    let z = shifted_energy(real.potential(x)?, energy);
    let lu = l.clone().lu();
    let degenerate = || Error::Degenerate { what: format!("L_{x}"), smin: smallest_singular_value(l) };
    let a = lu.solve(&z).ok_or_else(degenerate)?;
    let b = -lu.solve(&l_prev.transpose()).ok_or_else(degenerate)?;
    let mut t = DMatrix::zeros(2 * w, 2 * w);
    t.view_mut((0, 0), (w, w)).copy_from(&a);
    t.view_mut((0, w), (w, w)).copy_from(&b);
    t.view_mut((w, 0), (w, w)).fill_with_identity();
    Ok(TransferMatrix { entries: t, energy, site: x, conjugated: false })
}

/// `T̃_x(E) = Q(L_x, E − V_x)`. Needs only site `x`.
pub fn conjugated_one_step<T: Real>(real: &DisorderRealization<T>, x: i64, energy: T) -> Result<TransferMatrix<T>> {
    let z = shifted_energy(real.potential(x)?, energy);
    let entries = q_matrix(real.hopping(x)?, &z)?;
    Ok(TransferMatrix { entries, energy, site: x, conjugated: true })
}

/// `T_x(E)⁻¹` (or `T̃_x(E)⁻¹`).
///
/// The conjugated inverse is the explicit symplectic inverse; the plain one
/// is `[[0, 1], [B⁻¹, −B⁻¹A]]` with `B = −L_x⁻¹L_{x−1}ᵀ`, solved directly.
pub fn inverse_one_step<T: Real>(
    real: &DisorderRealization<T>,
    x: i64,
    energy: T,
    conjugated: bool,
) -> Result<DMatrix<T>> {
    if conjugated {
        return Ok(symplectic_inverse(&conjugated_one_step(real, x, energy)?.entries));
    }
    let w = real.width();
    let l = real.hopping(x)?;
    let l_prev = real.hopping(x - 1)?;
    let z = shifted_energy(real.potential(x)?, energy);
    // B⁻¹ = −L_{x−1}^{−ᵀ} L_x and −B⁻¹A = L_{x−1}^{−ᵀ}(E − V_x).
    let lu = l_prev.transpose().lu();
    let degenerate = || Error::Degenerate { what: format!("L_{}", x - 1), smin: smallest_singular_value(l_prev) };
    let binv = -lu.solve(l).ok_or_else(degenerate)?;
    let c = lu.solve(&z).ok_or_else(degenerate)?;
    let mut t = DMatrix::zeros(2 * w, 2 * w);
    t.view_mut((0, w), (w, w)).fill_with_identity();
    t.view_mut((w, 0), (w, w)).copy_from(&binv);
    t.view_mut((w, w), (w, w)).copy_from(&c);
    Ok(t)
}

/// `Φ_{x,y}(E)`, or its conjugate `Φ̃_{x,y}(E)`.
///
/// `Φ_{x,y} = T_{x−1}⋯T_y` for `x > y`, the identity for `x = y` and
/// `T_x⁻¹⋯T_{y−1}⁻¹` for `x < y`. Refuses segments longer than
/// [`MAX_RAW_STEPS`].
pub fn multi_step<T: Real>(
    real: &DisorderRealization<T>,
    x: i64,
    y: i64,
    energy: T,
    conjugated: bool,
) -> Result<CocycleSegment<T>> {
    if (x - y).abs() > MAX_RAW_STEPS {
        return Err(Error::Precondition(format!(
            "segment length {} exceeds {MAX_RAW_STEPS}; use the stabilized accumulators",
            (x - y).abs()
        )));
    }
    let w = real.width();
    let mut m = DMatrix::identity(2 * w, 2 * w);
    if x > y {
        for k in y..x {
            let t = step(real, k, energy, conjugated)?;
            m = t * m;
        }
    } else {
        for k in x..y {
            m *= inverse_one_step(real, k, energy, conjugated)?;
        }
    }
    Ok(CocycleSegment { entries: m, from: y, to: x, energy, conjugated })
}

fn step<T: Real>(real: &DisorderRealization<T>, x: i64, energy: T, conjugated: bool) -> Result<DMatrix<T>> {
    Ok(if conjugated { conjugated_one_step(real, x, energy)? } else { one_step(real, x, energy)? }.entries)
}

/// `Φ̃_{x,y} = D_{x−1} Φ_{x,y} D_{y−1}⁻¹` from a plain segment.
pub fn conjugate_segment<T: Real>(real: &DisorderRealization<T>, seg: &CocycleSegment<T>) -> Result<DMatrix<T>> {
    let left = conjugator(real, seg.to - 1)?;
    let right = inverse(&conjugator(real, seg.from - 1)?, "D")?;
    Ok(left * &seg.entries * right)
}

/// `‖A − B‖_F / (‖A‖_F · ‖B‖_F)`-style relative mismatch with a caller
/// supplied scale.
#[cfg(test)]
pub(crate) fn scaled_mismatch<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, scale: T) -> T {
    (a - b).norm() / scale
}
