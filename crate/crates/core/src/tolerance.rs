//! Numerical tolerances used by the structural checks.
//!
//! Defaults are chosen for double precision; every field can be overridden
//! from an experiment configuration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// `‖T̃ᵀJT̃ − J‖_F ≤ symplectic_step · ‖T̃‖_F²` for one conjugated step.
    pub symplectic_step: f64,
    /// Same bound for products of up to a thousand conjugated steps.
    pub symplectic_product: f64,
    /// Cocycle and propagation identities, relative to factor norms.
    pub cocycle: f64,
    /// Resolvent residual `‖(H−E)G − δ‖ ≤ residual · ‖G‖·‖H−E‖`.
    pub residual: f64,
    /// Green-function symmetry `G(i,j) = G(j,i)ᵀ`.
    pub green_symmetry: f64,
    /// Agreement of the transfer-matrix formulas with the direct solve.
    pub green_oracle: f64,
    /// Symmetry defect of the `X^±` matrices.
    pub x_symmetry: f64,
    /// Invariance of `X^+` under replacing the last hopping block.
    pub x_boundary: f64,
    /// Distance to the spectrum below which a resolvent is refused.
    pub near_singular: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            symplectic_step: 1e-10,
            symplectic_product: 1e-6,
            cocycle: 1e-8,
            residual: 1e-8,
            green_symmetry: 1e-8,
            green_oracle: 1e-6,
            x_symmetry: 1e-8,
            x_boundary: 1e-10,
            near_singular: 1e-12,
        }
    }
}
