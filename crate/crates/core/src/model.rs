//! Disorder ensembles, sampled realizations and finite-volume operators.
//!
//! The operator acts on `ℓ²(ℤ → ℝ^W)` as
//! `(Hψ)(x) = L_x ψ(x+1) + V_x ψ(x) + L_{x-1}ᵀ ψ(x-1)` with i.i.d. blocks
//! `(L_x, V_x)`. The distribution catalogue is closed: every family below
//! is one for which localisation is known to hold.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::MatrixJson;
use crate::rng::{substream, Tag};
use crate::scalar::Real;

pub const SCHEMA_VERSION: u32 = 1;

/// Hopping blocks with smallest singular value at or below this are redrawn.
pub const MIN_HOPPING_SINGULAR_VALUE: f64 = 1e-12;

const MAX_REDRAWS: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    AndersonStrip,
    BlockAnderson,
    WegnerOrbital,
    RandomHopping,
    Custom,
}

/// Scalar laws available for matrix entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ScalarLaw {
    /// Uniform on `[lo, hi]`; `lo == hi` is the point mass.
    Uniform { lo: f64, hi: f64 },
    /// `v1` with probability `1 - p`, `v2` with probability `p`.
    Bernoulli { p: f64, v1: f64, v2: f64 },
    Gaussian { mean: f64, std: f64 },
    Cauchy { loc: f64, scale: f64 },
}

impl ScalarLaw {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            ScalarLaw::Uniform { lo, hi } => {
                if !finite(&[lo, hi]) || hi < lo {
                    return Err(Error::Config(format!("uniform law needs finite lo <= hi, got [{lo}, {hi}]")));
                }
            }
            ScalarLaw::Bernoulli { p, v1, v2 } => {
                if !finite(&[p, v1, v2]) || !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("bernoulli law needs p in [0, 1], got {p}")));
                }
            }
            ScalarLaw::Gaussian { mean, std } => {
                if !finite(&[mean, std]) || std <= 0.0 {
                    return Err(Error::Config(format!("gaussian law needs std > 0, got {std}")));
                }
            }
            ScalarLaw::Cauchy { loc, scale } => {
                if !finite(&[loc, scale]) || scale <= 0.0 {
                    return Err(Error::Config(format!("cauchy law needs scale > 0, got {scale}")));
                }
            }
        }
        Ok(())
    }

    /// Draw one value. The law must already be validated.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarLaw::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            ScalarLaw::Bernoulli { p, v1, v2 } => {
                let u: f64 = rng.random();
                if u < p {
                    v2
                } else {
                    v1
                }
            }
            ScalarLaw::Gaussian { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
            ScalarLaw::Cauchy { loc, scale } => Cauchy::new(loc, scale).expect("validated").sample(rng),
        }
    }

    fn strictly_positive_support(&self) -> bool {
        match *self {
            ScalarLaw::Uniform { lo, .. } => lo > 0.0,
            ScalarLaw::Bernoulli { v1, v2, p } => (p == 1.0 || v1 > 0.0) && (p == 0.0 || v2 > 0.0),
            ScalarLaw::Gaussian { .. } | ScalarLaw::Cauchy { .. } => false,
        }
    }
}

/// Deterministic symmetric matrix added to the random diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    #[default]
    None,
    /// Ones on the first off-diagonal: the transverse Laplacian of the strip.
    StripLaplacian,
    /// Arbitrary symmetric `W × W` matrix, row-major.
    Matrix { rows: Vec<Vec<f64>> },
}

impl Background {
    fn matrix(&self, w: usize) -> DMatrix<f64> {
        match self {
            Background::None => DMatrix::zeros(w, w),
            Background::StripLaplacian => {
                DMatrix::from_fn(w, w, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
            }
            Background::Matrix { rows } => DMatrix::from_fn(w, w, |i, j| rows[i][j]),
        }
    }

    fn validate(&self, w: usize) -> Result<()> {
        if let Background::Matrix { rows } = self {
            if rows.len() != w || rows.iter().any(|r| r.len() != w) {
                return Err(Error::Config(format!("background matrix must be {w}x{w}")));
            }
            for i in 0..w {
                for j in 0..w {
                    if !rows[i][j].is_finite() || rows[i][j] != rows[j][i] {
                        return Err(Error::Config("background matrix must be finite and symmetric".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Law of the potential block `V_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialDist {
    /// `V ≡ 0`.
    Zero,
    /// Deterministic background plus i.i.d. diagonal entries.
    DiagonalIid {
        law: ScalarLaw,
        #[serde(default)]
        background: Background,
    },
    /// Symmetric matrix with i.i.d. entries on and above the diagonal.
    SymmetricIid { diagonal: ScalarLaw, off_diagonal: ScalarLaw },
}

/// Law of the hopping block `L_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoppingDist {
    Identity,
    /// Diagonal with i.i.d. positive entries.
    DiagonalPositive { law: ScalarLaw },
    /// `1 + δ·G` with `G` having i.i.d. Uniform(-1, 1) entries.
    IdentityPlusPerturbation { delta: f64 },
}

/// Distribution of `(L_0, V_0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub schema_version: u32,
    pub family: Family,
    pub width: usize,
    pub potential: PotentialDist,
    pub hopping: HoppingDist,
    /// Claimed finite-moment exponent.
    pub eta: f64,
}

impl EnsembleSpec {
    /// Anderson model on the strip `ℤ × {1..W}`: unit hopping along the
    /// strip, transverse Laplacian plus i.i.d. site energies in `V`.
    pub fn anderson_strip(width: usize, law: ScalarLaw) -> Self {
        EnsembleSpec {
            schema_version: SCHEMA_VERSION,
            family: Family::AndersonStrip,
            width,
            potential: PotentialDist::DiagonalIid { law, background: Background::StripLaplacian },
            hopping: HoppingDist::Identity,
            eta: 1.0,
        }
    }

    /// Strip with `V ≡` background only and unit hopping.
    pub fn free_strip(width: usize) -> Self {
        Self::anderson_strip(width, ScalarLaw::Uniform { lo: 0.0, hi: 0.0 })
    }

    pub fn block_anderson(width: usize, diagonal: ScalarLaw, off_diagonal: ScalarLaw) -> Self {
        EnsembleSpec {
            schema_version: SCHEMA_VERSION,
            family: Family::BlockAnderson,
            width,
            potential: PotentialDist::SymmetricIid { diagonal, off_diagonal },
            hopping: HoppingDist::Identity,
            eta: 1.0,
        }
    }

    /// Wegner orbital model: unit hopping and GOE-like blocks with
    /// off-diagonal variance `coupling²` and diagonal variance `2·coupling²`.
    pub fn wegner_orbital(width: usize, coupling: f64) -> Self {
        EnsembleSpec {
            family: Family::WegnerOrbital,
            ..Self::block_anderson(
                width,
                ScalarLaw::Gaussian { mean: 0.0, std: coupling * std::f64::consts::SQRT_2 },
                ScalarLaw::Gaussian { mean: 0.0, std: coupling },
            )
        }
    }

    /// Off-diagonal model: `V ≡ 0`, `L = 1 + δ·G`.
    pub fn random_hopping(width: usize, delta: f64) -> Self {
        EnsembleSpec {
            schema_version: SCHEMA_VERSION,
            family: Family::RandomHopping,
            width,
            potential: PotentialDist::Zero,
            hopping: HoppingDist::IdentityPlusPerturbation { delta },
            eta: 1.0,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.width == 0 {
            return Err(Error::Config("width must be at least 1".into()));
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        match &self.potential {
            PotentialDist::Zero => {}
            PotentialDist::DiagonalIid { law, background } => {
                law.validate()?;
                background.validate(self.width)?;
            }
            PotentialDist::SymmetricIid { diagonal, off_diagonal } => {
                diagonal.validate()?;
                off_diagonal.validate()?;
            }
        }
        match &self.hopping {
            HoppingDist::Identity => {}
            HoppingDist::DiagonalPositive { law } => {
                law.validate()?;
                if !law.strictly_positive_support() {
                    return Err(Error::Config("diagonal hopping law must have positive support".into()));
                }
            }
            HoppingDist::IdentityPlusPerturbation { delta } => {
                if !(delta.is_finite() && *delta > 0.0) {
                    return Err(Error::Config(format!("perturbation delta must be positive, got {delta}")));
                }
            }
        }
        let family_ok = match self.family {
            Family::AndersonStrip => {
                self.hopping == HoppingDist::Identity
                    && matches!(
                        self.potential,
                        PotentialDist::DiagonalIid { background: Background::StripLaplacian, .. }
                    )
            }
            Family::BlockAnderson => self.hopping == HoppingDist::Identity,
            Family::WegnerOrbital => {
                self.hopping == HoppingDist::Identity
                    && matches!(self.potential, PotentialDist::SymmetricIid { .. })
            }
            Family::RandomHopping => self.hopping != HoppingDist::Identity,
            Family::Custom => true,
        };
        if !family_ok {
            return Err(Error::Config(format!("hopping/potential laws inconsistent with family {:?}", self.family)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: EnsembleSpec = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Stable hex digest of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Draw `V_x` for one site.
    pub fn sample_potential(&self, seed: u64, replica: u64, site: i64) -> DMatrix<f64> {
        let w = self.width;
        let mut rng = substream(seed, replica, site, Tag::Potential);
        match &self.potential {
            PotentialDist::Zero => DMatrix::zeros(w, w),
            PotentialDist::DiagonalIid { law, background } => {
                let mut v = background.matrix(w);
                for i in 0..w {
                    v[(i, i)] += law.sample(&mut rng);
                }
                v
            }
            PotentialDist::SymmetricIid { diagonal, off_diagonal } => {
                let mut v = DMatrix::zeros(w, w);
                for i in 0..w {
                    v[(i, i)] = diagonal.sample(&mut rng);
                    for j in i + 1..w {
                        let a = off_diagonal.sample(&mut rng);
                        v[(i, j)] = a;
                        v[(j, i)] = a;
                    }
                }
                v
            }
        }
    }

    /// Draw `L_x` for one site, redrawing numerically singular blocks.
    /// Returns the block and the number of rejected draws.
    pub fn sample_hopping(&self, seed: u64, replica: u64, site: i64) -> Result<(DMatrix<f64>, u32)> {
        let mut rng = substream(seed, replica, site, Tag::Hopping);
        let mut rejections = 0;
        loop {
            let l = self.draw_hopping(&mut rng);
            if self.hopping == HoppingDist::Identity || smallest_singular_value(&l) > MIN_HOPPING_SINGULAR_VALUE {
                return Ok((l, rejections));
            }
            rejections += 1;
            if rejections >= MAX_REDRAWS {
                return Err(Error::Numeric(format!(
                    "hopping law produced {MAX_REDRAWS} singular draws at site {site}"
                )));
            }
        }
    }

    fn draw_hopping(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let w = self.width;
        match &self.hopping {
            HoppingDist::Identity => DMatrix::identity(w, w),
            HoppingDist::DiagonalPositive { law } => {
                DMatrix::from_diagonal(&nalgebra::DVector::from_fn(w, |_, _| law.sample(rng)))
            }
            HoppingDist::IdentityPlusPerturbation { delta } => {
                let mut l = DMatrix::identity(w, w);
                for i in 0..w {
                    for j in 0..w {
                        let u: f64 = rng.random();
                        l[(i, j)] += delta * (2.0 * u - 1.0);
                    }
                }
                l
            }
        }
    }
}

pub(crate) fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Inclusive range of sites `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Window { lo, hi })
    }

    /// `[center - half, center + half]`.
    pub fn centered(center: i64, half: i64) -> Self {
        Window { lo: center - half, hi: center + half }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    pub fn offset(&self, x: i64) -> Result<usize> {
        if self.contains(x) {
            Ok((x - self.lo) as usize)
        } else {
            Err(Error::OutOfRange { site: x, lo: self.lo, hi: self.hi })
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Sampled blocks `{L_x}`, `{V_x}` over a window.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization<T: Real> {
    spec: EnsembleSpec,
    window: Window,
    hopping: Vec<DMatrix<T>>,
    potential: Vec<DMatrix<T>>,
    seed: u64,
    replica_id: u64,
    rejections: u64,
}

/// Sample the blocks of every site in `window`.
///
/// Each site uses its own stream addressed by `(seed, replica_id, site)`, so
/// the result restricted to a sub-window equals a direct sample of the
/// sub-window.
pub fn sample_realization<T: Real>(
    spec: &EnsembleSpec,
    window: Window,
    seed: u64,
    replica_id: u64,
) -> Result<DisorderRealization<T>> {
    spec.validate()?;
    Window::new(window.lo, window.hi)?;
    let mut hopping = Vec::with_capacity(window.len());
    let mut potential = Vec::with_capacity(window.len());
    let mut rejections = 0u64;
    for x in window.sites() {
        let (l, r) = spec.sample_hopping(seed, replica_id, x)?;
        rejections += r as u64;
        hopping.push(l.map(T::lit));
        potential.push(spec.sample_potential(seed, replica_id, x).map(T::lit));
    }
    Ok(DisorderRealization { spec: spec.clone(), window, hopping, potential, seed, replica_id, rejections })
}

impl<T: Real> DisorderRealization<T> {
    /// Build a realization from explicit blocks (one per site of `window`).
    pub fn from_blocks(
        spec: EnsembleSpec,
        window: Window,
        hopping: Vec<DMatrix<T>>,
        potential: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        let w = spec.width;
        if hopping.len() != window.len() || potential.len() != window.len() {
            return Err(Error::Config("one hopping and one potential block per site required".into()));
        }
        for (l, v) in hopping.iter().zip(&potential) {
            if l.shape() != (w, w) || v.shape() != (w, w) {
                return Err(Error::Config(format!("blocks must be {w}x{w}")));
            }
            if v != &v.transpose() {
                return Err(Error::Config("potential blocks must be symmetric".into()));
            }
        }
        Ok(DisorderRealization { spec, window, hopping, potential, seed: 0, replica_id: 0, rejections: 0 })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica_id(&self) -> u64 {
        self.replica_id
    }

    /// Number of singular hopping draws that were rejected.
    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    pub fn hopping(&self, x: i64) -> Result<&DMatrix<T>> {
        Ok(&self.hopping[self.window.offset(x)?])
    }

    pub fn potential(&self, x: i64) -> Result<&DMatrix<T>> {
        Ok(&self.potential[self.window.offset(x)?])
    }

    /// Copy with `L_x` replaced.
    pub fn with_hopping(&self, x: i64, l: DMatrix<T>) -> Result<Self> {
        let k = self.window.offset(x)?;
        let mut out = self.clone();
        out.hopping[k] = l;
        Ok(out)
    }

    pub fn require(&self, lo: i64, hi: i64) -> Result<()> {
        for x in [lo, hi] {
            self.window.offset(x)?;
        }
        Ok(())
    }

    /// Serialized form with row-major matrices.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Repr<'a> {
            schema_version: u32,
            spec: &'a EnsembleSpec,
            window: Window,
            seed: u64,
            replica_id: u64,
            hopping: Vec<MatrixJson>,
            potential: Vec<MatrixJson>,
        }
        let repr = Repr {
            schema_version: SCHEMA_VERSION,
            spec: &self.spec,
            window: self.window,
            seed: self.seed,
            replica_id: self.replica_id,
            hopping: self.hopping.iter().map(MatrixJson::from_matrix).collect(),
            potential: self.potential.iter().map(MatrixJson::from_matrix).collect(),
        };
        serde_json::to_string(&repr).expect("realization serializes")
    }
}

/// Symmetric block-tridiagonal restriction `H_Λ` of the operator to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator<T: Real> {
    window: Window,
    width: usize,
    diagonal: Vec<DMatrix<T>>,
    upper: Vec<DMatrix<T>>,
}

/// Restrict the operator to `bx`: block `(x, x)` is `V_x`, block `(x, x+1)`
/// is `L_x` and block `(x+1, x)` is `L_xᵀ`.
pub fn assemble<T: Real>(real: &DisorderRealization<T>, bx: Window) -> Result<BlockOperator<T>> {
    if !real.window.contains_window(&bx) {
        let site = if real.window.contains(bx.lo) { bx.hi } else { bx.lo };
        return Err(Error::OutOfRange { site, lo: real.window.lo, hi: real.window.hi });
    }
    let diagonal = bx.sites().map(|x| real.potential(x).cloned()).collect::<Result<Vec<_>>>()?;
    let upper = (bx.lo..bx.hi).map(|x| real.hopping(x).cloned()).collect::<Result<Vec<_>>>()?;
    Ok(BlockOperator { window: bx, width: real.width(), diagonal, upper })
}

impl<T: Real> BlockOperator<T> {
    pub fn from_blocks(window: Window, diagonal: Vec<DMatrix<T>>, upper: Vec<DMatrix<T>>) -> Result<Self> {
        let width = diagonal.first().map(|d| d.nrows()).unwrap_or(0);
        if diagonal.len() != window.len() || upper.len() + 1 != window.len() || width == 0 {
            return Err(Error::Config("block counts do not match the window".into()));
        }
        Ok(BlockOperator { window, width, diagonal, upper })
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.width * self.window.len()
    }

    pub fn diagonal_block(&self, x: i64) -> Result<&DMatrix<T>> {
        Ok(&self.diagonal[self.window.offset(x)?])
    }

    /// `L_x`, the `(x, x+1)` block.
    pub fn upper_block(&self, x: i64) -> Result<&DMatrix<T>> {
        let k = self.window.offset(x)?;
        self.upper.get(k).ok_or(Error::OutOfRange { site: x + 1, lo: self.window.lo, hi: self.window.hi })
    }

    pub(crate) fn diagonal_blocks(&self) -> &[DMatrix<T>] {
        &self.diagonal
    }

    pub(crate) fn upper_blocks(&self) -> &[DMatrix<T>] {
        &self.upper
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let w = self.width;
        let mut h = DMatrix::zeros(self.dim(), self.dim());
        for (k, v) in self.diagonal.iter().enumerate() {
            h.view_mut((k * w, k * w), (w, w)).copy_from(v);
        }
        for (k, l) in self.upper.iter().enumerate() {
            h.view_mut((k * w, (k + 1) * w), (w, w)).copy_from(l);
            h.view_mut(((k + 1) * w, k * w), (w, w)).copy_from(&l.transpose());
        }
        h
    }

    /// Frobenius norm, computed blockwise.
    pub fn frobenius_norm(&self) -> T {
        let two = T::lit(2.0);
        let mut s = T::zero();
        for v in &self.diagonal {
            s += v.norm_squared();
        }
        for l in &self.upper {
            s += two * l.norm_squared();
        }
        s.sqrt()
    }

    /// True when the tridiagonal structure is scalar (`W = 1`).
    pub fn is_scalar_chain(&self) -> bool {
        self.width == 1
    }
}

/// Monte-Carlo estimate of one moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Draws whose norm power was not finite.
    pub non_finite: usize,
    /// Running means at sample sizes `n/2^k` (ascending sample size).
    pub running: Vec<(usize, f64)>,
    /// Hill estimate of the tail index of `‖·‖^η`.
    pub tail_index: f64,
    /// Set when the tail index indicates an infinite mean.
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentDiagnostic {
    pub eta: f64,
    pub samples: usize,
    pub potential: MomentEstimate,
    pub hopping: MomentEstimate,
    pub hopping_inverse: MomentEstimate,
}

impl MomentDiagnostic {
    pub fn any_heavy_tail(&self) -> bool {
        self.potential.heavy_tail || self.hopping.heavy_tail || self.hopping_inverse.heavy_tail
    }
}

/// Hill estimates at or below this flag an infinite first moment.
pub const HEAVY_TAIL_INDEX: f64 = 1.25;

/// Estimate `E‖V_0‖^η`, `E‖L_0‖^η` and `E‖L_0^{-1}‖^η` (operator norms).
pub fn moment_diagnostic(spec: &EnsembleSpec, samples: usize, seed: u64) -> Result<MomentDiagnostic> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::Precondition("samples must be at least 1".into()));
    }
    let eta = spec.eta;
    let mut pv = Vec::with_capacity(samples);
    let mut pl = Vec::with_capacity(samples);
    let mut pli = Vec::with_capacity(samples);
    for k in 0..samples as i64 {
        let v = spec.sample_potential(seed, 0, k);
        let (l, _) = spec.sample_hopping(seed, 0, k)?;
        let sv = l.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        pv.push(operator_norm(&v).powf(eta));
        pl.push(smax.powf(eta));
        pli.push((1.0 / smin).powf(eta));
    }
    Ok(MomentDiagnostic {
        eta,
        samples,
        potential: summarize_moment(&pv),
        hopping: summarize_moment(&pl),
        hopping_inverse: summarize_moment(&pli),
    })
}

pub(crate) fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

fn summarize_moment(draws: &[f64]) -> MomentEstimate {
    let finite: Vec<f64> = draws.iter().copied().filter(|x| x.is_finite()).collect();
    let non_finite = draws.len() - finite.len();
    let stats = crate::stats::MeanStd::from_slice(&finite);
    let mut running = Vec::new();
    let mut m = finite.len();
    while m >= 1 && running.len() < 8 {
        running.push((m, finite[..m].iter().sum::<f64>() / m as f64));
        m /= 2;
    }
    running.reverse();
    let tail_index = hill_tail_index(&finite);
    MomentEstimate {
        mean: stats.mean,
        stderr: stats.stderr(),
        non_finite,
        running,
        tail_index,
        heavy_tail: non_finite > 0 || tail_index <= HEAVY_TAIL_INDEX,
    }
}

/// Hill estimator over the top `√n` order statistics; `+∞` for bounded or
/// degenerate samples.
fn hill_tail_index(draws: &[f64]) -> f64 {
    let mut xs: Vec<f64> = draws.iter().copied().filter(|x| *x > 0.0).collect();
    if xs.len() < 16 {
        return f64::INFINITY;
    }
    xs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let k = (xs.len() as f64).sqrt() as usize;
    let threshold = xs[k];
    let mean_log: f64 = xs[..k].iter().map(|x| (x / threshold).ln()).sum::<f64>() / k as f64;
    if mean_log <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / mean_log
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(lo: f64, hi: f64) -> ScalarLaw {
        ScalarLaw::Uniform { lo, hi }
    }

    #[test]
    fn zero_width_uniform_is_deterministic() {
        let spec = EnsembleSpec::anderson_strip(1, uniform(0.0, 0.0));
        let r = sample_realization::<f64>(&spec, Window::new(-3, 3).unwrap(), 99, 0).unwrap();
        for x in -3..=3 {
            assert_eq!(r.potential(x).unwrap()[(0, 0)], 0.0);
            assert_eq!(r.hopping(x).unwrap()[(0, 0)], 1.0);
        }
    }

    #[test]
    fn bernoulli_strip_support() {
        let spec =
            EnsembleSpec::anderson_strip(2, ScalarLaw::Bernoulli { p: 0.5, v1: -1.0, v2: 1.0 });
        let r = sample_realization::<f64>(&spec, Window::new(0, 199).unwrap(), 5, 0).unwrap();
        let mut seen = [false; 2];
        for x in 0..200 {
            let v = r.potential(x).unwrap();
            for i in 0..2 {
                let d = v[(i, i)];
                assert!(d == -1.0 || d == 1.0);
                seen[(d > 0.0) as usize] = true;
            }
            assert_eq!(v[(0, 1)], 1.0);
            assert_eq!(v[(1, 0)], 1.0);
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn reproducible_and_replica_sensitive() {
        let spec = EnsembleSpec::anderson_strip(3, uniform(-1.0, 1.0));
        let w = Window::new(-5, 5).unwrap();
        let a = sample_realization::<f64>(&spec, w, 11, 2).unwrap();
        let b = sample_realization::<f64>(&spec, w, 11, 2).unwrap();
        let c = sample_realization::<f64>(&spec, w, 11, 3).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a.potential(0).unwrap(), c.potential(0).unwrap());
    }

    #[test]
    fn nested_windows_agree() {
        let spec = EnsembleSpec::random_hopping(2, 0.4);
        let big = sample_realization::<f64>(&spec, Window::new(-10, 10).unwrap(), 3, 1).unwrap();
        let small = sample_realization::<f64>(&spec, Window::new(-2, 4).unwrap(), 3, 1).unwrap();
        for x in -2..=4 {
            assert_eq!(big.hopping(x).unwrap(), small.hopping(x).unwrap());
            assert_eq!(big.potential(x).unwrap(), small.potential(x).unwrap());
        }
    }

    #[test]
    fn potential_blocks_are_exactly_symmetric() {
        let spec = EnsembleSpec::wegner_orbital(4, 0.7);
        let r = sample_realization::<f64>(&spec, Window::new(0, 50).unwrap(), 1, 0).unwrap();
        for x in 0..=50 {
            let v = r.potential(x).unwrap();
            assert_eq!(v, &v.transpose());
        }
    }

    #[test]
    fn hopping_is_invertible() {
        let spec = EnsembleSpec::random_hopping(3, 0.9);
        let r = sample_realization::<f64>(&spec, Window::new(0, 200).unwrap(), 2, 0).unwrap();
        for x in 0..=200 {
            assert!(smallest_singular_value(r.hopping(x).unwrap()) > MIN_HOPPING_SINGULAR_VALUE);
        }
    }

    #[test]
    fn diagonal_hopping_needs_positive_support() {
        let spec = EnsembleSpec {
            hopping: HoppingDist::DiagonalPositive { law: ScalarLaw::Bernoulli { p: 0.5, v1: 1.0, v2: 2.0 } },
            ..EnsembleSpec::random_hopping(1, 1.0)
        };
        assert!(spec.validate().is_ok());
        let bad = EnsembleSpec {
            hopping: HoppingDist::DiagonalPositive { law: ScalarLaw::Bernoulli { p: 0.5, v1: 0.0, v2: 2.0 } },
            ..spec.clone()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let custom = EnsembleSpec {
            family: Family::Custom,
            hopping: HoppingDist::IdentityPlusPerturbation { delta: 1.0 },
            ..spec
        };
        let r = sample_realization::<f64>(&custom, Window::new(0, 100).unwrap(), 0, 0).unwrap();
        assert_eq!(r.rejections(), 0);
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let bad = EnsembleSpec::anderson_strip(2, ScalarLaw::Gaussian { mean: 0.0, std: 0.0 });
        assert!(matches!(sample_realization::<f64>(&bad, Window::new(0, 1).unwrap(), 0, 0), Err(Error::Config(_))));
        let bad = EnsembleSpec::anderson_strip(2, ScalarLaw::Cauchy { loc: 0.0, scale: -1.0 });
        assert!(bad.validate().is_err());
        let bad = EnsembleSpec::anderson_strip(0, uniform(0.0, 1.0));
        assert!(bad.validate().is_err());
        let mut bad = EnsembleSpec::anderson_strip(2, uniform(0.0, 1.0));
        bad.hopping = HoppingDist::IdentityPlusPerturbation { delta: 0.1 };
        assert!(bad.validate().is_err());
        assert!(Window::new(3, 2).is_err());
    }

    #[test]
    fn unknown_family_is_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&EnsembleSpec::free_strip(1).to_json()).unwrap();
        v["family"] = "bethe-lattice".into();
        assert!(matches!(EnsembleSpec::from_json(&v.to_string()), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip_keeps_schema_version() {
        let spec = EnsembleSpec::wegner_orbital(3, 0.5);
        let text = spec.to_json();
        assert!(text.contains("\"schema_version\":1"));
        assert_eq!(EnsembleSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn assemble_scalar_examples() {
        let spec = EnsembleSpec::free_strip(1);
        let r = DisorderRealization::<f64>::from_blocks(
            spec.clone(),
            Window::new(0, 0).unwrap(),
            vec![DMatrix::identity(1, 1)],
            vec![DMatrix::from_element(1, 1, 3.0)],
        )
        .unwrap();
        let h = assemble(&r, Window::new(0, 0).unwrap()).unwrap();
        assert_eq!(h.to_dense(), DMatrix::from_element(1, 1, 3.0));

        let r = sample_realization::<f64>(&spec, Window::new(0, 1).unwrap(), 0, 0).unwrap();
        let h = assemble(&r, Window::new(0, 1).unwrap()).unwrap();
        assert_eq!(h.to_dense(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn assembled_operator_is_symmetric() {
        let spec = EnsembleSpec::random_hopping(2, 0.5);
        let spec = EnsembleSpec {
            potential: PotentialDist::DiagonalIid { law: uniform(-1.0, 1.0), background: Background::None },
            ..spec
        };
        let r = sample_realization::<f64>(&spec, Window::new(0, 9).unwrap(), 4, 0).unwrap();
        let h = assemble(&r, Window::new(2, 7).unwrap()).unwrap().to_dense();
        assert_eq!((&h - h.transpose()).norm(), 0.0);
        assert_eq!(h.view((0, 2), (2, 2)), r.hopping(2).unwrap().view((0, 0), (2, 2)));
    }

    #[test]
    fn assemble_out_of_range() {
        let r = sample_realization::<f64>(&EnsembleSpec::free_strip(1), Window::new(0, 3).unwrap(), 0, 0).unwrap();
        assert!(matches!(assemble(&r, Window::new(1, 5).unwrap()), Err(Error::OutOfRange { site: 5, .. })));
    }

    #[test]
    fn moment_diagnostic_deterministic_ensemble() {
        let spec = EnsembleSpec::free_strip(1);
        let d = moment_diagnostic(&spec, 100, 0).unwrap();
        assert_eq!(d.potential.mean, 0.0);
        assert_eq!(d.hopping.mean, 1.0);
        assert_eq!(d.hopping_inverse.mean, 1.0);
        assert!(!d.any_heavy_tail());
    }

    #[test]
    fn moment_diagnostic_uniform_abs_mean() {
        let spec = EnsembleSpec::anderson_strip(1, uniform(-1.0, 1.0));
        let d = moment_diagnostic(&spec, 20_000, 3).unwrap();
        assert!((d.potential.mean - 0.5).abs() < 3.0 * d.potential.stderr, "{:?}", d.potential);
    }

    #[test]
    fn moment_diagnostic_flags_cauchy_blow_up() {
        let law = ScalarLaw::Cauchy { loc: 0.0, scale: 1.0 };
        let light = moment_diagnostic(&EnsembleSpec::anderson_strip(1, law).with_eta(0.5), 50_000, 9).unwrap();
        assert!(light.potential.mean.is_finite());
        assert!(!light.potential.heavy_tail, "{:?}", light.potential.tail_index);
        let heavy = moment_diagnostic(&EnsembleSpec::anderson_strip(1, law).with_eta(2.0), 50_000, 9).unwrap();
        assert!(heavy.potential.heavy_tail, "{:?}", heavy.potential.tail_index);
        let r = &heavy.potential.running;
        assert!(r.last().unwrap().1 > r.first().unwrap().1);
    }
}
