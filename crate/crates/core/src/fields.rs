//! Matrix-valued smooth periodic fields on T^d stored as finite Fourier
//! data: potentials E, connections ω_μ / A_μ, and field strengths Ω_{μν}.
//!
//! Normalization is metric-independent: φ(x) = (2π)^{-d/2} Σ_k φ̂(k) e^{ikx}.
//! Coefficient storage is sparse; absent keys are zero. Reality conventions:
//! E hermitian (Ê(-k) = Ê(k)†), connections antihermitian
//! (ω̂(-k) = -ω̂(k)†), which makes L = -(g^{μν}∇_μ∇_ν + E) symmetric.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeVector;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Reality constraint on the coefficient family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    /// coeffs(-k) = coeffs(k)†
    Hermitian,
    /// coeffs(-k) = -coeffs(k)†
    AntiHermitian,
    Unconstrained,
}

const SYMMETRY_TOL: f64 = 1e-14;

/// Matrix-valued periodic field with band-limited Fourier support.
#[derive(Debug, Clone)]
pub struct FourierField {
    dim: usize,
    fiber_rank: usize,
    symmetry: Symmetry,
    coeffs: BTreeMap<LatticeVector, CMat>,
}

impl FourierField {
    pub fn zero(dim: usize, fiber_rank: usize, symmetry: Symmetry) -> Self {
        FourierField {
            dim,
            fiber_rank,
            symmetry,
            coeffs: BTreeMap::new(),
        }
    }

    /// Builds a field from explicit modes, validating shapes and the
    /// symmetry flag (within 1e-14 of the coefficient scale).
    pub fn from_modes(
        dim: usize,
        fiber_rank: usize,
        symmetry: Symmetry,
        modes: Vec<(LatticeVector, CMat)>,
    ) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (k, m) in modes {
            if k.dim() != dim {
                return Err(Error::shape(format!(
                    "mode {:?} has dimension {}, field dimension is {dim}",
                    k.as_slice(),
                    k.dim()
                )));
            }
            if m.nrows() != fiber_rank || m.ncols() != fiber_rank {
                return Err(Error::shape(format!(
                    "mode {:?} coefficient is {}x{}, fiber rank is {fiber_rank}",
                    k.as_slice(),
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::FieldData(format!(
                    "mode {:?} has non-finite entries",
                    k.as_slice()
                )));
            }
            if m.iter().any(|c| c.norm_sqr() != 0.0) {
                coeffs.insert(k, m);
            }
        }
        let field = FourierField {
            dim,
            fiber_rank,
            symmetry,
            coeffs,
        };
        field.check_symmetry()?;
        Ok(field)
    }

    fn check_symmetry(&self) -> Result<()> {
        if self.symmetry == Symmetry::Unconstrained {
            return Ok(());
        }
        let scale = self
            .coeffs
            .values()
            .map(|m| m.iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(1.0, f64::max);
        let sign = match self.symmetry {
            Symmetry::Hermitian => 1.0,
            Symmetry::AntiHermitian => -1.0,
            Symmetry::Unconstrained => unreachable!(),
        };
        for (k, m) in &self.coeffs {
            let want = self.coeff(&k.neg());
            let got = m.adjoint() * Complex::new(sign, 0.0);
            let resid = (&want - &got).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if resid > SYMMETRY_TOL * scale {
                return Err(Error::Symmetry(format!(
                    "{:?} flag violated at mode {:?}: residual {resid:.3e}",
                    self.symmetry,
                    k.as_slice()
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fiber_rank(&self) -> usize {
        self.fiber_rank
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    /// Largest |k_i| over stored modes.
    pub fn bandwidth(&self) -> i64 {
        self.coeffs.keys().map(|k| k.max_abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient at k (zero matrix if absent).
    pub fn coeff(&self, k: &LatticeVector) -> CMat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.fiber_rank, self.fiber_rank))
    }

    pub fn mode(&self, k: &LatticeVector) -> Option<&CMat> {
        self.coeffs.get(k)
    }

    /// Modes in deterministic (lexicographic) order.
    pub fn modes(&self) -> impl Iterator<Item = (&LatticeVector, &CMat)> {
        self.coeffs.iter()
    }

    pub fn num_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// Pointwise value (2π)^{-d/2} Σ_k coeffs(k) e^{ik·x}.
    pub fn evaluate_at(&self, x: &[f64]) -> CMat {
        assert_eq!(x.len(), self.dim, "evaluation point dimension mismatch");
        let mut out = CMat::zeros(self.fiber_rank, self.fiber_rank);
        for (k, m) in &self.coeffs {
            let phase: f64 = k.as_slice().iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
            out += m * Complex::new(0.0, phase).exp();
        }
        out * Complex::new((2.0 * PI).powf(-(self.dim as f64) / 2.0), 0.0)
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, m)| (k.clone(), m * factor))
            .collect();
        FourierField {
            dim: self.dim,
            fiber_rank: self.fiber_rank,
            symmetry: Symmetry::Unconstrained,
            coeffs,
        }
    }

    /// Conjugates every coefficient by a constant matrix: Â(k) -> U Â(k) U†.
    pub fn conjugated(&self, u: &CMat) -> Result<Self> {
        if u.nrows() != self.fiber_rank || u.ncols() != self.fiber_rank {
            return Err(Error::shape("conjugation matrix does not match fiber rank".to_string()));
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, m)| (k.clone(), u * m * u.adjoint()))
            .collect();
        Ok(FourierField {
            dim: self.dim,
            fiber_rank: self.fiber_rank,
            symmetry: self.symmetry,
            coeffs,
        })
    }

    /// Σ_k tr(â(-k) b̂(k)) = ∫ tr(A B) dx (Parseval).
    pub fn pair_contraction(&self, other: &FourierField) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (k, b) in &other.coeffs {
            if let Some(a) = self.coeffs.get(&k.neg()) {
                s += (a * b).trace();
            }
        }
        s
    }

    /// Constant (k = 0 only) field.
    pub fn constant(dim: usize, value: CMat, symmetry: Symmetry) -> Result<Self> {
        let n = value.nrows();
        // φ(x) = (2π)^{-d/2} φ̂(0) ⇒ φ̂(0) = (2π)^{d/2} value
        let coeff = value * Complex::new((2.0 * PI).powf(dim as f64 / 2.0), 0.0);
        FourierField::from_modes(dim, n, symmetry, vec![(LatticeVector::zeros(dim), coeff)])
    }

    /// Scalar field c·cos(k·x) (hermitian when c is real).
    pub fn scalar_cos(dim: usize, k: LatticeVector, amplitude: f64) -> Result<Self> {
        let half = (2.0 * PI).powf(dim as f64 / 2.0) * amplitude / 2.0;
        let m = CMat::from_element(1, 1, Complex::new(half, 0.0));
        FourierField::from_modes(
            dim,
            1,
            Symmetry::Hermitian,
            vec![(k.neg(), m.clone()), (k, m)],
        )
    }
}

/// d-tuple of antihermitian connection components ω_μ.
#[derive(Debug, Clone)]
pub struct GaugeField {
    components: Vec<FourierField>,
}

impl GaugeField {
    pub fn new(components: Vec<FourierField>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::shape("gauge field needs at least one component".to_string()));
        }
        let dim = components[0].dim();
        let n = components[0].fiber_rank();
        if components.len() != dim {
            return Err(Error::shape(format!(
                "gauge field has {} components for dimension {dim}",
                components.len()
            )));
        }
        for (mu, c) in components.iter().enumerate() {
            if c.dim() != dim || c.fiber_rank() != n {
                return Err(Error::shape(format!(
                    "gauge component {mu} has dim {} / rank {}, expected {dim} / {n}",
                    c.dim(),
                    c.fiber_rank()
                )));
            }
            if c.symmetry() != Symmetry::AntiHermitian {
                return Err(Error::Symmetry(format!(
                    "gauge component {mu} is not flagged antihermitian"
                )));
            }
        }
        Ok(GaugeField { components })
    }

    pub fn zero(dim: usize, fiber_rank: usize) -> Self {
        GaugeField {
            components: (0..dim)
                .map(|_| FourierField::zero(dim, fiber_rank, Symmetry::AntiHermitian))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn fiber_rank(&self) -> usize {
        self.components[0].fiber_rank()
    }

    pub fn component(&self, mu: usize) -> &FourierField {
        &self.components[mu]
    }

    pub fn components(&self) -> &[FourierField] {
        &self.components
    }

    pub fn bandwidth(&self) -> i64 {
        self.components.iter().map(|c| c.bandwidth()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.is_zero())
    }
}

/// Antisymmetric array Ω_{μν}; entries above the diagonal are stored, the
/// rest are derived from Ω_{μν} = -Ω_{νμ}.
#[derive(Debug, Clone)]
pub struct FieldStrength {
    dim: usize,
    fiber_rank: usize,
    upper: Vec<FourierField>, // (μ,ν) with μ<ν in row-major order
}

impl FieldStrength {
    fn upper_index(&self, mu: usize, nu: usize) -> usize {
        // position of (μ,ν), μ<ν, in row-major upper-triangular order
        mu * self.dim - mu * (mu + 1) / 2 + (nu - mu - 1)
    }

    /// Ω_{μν} with sign resolved from antisymmetry.
    pub fn component(&self, mu: usize, nu: usize) -> FourierField {
        if mu == nu {
            return FourierField::zero(self.dim, self.fiber_rank, Symmetry::AntiHermitian);
        }
        if mu < nu {
            self.upper[self.upper_index(mu, nu)].clone()
        } else {
            self.upper[self.upper_index(nu, mu)].scaled(Complex::new(-1.0, 0.0))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fiber_rank(&self) -> usize {
        self.fiber_rank
    }

    pub fn is_zero(&self) -> bool {
        self.upper.iter().all(|f| f.is_zero())
    }

    pub fn bandwidth(&self) -> i64 {
        self.upper.iter().map(|f| f.bandwidth()).max().unwrap_or(0)
    }
}

/// Ω̂_{μν}(k) = i k_μ ω̂_ν(k) - i k_ν ω̂_μ(k)
///            + (2π)^{-d/2} Σ_{k'} [ω̂_μ(k-k') ω̂_ν(k') - ω̂_ν(k-k') ω̂_μ(k')].
pub fn field_strength(omega: &GaugeField) -> Result<FieldStrength> {
    let d = omega.dim();
    let n = omega.fiber_rank();
    let conv_norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    let mut upper = Vec::new();
    for mu in 0..d {
        for nu in (mu + 1)..d {
            let om = omega.component(mu);
            let on = omega.component(nu);
            let mut acc: BTreeMap<LatticeVector, CMat> = BTreeMap::new();
            let mut add = |k: LatticeVector, m: CMat| {
                acc.entry(k)
                    .and_modify(|e| *e += &m)
                    .or_insert(m);
            };
            for (k, c) in on.modes() {
                add(k.clone(), c * Complex::new(0.0, k.as_slice()[mu] as f64));
            }
            for (k, c) in om.modes() {
                add(k.clone(), c * Complex::new(0.0, -(k.as_slice()[nu] as f64)));
            }
            for (k1, c1) in om.modes() {
                for (k2, c2) in on.modes() {
                    let prod = (c1 * c2) * Complex::new(conv_norm, 0.0);
                    add(k1.add(k2), prod);
                }
            }
            for (k1, c1) in on.modes() {
                for (k2, c2) in om.modes() {
                    let prod = (c1 * c2) * Complex::new(-conv_norm, 0.0);
                    add(k1.add(k2), prod);
                }
            }
            let modes: Vec<_> = acc.into_iter().collect();
            upper.push(FourierField::from_modes(d, n, Symmetry::AntiHermitian, modes)?);
        }
    }
    Ok(FieldStrength {
        dim: d,
        fiber_rank: n,
        upper,
    })
}

/// Abelian pure-gauge connection ω_μ = i ∂_μ α · Id_n from a real scalar α.
pub fn pure_gauge(alpha: &FourierField, fiber_rank: usize) -> Result<GaugeField> {
    if alpha.fiber_rank() != 1 {
        return Err(Error::shape("pure_gauge: α must be a scalar (fiber rank 1)".to_string()));
    }
    if alpha.symmetry() != Symmetry::Hermitian {
        return Err(Error::Symmetry("pure_gauge: α must be real (hermitian flag)".to_string()));
    }
    let d = alpha.dim();
    let id = CMat::identity(fiber_rank, fiber_rank);
    let mut comps = Vec::with_capacity(d);
    for mu in 0..d {
        let mut modes = Vec::new();
        for (k, c) in alpha.modes() {
            // ω̂_μ(k) = i (i k_μ) α̂(k) Id = -k_μ α̂(k) Id
            let f = -(k.as_slice()[mu] as f64) * c[(0, 0)];
            if f.norm_sqr() != 0.0 {
                modes.push((k.clone(), &id * f));
            }
        }
        comps.push(FourierField::from_modes(
            d,
            fiber_rank,
            Symmetry::AntiHermitian,
            modes,
        )?);
    }
    GaugeField::new(comps)
}

// --- JSON serialization -----------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeJson {
    pub k: Vec<i64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Wire format: {"dim": d, "fiber_rank": n, "modes": [{"k": [..], "re": [[..]], "im": [[..]]}]}
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldJson {
    pub dim: usize,
    pub fiber_rank: usize,
    pub modes: Vec<ModeJson>,
}

impl FourierField {
    pub fn to_json(&self) -> FieldJson {
        let modes = self
            .coeffs
            .iter()
            .map(|(k, m)| {
                let n = self.fiber_rank;
                let re = (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)].re).collect())
                    .collect();
                let im = (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)].im).collect())
                    .collect();
                ModeJson {
                    k: k.as_slice().to_vec(),
                    re,
                    im,
                }
            })
            .collect();
        FieldJson {
            dim: self.dim,
            fiber_rank: self.fiber_rank,
            modes,
        }
    }

    /// Loads a field and validates the declared symmetry flag.
    pub fn from_json(json: &FieldJson, symmetry: Symmetry) -> Result<Self> {
        let n = json.fiber_rank;
        let mut modes = Vec::with_capacity(json.modes.len());
        for mode in &json.modes {
            if mode.re.len() != n
                || mode.im.len() != n
                || mode.re.iter().any(|r| r.len() != n)
                || mode.im.iter().any(|r| r.len() != n)
            {
                return Err(Error::FieldData(format!(
                    "mode {:?}: re/im must be {n}x{n} matrices",
                    mode.k
                )));
            }
            let m = CMat::from_fn(n, n, |i, j| Complex::new(mode.re[i][j], mode.im[i][j]));
            modes.push((LatticeVector::new(mode.k.clone()), m));
        }
        FourierField::from_modes(json.dim, n, symmetry, modes)
    }
}
