//! Hermitian gamma-matrix representations for T^d with constant metric, and
//! the Dirac endomorphism E = ¼[γ^μ,γ^ν]F_{μν}.
//!
//! Convention: γ^μγ^ν + γ^νγ^μ = 2 g^{μν}, so that D² for D = iγ^μ∇_μ is
//! exactly the Laplace-type operator -(g^{μν}∇_μ∇_ν + E). Spinor rank is
//! 2^{⌊d/2⌋}.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::fields::{CMat, FieldStrength, FourierField, Symmetry};
use crate::lattice::{ConstantMetric, LatticeVector};

/// Gamma matrices for a fixed constant metric.
#[derive(Debug, Clone)]
pub struct GammaRep {
    metric: ConstantMetric,
    spinor_rank: usize,
    gammas: Vec<CMat>,
}

fn pauli() -> [CMat; 3] {
    let z = Complex::new(0.0, 0.0);
    let one = Complex::new(1.0, 0.0);
    let i = Complex::new(0.0, 1.0);
    [
        DMatrix::from_row_slice(2, 2, &[z, one, one, z]),
        DMatrix::from_row_slice(2, 2, &[z, -i, i, z]),
        DMatrix::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

/// Flat hermitian gammas with {γ^a, γ^b} = 2δ^{ab}, built by the standard
/// tensor-product doubling. For odd d the last matrix is the chirality
/// element (-i)^m γ¹⋯γ^{2m} of the even subalgebra.
fn flat_gammas(d: usize) -> Vec<CMat> {
    if d == 0 {
        return Vec::new();
    }
    if d == 1 {
        return vec![DMatrix::from_element(1, 1, Complex::new(1.0, 0.0))];
    }
    let [sx, sy, sz] = pauli();
    // even part
    let m = d / 2;
    let mut set: Vec<CMat> = vec![sx.clone(), sy.clone()];
    for _ in 1..m {
        let n = set[0].nrows();
        let id = CMat::identity(n, n);
        let mut next: Vec<CMat> = set.iter().map(|g| sx.kronecker(g)).collect();
        next.push(sy.kronecker(&id));
        next.push(sz.kronecker(&id));
        set = next;
    }
    if d % 2 == 1 {
        // chirality: (-i)^m γ¹⋯γ^{2m}
        let n = set[0].nrows();
        let mut prod = CMat::identity(n, n);
        for g in &set {
            prod = &prod * g;
        }
        let phase = Complex::new(0.0, -1.0).powu(m as u32);
        set.push(prod * phase);
    }
    set
}

/// Builds γ^μ = e^μ_a γ^a with e the principal square root of g^{μν}.
pub fn build_gammas(metric: &ConstantMetric) -> GammaRep {
    let d = metric.dim();
    let flat = flat_gammas(d);
    let e = metric.frame();
    let n = flat[0].nrows();
    let gammas: Vec<CMat> = (0..d)
        .map(|mu| {
            let mut g = CMat::zeros(n, n);
            for (a, fa) in flat.iter().enumerate() {
                g += fa * Complex::new(e[(mu, a)], 0.0);
            }
            g
        })
        .collect();
    GammaRep {
        metric: metric.clone(),
        spinor_rank: n,
        gammas,
    }
}

impl GammaRep {
    pub fn dim(&self) -> usize {
        self.gammas.len()
    }

    pub fn spinor_rank(&self) -> usize {
        self.spinor_rank
    }

    pub fn metric(&self) -> &ConstantMetric {
        &self.metric
    }

    pub fn gamma(&self, mu: usize) -> &CMat {
        &self.gammas[mu]
    }

    /// max_{μν} ‖γ^μγ^ν + γ^νγ^μ - 2 g^{μν}‖_max
    pub fn anticommutation_residual(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for mu in 0..d {
            for nu in 0..d {
                let ac = self.gamma(mu) * self.gamma(nu) + self.gamma(nu) * self.gamma(mu);
                let want = 2.0 * self.metric.inv_metric()[(mu, nu)];
                for i in 0..self.spinor_rank {
                    for j in 0..self.spinor_rank {
                        let target = if i == j {
                            Complex::new(want, 0.0)
                        } else {
                            Complex::new(0.0, 0.0)
                        };
                        worst = worst.max((ac[(i, j)] - target).norm());
                    }
                }
            }
        }
        worst
    }

    /// max_μ ‖γ^μ - (γ^μ)†‖_max
    pub fn hermiticity_residual(&self) -> f64 {
        self.gammas
            .iter()
            .map(|g| (g - g.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// ¼ [γ^μ, γ^ν] ⊗ Ω̂_{μν}(k) on the spinor ⊗ gauge fiber.
    pub fn commutator(&self, mu: usize, nu: usize) -> CMat {
        self.gamma(mu) * self.gamma(nu) - self.gamma(nu) * self.gamma(mu)
    }
}

/// E = ¼ [γ^μ, γ^ν] Ω_{μν}, coefficientwise on the spinor ⊗ gauge fiber.
/// The result is hermitian and spinor-traceless mode by mode.
pub fn dirac_endomorphism(omega: &FieldStrength, rep: &GammaRep) -> Result<FourierField> {
    let d = rep.dim();
    if omega.dim() != d {
        return Err(Error::shape(format!(
            "field strength dimension {} does not match gamma dimension {d}",
            omega.dim()
        )));
    }
    let ng = omega.fiber_rank();
    let ns = rep.spinor_rank();
    let fiber = ns * ng;

    let mut acc: std::collections::BTreeMap<LatticeVector, CMat> = std::collections::BTreeMap::new();
    for mu in 0..d {
        for nu in (mu + 1)..d {
            // antisymmetry of both factors doubles the μ<ν term
            let comm = rep.commutator(mu, nu) * Complex::new(0.5, 0.0);
            let f = omega.component(mu, nu);
            for (k, c) in f.modes() {
                let term = comm.kronecker(c);
                acc.entry(k.clone())
                    .and_modify(|e| *e += &term)
                    .or_insert(term);
            }
        }
    }
    FourierField::from_modes(d, fiber, Symmetry::Hermitian, acc.into_iter().collect())
}

/// Partial trace over the spinor factor of a (spinor ⊗ gauge)-valued matrix.
pub fn spinor_trace(m: &CMat, spinor_rank: usize, gauge_rank: usize) -> CMat {
    let mut out = CMat::zeros(gauge_rank, gauge_rank);
    for s in 0..spinor_rank {
        for a in 0..gauge_rank {
            for b in 0..gauge_rank {
                out[(a, b)] += m[(s * gauge_rank + a, s * gauge_rank + b)];
            }
        }
    }
    out
}
