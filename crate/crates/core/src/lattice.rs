//! Constant metrics on T^d, integer-lattice enumeration, theta-type sums
//! with Poisson duality, eigenvalue counting, and the T¹ coth closed form.
//!
//! Coordinates on T^d are 2π-periodic; the inverse metric g^{μν} is constant
//! and dimensionless. Squared momenta are always taken with the inverse
//! metric, `q² = qᵀ G q` with `G = g^{μν}`.
//!
//! Every lattice sum is certified: the cutoff `Q` is chosen so that a
//! rigorous Gaussian tail bound for the omitted terms is below the requested
//! tolerance, and the bound is returned alongside the value. Summation
//! follows a fixed deterministic order (quadratic form ascending, ties
//! lexicographic) with compensated accumulation, so results are bitwise
//! reproducible and independent of the worker count.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::accum::{par_sum_ordered, Neumaier};
use crate::error::{Error, Result};
use crate::special::gamma_half;

/// Integer Fourier momentum on Z^d.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeVector(pub Vec<i64>);

impl LatticeVector {
    pub fn new(components: Vec<i64>) -> Self {
        LatticeVector(components)
    }

    pub fn zeros(dim: usize) -> Self {
        LatticeVector(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[i64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn neg(&self) -> Self {
        LatticeVector(self.0.iter().map(|&c| -c).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        LatticeVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a - b)
                .collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        LatticeVector(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| a + b)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }
}

impl From<Vec<i64>> for LatticeVector {
    fn from(v: Vec<i64>) -> Self {
        LatticeVector(v)
    }
}

/// Constant inverse metric g^{μν} on T^d together with derived data.
#[derive(Debug, Clone)]
pub struct ConstantMetric {
    dim: usize,
    inv: DMatrix<f64>,    // g^{μν}
    metric: DMatrix<f64>, // g_{μν}
    eig_min: f64,         // spectrum of g^{μν}
    eig_max: f64,
    sqrt_det_metric: f64, // √(det g_{μν}) = (det g^{μν})^{-1/2}
}

impl ConstantMetric {
    /// Builds a metric from the entries of g^{μν}. Only the symmetric part
    /// of the input is stored; positive definiteness is checked here.
    pub fn new(inv_metric: DMatrix<f64>) -> Result<Self> {
        let dim = inv_metric.nrows();
        if dim == 0 || inv_metric.ncols() != dim {
            return Err(Error::shape(format!(
                "inv_metric must be square and nonempty, got {}x{}",
                inv_metric.nrows(),
                inv_metric.ncols()
            )));
        }
        if inv_metric.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("inv_metric entries must be finite"));
        }
        let inv = 0.5 * (&inv_metric + inv_metric.transpose());

        let (eig_min, eig_max, metric, det_inv) = if is_diagonal(&inv) {
            let diag: Vec<f64> = (0..dim).map(|i| inv[(i, i)]).collect();
            let mn = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mn <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "inv_metric has eigenvalue {mn} <= 0"
                )));
            }
            let metric = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 / diag[i] } else { 0.0 });
            (mn, mx, metric, diag.iter().product::<f64>())
        } else {
            let es = inv.clone().symmetric_eigen();
            let evs: Vec<f64> = es.eigenvalues.iter().cloned().collect();
            let mn = evs.iter().cloned().fold(f64::INFINITY, f64::min);
            let mx = evs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if mn <= 0.0 {
                return Err(Error::NotPositiveDefinite(format!(
                    "inv_metric has eigenvalue {mn} <= 0"
                )));
            }
            // SPD inverse through the spectral decomposition keeps g_{μν} symmetric.
            let v = &es.eigenvectors;
            let dinv = DMatrix::from_fn(dim, dim, |i, j| {
                if i == j { 1.0 / evs[i] } else { 0.0 }
            });
            let metric = v * dinv * v.transpose();
            let metric = 0.5 * (&metric + metric.transpose());
            (mn, mx, metric, evs.iter().product::<f64>())
        };

        // metric · inv_metric = identity within 1e-12 relative
        let prod = &metric * &inv;
        let mut resid = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let want = if i == j { 1.0 } else { 0.0 };
                resid = resid.max((prod[(i, j)] - want).abs());
            }
        }
        let cond = eig_max / eig_min;
        if resid > 1e-12 * cond.max(1.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "metric inversion residual {resid:.3e} exceeds 1e-12 (condition {cond:.3e})"
            )));
        }

        Ok(ConstantMetric {
            dim,
            inv,
            metric,
            eig_min,
            eig_max,
            sqrt_det_metric: 1.0 / det_inv.sqrt(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        ConstantMetric::new(DMatrix::identity(dim, dim)).expect("identity metric is SPD")
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        let d = entries.len();
        ConstantMetric::new(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                entries[i]
            } else {
                0.0
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// g^{μν}
    pub fn inv_metric(&self) -> &DMatrix<f64> {
        &self.inv
    }

    /// g_{μν}
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn eig_min(&self) -> f64 {
        self.eig_min
    }

    pub fn eig_max(&self) -> f64 {
        self.eig_max
    }

    /// √(det g_{μν})
    pub fn sqrt_det_metric(&self) -> f64 {
        self.sqrt_det_metric
    }

    /// Vol(T^d) = (2π)^d √(det g_{μν})
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.dim as i32) * self.sqrt_det_metric
    }

    /// q² = qᵀ G q with G = g^{μν}.
    pub fn qform(&self, q: &[i64]) -> f64 {
        debug_assert_eq!(q.len(), self.dim);
        let mut s = 0.0;
        for i in 0..self.dim {
            let qi = q[i] as f64;
            for j in 0..self.dim {
                s += qi * self.inv[(i, j)] * q[j] as f64;
            }
        }
        s
    }

    /// Same quadratic form on a real vector.
    pub fn qform_real(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += x[i] * self.inv[(i, j)] * x[j];
            }
        }
        s
    }

    /// Index raising: (G q)_μ = g^{μν} q_ν.
    pub fn raise(&self, q: &[i64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.inv[(i, j)] * q[j] as f64).sum())
            .collect()
    }

    pub fn raise_real(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.inv[(i, j)] * x[j]).sum())
            .collect()
    }

    /// Dual quadratic form kᵀ g_{μν} k used by Poisson summation.
    pub fn dual_qform(&self, k: &[i64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            let ki = k[i] as f64;
            for j in 0..self.dim {
                s += ki * self.metric[(i, j)] * k[j] as f64;
            }
        }
        s
    }

    /// Principal (SPD) square root of g^{μν}; the frame e^μ_a of the
    /// gamma-matrix construction.
    pub fn frame(&self) -> DMatrix<f64> {
        if is_diagonal(&self.inv) {
            return DMatrix::from_fn(self.dim, self.dim, |i, j| {
                if i == j {
                    self.inv[(i, i)].sqrt()
                } else {
                    0.0
                }
            });
        }
        let es = self.inv.clone().symmetric_eigen();
        let v = &es.eigenvectors;
        let s = DMatrix::from_fn(self.dim, self.dim, |i, j| {
            if i == j {
                es.eigenvalues[i].sqrt()
            } else {
                0.0
            }
        });
        let r = v * s * v.transpose();
        0.5 * (&r + r.transpose())
    }
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Result of a certified theta-type sum.
#[derive(Debug, Clone, Copy)]
pub struct ThetaResult {
    pub value: f64,
    /// Rigorous bound on the omitted terms; at most the requested tolerance.
    pub tail_bound: f64,
    pub cutoff_used: i64,
}

/// Lattice box |q_i| <= cap enumerated lexicographically, with the index
/// permutation that sorts points by qᵀGq ascending (ties lexicographic).
pub(crate) struct LatticeBox {
    pub dim: usize,
    pub cap: i64,
    flat: Vec<i64>,
    pub qf: Vec<f64>,
    pub order: Vec<u32>,
}

/// Memory guard for box enumeration.
const MAX_BOX_POINTS: usize = 1 << 27;

impl LatticeBox {
    pub fn build(metric: &ConstantMetric, cap: i64) -> Result<Self> {
        Self::build_with(metric.dim(), cap, |q| metric.qform(q))
    }

    pub fn build_dual(metric: &ConstantMetric, cap: i64) -> Result<Self> {
        Self::build_with(metric.dim(), cap, |q| metric.dual_qform(q))
    }

    fn build_with(dim: usize, cap: i64, form: impl Fn(&[i64]) -> f64) -> Result<Self> {
        let side = (2 * cap + 1) as u128;
        let n128 = side.pow(dim as u32);
        if n128 > MAX_BOX_POINTS as u128 {
            return Err(Error::CutoffInsufficient(format!(
                "lattice box with Q={cap}, d={dim} needs {n128} points (cap {MAX_BOX_POINTS})"
            )));
        }
        let n = n128 as usize;
        let mut flat = Vec::with_capacity(n * dim);
        let mut q = vec![-cap; dim];
        for _ in 0..n {
            flat.extend_from_slice(&q);
            // odometer increment: last coordinate fastest, so the flat list
            // is in lexicographic order
            for i in (0..dim).rev() {
                if q[i] < cap {
                    q[i] += 1;
                    break;
                }
                q[i] = -cap;
            }
        }
        let qf: Vec<f64> = (0..n).map(|i| form(&flat[i * dim..(i + 1) * dim])).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        // stable sort keeps the lexicographic enumeration order on ties
        order.sort_by(|&a, &b| qf[a as usize].total_cmp(&qf[b as usize]));
        Ok(LatticeBox {
            dim,
            cap,
            flat,
            qf,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.qf.len()
    }

    #[inline]
    pub fn point(&self, lex_index: usize) -> &[i64] {
        &self.flat[lex_index * self.dim..(lex_index + 1) * self.dim]
    }
}

/// One-sided Gaussian tail: Σ_{j≥0} e^{-a(m+j)²} ≤ e^{-am²}/(1 - e^{-2am}).
fn gaussian_tail_1d(a: f64, m: f64) -> f64 {
    if m <= 0.0 {
        return f64::INFINITY;
    }
    (-a * m * m).exp() / (1.0 - (-2.0 * a * m).exp())
}

/// Bound on Σ_{q∈Z} e^{-a(q+s)²} for any real s (peak term plus integral).
fn gaussian_full_1d(a: f64) -> f64 {
    1.0 + (PI / a).sqrt()
}

/// Tail of a d-dimensional Gaussian lattice sum outside the box |q_i| <= cap,
/// with `m` the guaranteed distance of out-of-box coordinates from 0 after
/// shifts. Union bound over the escaping coordinate.
pub(crate) fn box_tail_bound(dim: usize, a: f64, m: f64, full_1d: f64) -> f64 {
    (dim as f64) * 2.0 * gaussian_tail_1d(a, m) * full_1d.powi(dim as i32 - 1)
}

fn validate_t_tol(t: f64, tol: f64, what: &str) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("{what}: t must be positive and finite, got {t}")));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::domain(format!(
            "{what}: tol must be positive and finite, got {tol}"
        )));
    }
    Ok(())
}

/// Reduce each shift component to [-1/2, 1/2]; the lattice sum is invariant
/// under integer shifts.
fn normalize_shift(shift: &[f64]) -> Result<Vec<f64>> {
    if shift.iter().any(|s| !s.is_finite()) {
        return Err(Error::domain("shift components must be finite"));
    }
    Ok(shift.iter().map(|s| s - s.round()).collect())
}

/// Picks the smallest cutoff whose tail bound is below `tol`, then returns
/// (cutoff, bound). `extent` widens the escape distance (for sums whose
/// exponent involves q+k).
fn choose_cutoff(
    dim: usize,
    a: f64,
    tol: f64,
    prefactor: f64,
    extent: f64,
    full_1d: f64,
) -> Result<(i64, f64)> {
    let mut cap = (extent + 2.0).ceil() as i64;
    loop {
        let m = cap as f64 + 0.5 - extent;
        let bound = prefactor * box_tail_bound(dim, a, m, full_1d);
        if bound <= tol {
            return Ok((cap, bound));
        }
        let side = 2 * cap + 1;
        if (side as u128).pow(dim as u32) > MAX_BOX_POINTS as u128 {
            return Err(Error::CutoffInsufficient(format!(
                "tolerance {tol:.3e} needs cutoff beyond Q={cap} (tail bound {bound:.3e})"
            )));
        }
        cap += i64::max(1, cap / 8);
    }
}

/// Σ_{q∈Z^d} exp(-t (q+shift)ᵀ G (q+shift)) with G = g^{μν}, by direct
/// summation over a certified box.
pub fn theta_sum(
    metric: &ConstantMetric,
    t: f64,
    shift: &[f64],
    tol: f64,
) -> Result<ThetaResult> {
    validate_t_tol(t, tol, "theta_sum")?;
    if shift.len() != metric.dim() {
        return Err(Error::shape(format!(
            "shift has length {}, metric dimension is {}",
            shift.len(),
            metric.dim()
        )));
    }
    let s = normalize_shift(shift)?;
    let a = t * metric.eig_min();
    let (cap, tail) = choose_cutoff(metric.dim(), a, tol, 1.0, 0.0, gaussian_full_1d(a))?;
    let bx = LatticeBox::build(metric, cap)?;

    let zero_shift = s.iter().all(|&x| x == 0.0);
    let value = if zero_shift {
        par_sum_ordered(bx.len(), |i| {
            (-t * bx.qf[bx.order[i] as usize]).exp()
        })
    } else {
        // (q+s)ᵀG(q+s) = qᵀGq + 2 (Gs)·q + sᵀGs
        let gs = metric.raise_real(&s);
        let ss = metric.qform_real(&s);
        par_sum_ordered(bx.len(), |i| {
            let lex = bx.order[i] as usize;
            let q = bx.point(lex);
            let cross: f64 = q.iter().zip(&gs).map(|(&qi, &g)| qi as f64 * g).sum();
            (-t * (bx.qf[lex] + 2.0 * cross + ss)).exp()
        })
    };

    Ok(ThetaResult {
        value,
        tail_bound: tail,
        cutoff_used: cap,
    })
}

/// The same sum via the Poisson summation formula:
/// (π/t)^{d/2} (det G)^{-1/2} Σ_k exp(-(π²/t) kᵀ G^{-1} k) cos(2π k·shift).
pub fn poisson_dual(
    metric: &ConstantMetric,
    t: f64,
    shift: &[f64],
    tol: f64,
) -> Result<ThetaResult> {
    validate_t_tol(t, tol, "poisson_dual")?;
    if shift.len() != metric.dim() {
        return Err(Error::shape(format!(
            "shift has length {}, metric dimension is {}",
            shift.len(),
            metric.dim()
        )));
    }
    let s = normalize_shift(shift)?;
    let d = metric.dim();
    let prefactor = (PI / t).powf(d as f64 / 2.0) * metric.sqrt_det_metric();
    // dual exponent (π²/t) kᵀ g_{μν} k; its smallest eigenvalue is 1/eig_max(G)
    let a = PI * PI / (t * metric.eig_max());
    let (cap, tail) = choose_cutoff(d, a, tol, prefactor, 0.0, gaussian_full_1d(a))?;
    let bx = LatticeBox::build_dual(metric, cap)?;

    let c = PI * PI / t;
    let value = par_sum_ordered(bx.len(), |i| {
        let lex = bx.order[i] as usize;
        let kv = bx.point(lex);
        let phase: f64 = kv.iter().zip(&s).map(|(&ki, &si)| ki as f64 * si).sum();
        (-c * bx.qf[lex]).exp() * (2.0 * PI * phase).cos()
    });

    Ok(ThetaResult {
        value: prefactor * value,
        tail_bound: tail,
        cutoff_used: cap,
    })
}

/// Regime-switching wrapper: the dual sum converges faster for small t.
pub fn theta_auto(
    metric: &ConstantMetric,
    t: f64,
    shift: &[f64],
    tol: f64,
) -> Result<ThetaResult> {
    if t < 1.0 {
        poisson_dual(metric, t, shift, tol)
    } else {
        theta_sum(metric, t, shift, tol)
    }
}

/// Counting function N(λ) = #{eigenvalues ≤ λ}, inclusive at ties.
/// `eigenvalues` must be sorted ascending.
pub fn weyl_count(eigenvalues: &[f64], lambda: f64) -> Result<usize> {
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("weyl_count: λ must be >= 0, got {lambda}")));
    }
    Ok(eigenvalues.partition_point(|&x| x <= lambda))
}

/// Weyl prediction (4π)^{-d/2} Vol / Γ(d/2+1) · λ^{d/2}.
pub fn weyl_prediction(metric: &ConstantMetric, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!(
            "weyl_prediction: λ must be >= 0, got {lambda}"
        )));
    }
    let d = metric.dim() as f64;
    let pref = (4.0 * PI).powf(-d / 2.0) * metric.volume() / gamma_half(metric.dim() as u32 + 2);
    Ok(pref * lambda.powf(d / 2.0))
}

/// Sorted eigenvalues qᵀGq of the free Laplacian on T^d up to `lambda_max`.
pub fn free_laplace_eigenvalues(metric: &ConstantMetric, lambda_max: f64) -> Result<Vec<f64>> {
    if !(lambda_max >= 0.0) {
        return Err(Error::domain("free_laplace_eigenvalues: λ_max must be >= 0".to_string()));
    }
    // qᵀGq ≥ eig_min ‖q‖² so the box |q_i| ≤ √(λ/eig_min) is exhaustive
    let cap = (lambda_max / metric.eig_min()).sqrt().ceil() as i64;
    let bx = LatticeBox::build(metric, cap)?;
    let mut evs: Vec<f64> = bx.qf.iter().cloned().filter(|&v| v <= lambda_max).collect();
    evs.sort_by(|a, b| a.total_cmp(b));
    Ok(evs)
}

/// Closed form Tr e^{-t√(-Δ)} on T¹: coth(t/2).
pub fn coth_trace(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!(
            "coth_trace: trace diverges for t <= 0, got {t}"
        )));
    }
    Ok(1.0 / (t / 2.0).tanh())
}

/// Direct sum Σ_{q∈Z} e^{-t|q|}, truncated with a certified geometric tail.
pub fn coth_trace_sum(t: f64, tol: f64) -> Result<f64> {
    validate_t_tol(t, tol, "coth_trace_sum")?;
    let r = (-t).exp();
    let mut acc = Neumaier::new();
    acc.add(1.0);
    let mut q = 1i64;
    loop {
        // tail: 2 Σ_{j>q-1} e^{-tj} = 2 e^{-tq}/(1-e^{-t})
        let tail = 2.0 * (-t * q as f64).exp() / (1.0 - r);
        if tail <= tol {
            break;
        }
        acc.add(2.0 * (-t * q as f64).exp());
        q += 1;
        if q > 10_000_000 {
            return Err(Error::CutoffInsufficient(format!(
                "coth_trace_sum: tolerance {tol:.3e} unreachable at t={t}"
            )));
        }
    }
    Ok(acc.total())
}

/// Truncated small-t expansion (2/t)(1 + t²/12 - t⁴/720) of coth(t/2).
pub fn coth_taylor_truncated(t: f64) -> f64 {
    2.0 / t * (1.0 + t * t / 12.0 - t.powi(4) / 720.0)
}
