//! Condition numbers of the Riemannian Hessian at a minimizer: closed forms
//! in terms of the singular values `σ` and weights `μ`, and a numerical
//! oracle built from finite differences of the gradient field.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{apply_metric, metric_norm, MetricFactors, ProductPoint, TangentVector};
use crate::linalg::{self, DenseMatrix};
use crate::solvers::Problem;

/// Gradient norm above which [`numerical_spectrum`] refuses to run.
pub const CRITICAL_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumInputs {
    /// Descending, length at least `m + 1`.
    pub sigma: Vec<f64>,
    /// Descending and positive, length `m`.
    pub mu: Vec<f64>,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SvdMetric {
    Euclidean,
    R12,
}

impl SpectrumInputs {
    pub fn new(sigma: Vec<f64>, mu: Vec<f64>, delta: f64) -> Self {
        Self { sigma, mu, delta }
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 || self.sigma.len() < m + 1 {
            return Err(Error::Invalid(format!(
                "need m >= 1 weights and at least m + 1 singular values, got {} and {}",
                m,
                self.sigma.len()
            )));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Invalid("delta must be nonnegative".into()));
        }
        if self.mu.iter().any(|&v| !(v > 0.0)) || self.sigma[..=m].iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Invalid("weights must be positive and singular values nonnegative".into()));
        }
        for w in self.sigma[..=m].windows(2).chain(self.mu.windows(2)) {
            if w[0] < w[1] {
                return Err(Error::Invalid("sequences must be descending".into()));
            }
            if w[0] == w[1] {
                return Err(Error::ZeroEigenvalue);
            }
        }
        Ok(())
    }

    fn root(&self, i: usize) -> f64 {
        let t = self.mu[i] * self.sigma[i];
        (t * t + self.delta).sqrt()
    }

    /// `v̄_ij(δ)` for `i < j ≤ m` (0-based, `j = m` meaning the index `m+1`).
    pub fn v_upper(&self, i: usize, j: usize) -> f64 {
        let (mu, s) = (&self.mu, &self.sigma);
        if j == self.m() {
            mu[i] * (s[i] + s[j]) / self.root(i)
        } else {
            (mu[i] + mu[j]) * (s[i] + s[j]) / (self.root(i) + self.root(j))
        }
    }

    /// `v̲_ij(δ)`, same indexing as [`Self::v_upper`].
    pub fn v_lower(&self, i: usize, j: usize) -> f64 {
        let (mu, s) = (&self.mu, &self.sigma);
        if j == self.m() {
            mu[i] * (s[i] - s[j]) / self.root(i)
        } else {
            (mu[i] - mu[j]) * (s[i] - s[j]) / (self.root(i) + self.root(j))
        }
    }
}

/// Condition number under the Σ-weighted metric (left preconditioning only).
pub fn kappa_cca_l12(inputs: &SpectrumInputs) -> Result<f64> {
    inputs.validate()?;
    let m = inputs.m();
    let (mu, s) = (&inputs.mu, &inputs.sigma);
    let mut num = mu[0] * (s[0] + s[m]);
    let mut den = mu[m - 1] * (s[m - 1] - s[m]);
    for i in 0..m {
        for j in (i + 1)..m {
            num = num.max(0.5 * (mu[i] + mu[j]) * (s[i] + s[j]));
            den = den.min(0.5 * (mu[i] - mu[j]) * (s[i] - s[j]));
        }
    }
    ratio(num, den)
}

/// Condition number under the left-and-right preconditioned metric.
pub fn kappa_cca_lr12(inputs: &SpectrumInputs) -> Result<f64> {
    inputs.validate()?;
    let m = inputs.m();
    let mut num = f64::NEG_INFINITY;
    let mut den = f64::INFINITY;
    for i in 0..m {
        for j in (i + 1)..=m {
            num = num.max(inputs.v_upper(i, j));
            den = den.min(inputs.v_lower(i, j));
        }
    }
    ratio(num, den)
}

/// `max_i v̄_{i,i+1} / min_i v̲_{i,i+1}`, the adjacent-pair form valid for small δ.
pub fn kappa_cca_lr12_adjacent(inputs: &SpectrumInputs) -> Result<f64> {
    inputs.validate()?;
    let m = inputs.m();
    let num = (0..m).map(|i| inputs.v_upper(i, i + 1)).fold(f64::NEG_INFINITY, f64::max);
    let den = (0..m).map(|i| inputs.v_lower(i, i + 1)).fold(f64::INFINITY, f64::min);
    ratio(num, den)
}

pub fn kappa_svd(inputs: &SpectrumInputs, metric: SvdMetric) -> Result<f64> {
    match metric {
        SvdMetric::Euclidean => kappa_cca_l12(inputs),
        SvdMetric::R12 => kappa_cca_lr12(inputs),
    }
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::ZeroEigenvalue);
    }
    Ok(num / den)
}

/// True iff the right-preconditioned condition number does not exceed the
/// left-only one and the pairwise orderings `v̄_ij > v̄_ik`, `v̲_ij < v̲_ik`
/// hold for all `i < j < k ≤ m+1`.
pub fn kappa_ordering_check(inputs: &SpectrumInputs) -> Result<bool> {
    let improved = kappa_cca_lr12(inputs)? <= kappa_cca_l12(inputs)?;
    let m = inputs.m();
    for i in 0..m {
        for j in (i + 1)..=m {
            for k in (j + 1)..=m {
                if !(inputs.v_upper(i, j) > inputs.v_upper(i, k)) || !(inputs.v_lower(i, j) < inputs.v_lower(i, k)) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(improved)
}

#[derive(Clone, Debug)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `λ_max/λ_min`, or infinity when `λ_min ≤ 0`.
    pub kappa: f64,
    pub dimension: usize,
    /// `‖H − Hᵀ‖_F/‖H‖_F` before symmetrization.
    pub asymmetry: f64,
    pub gradient_norm: f64,
}

fn flat(m: &DenseMatrix) -> &[f64] {
    m.as_slice()
}

/// A g-orthonormal basis of the tangent space, block by block.
pub fn tangent_basis<P: Problem + ?Sized>(
    problem: &P,
    x: &ProductPoint,
    factors: &MetricFactors,
) -> Result<Vec<TangentVector>> {
    Ok(basis_with_metric(problem, x, factors)?.0)
}

/// Basis vectors and their images under the metric operator.
fn basis_with_metric<P: Problem + ?Sized>(
    problem: &P,
    x: &ProductPoint,
    factors: &MetricFactors,
) -> Result<(Vec<TangentVector>, Vec<TangentVector>)> {
    let kinds = problem.kinds();
    let mut basis = Vec::new();
    let mut images = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let span = kind.tangent_spanning_set(&x.blocks[k])?;
        let d = span.len();
        if d == 0 {
            continue;
        }
        let len = x.blocks[k].len();
        let (r, c) = x.blocks[k].shape();
        let single = MetricFactors { blocks: vec![factors.blocks[k].clone()] };
        let mut s = DenseMatrix::zeros(len, d);
        let mut ws = DenseMatrix::zeros(len, d);
        for (j, v) in span.iter().enumerate() {
            let w = apply_metric(&single, std::slice::from_ref(v)).remove(0);
            s.column_mut(j).copy_from_slice(flat(v));
            ws.column_mut(j).copy_from_slice(flat(&w));
        }
        // transpose-then-multiply goes through the blocked GEMM kernel
        let gram = s.transpose() * &ws;
        let upper = linalg::chol(&gram)?;
        // E = S R⁻¹ with RᵀR = Gram gives EᵀWE = I.
        let r_inv = upper
            .solve_upper_triangular(&DenseMatrix::identity(d, d))
            .ok_or(Error::NotPositiveDefinite)?;
        let e = &s * &r_inv;
        let we = &ws * &r_inv;
        for j in 0..d {
            let mut bv = TangentVector::zeros_like(x);
            let mut bw = TangentVector::zeros_like(x);
            bv.blocks[k] = DenseMatrix::from_column_slice(r, c, e.column(j).as_slice());
            bw.blocks[k] = DenseMatrix::from_column_slice(r, c, we.column(j).as_slice());
            basis.push(bv);
            images.push(bw);
        }
    }
    Ok((basis, images))
}

fn flatten_all(v: &TangentVector) -> Vec<f64> {
    v.blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect()
}

/// Eigenvalues of the Riemannian Hessian at a critical point, from central
/// differences of the gradient along retraction curves with step
/// `h = 1e-5·(1 + ‖x‖)`.
pub fn numerical_spectrum<P: Problem + ?Sized>(problem: &P, x_star: &ProductPoint) -> Result<SpectrumReport> {
    let factors = problem.metric(x_star)?;
    let grad = problem.gradient(x_star, &factors)?;
    let gradient_norm = metric_norm(&factors, &grad)?;
    if !(gradient_norm < CRITICAL_TOL) {
        return Err(Error::NotCritical(gradient_norm));
    }
    let (basis, images) = basis_with_metric(problem, x_star, &factors)?;
    let d = basis.len();
    let h = 1e-5 * (1.0 + x_star.frobenius_norm());

    let columns: Vec<Vec<f64>> = basis
        .par_iter()
        .map(|e| -> Result<Vec<f64>> {
            let xp = problem.retract(x_star, e, h)?;
            let xm = problem.retract(x_star, e, -h)?;
            let gp = problem.riemannian_gradient(&xp)?;
            let gm = problem.riemannian_gradient(&xm)?;
            let diff = gp.axpy(-1.0, &gm).scaled(0.5 / h);
            Ok(flatten_all(&diff))
        })
        .collect::<Result<_>>()?;
    let total = columns.first().map_or(0, Vec::len);
    let dmat = DenseMatrix::from_fn(total, d, |i, j| columns[j][i]);
    let mut wmat = DenseMatrix::zeros(total, d);
    for (j, w) in images.iter().enumerate() {
        wmat.column_mut(j).copy_from_slice(&flatten_all(w));
    }
    let hmat = wmat.transpose() * &dmat;
    let asymmetry = linalg::asymmetry(&hmat);
    let eigenvalues = linalg::sym_eigenvalues(&linalg::sym(&hmat))?;
    let (lo, hi) = (eigenvalues[0], eigenvalues[d - 1]);
    let kappa = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    Ok(SpectrumReport { eigenvalues, kappa, dimension: d, asymmetry, gradient_norm })
}
