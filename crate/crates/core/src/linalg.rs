//! Dense kernels: QR with a fixed sign convention, Cholesky, symmetric
//! eigendecomposition, the regularized square-root factor used by the
//! preconditioned metrics, a Lyapunov solver and a sorted thin SVD.
//!
//! Everything is a pure function of its inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

const SYM_TOL: f64 = 1e-10;

/// Symmetric part `(A + Aᵀ)/2`.
pub fn sym(a: &DenseMatrix) -> DenseMatrix {
    (a + a.transpose()) * 0.5
}

/// Skew part `(A − Aᵀ)/2`.
pub fn skew(a: &DenseMatrix) -> DenseMatrix {
    (a - a.transpose()) * 0.5
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn frob_inner(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.dot(b)
}

pub fn check_finite(a: &DenseMatrix) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_square(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!(
            "{what} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

/// Relative asymmetry `‖A − Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn asymmetry(a: &DenseMatrix) -> f64 {
    let n = a.norm();
    if n == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / n
}

/// Validates near-symmetry and returns the exactly symmetrized copy.
pub fn symmetrized(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_square(a, "symmetric input")?;
    check_finite(a)?;
    let asym = asymmetry(a);
    if asym > SYM_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(sym(a))
}

/// A symmetric positive definite matrix together with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    mat: DenseMatrix,
    chol: Cholesky<f64, Dyn>,
}

impl SpdMatrix {
    pub fn new(a: DenseMatrix) -> Result<Self> {
        let mat = symmetrized(&a)?;
        let chol = Cholesky::new(mat.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { mat, chol })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DenseMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DenseMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// Upper-triangular `R` with `RᵀR = S`.
    pub fn upper_factor(&self) -> DenseMatrix {
        self.chol.l().transpose()
    }

    /// `S⁻¹B`.
    pub fn solve(&self, b: &DenseMatrix) -> DenseMatrix {
        self.chol.solve(b)
    }

    /// `B S⁻¹`.
    pub fn solve_right(&self, b: &DenseMatrix) -> DenseMatrix {
        self.chol.solve(&b.transpose()).transpose()
    }

    pub fn inverse(&self) -> DenseMatrix {
        sym(&self.chol.inverse())
    }
}

/// Q factor of the thin QR factorization, normalized so that `diag(R) > 0`.
pub fn qf(a: &DenseMatrix) -> Result<DenseMatrix> {
    let (q, _) = qr_positive(a)?;
    Ok(q)
}

/// Thin QR with positive diagonal in `R`.
pub fn qr_positive(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::Shape(format!("qf needs rows >= cols, got {m}x{n}")));
    }
    check_finite(a)?;
    let scale = a.norm();
    if n == 0 {
        return Ok((DenseMatrix::zeros(m, 0), DenseMatrix::zeros(0, 0)));
    }
    if scale == 0.0 {
        return Err(Error::RankDeficient);
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        if d.abs() <= 1e-13 * scale {
            return Err(Error::RankDeficient);
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Upper-triangular `R` with `RᵀR = S` and positive diagonal.
pub fn chol(s: &DenseMatrix) -> Result<DenseMatrix> {
    let sym = symmetrized(s)?;
    let c = Cholesky::new(sym).ok_or(Error::NotPositiveDefinite)?;
    Ok(c.l().transpose())
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
pub fn sym_eig(s: &DenseMatrix) -> Result<(DVector<f64>, DenseMatrix)> {
    let a = symmetrized(s)?;
    let n = a.nrows();
    let eig = a.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Ascending eigenvalues only.
pub fn sym_eigenvalues(s: &DenseMatrix) -> Result<Vec<f64>> {
    let a = symmetrized(s)?;
    let mut v: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `Q f(Λ) Qᵀ` for a symmetric matrix with eigendecomposition `QΛQᵀ`.
pub fn sym_fn(s: &DenseMatrix, f: impl Fn(f64) -> f64) -> Result<DenseMatrix> {
    let (vals, q) = sym_eig(s)?;
    let mut scaled = q.clone();
    for (j, &l) in vals.iter().enumerate() {
        let fl = f(l);
        scaled.column_mut(j).scale_mut(fl);
    }
    Ok(sym(&(scaled * q.transpose())))
}

/// `(sym(M̄)² + δI)^{1/2}`.
pub fn precond_factor(mbar: &DenseMatrix, delta: f64) -> Result<SpdMatrix> {
    check_square(mbar, "precond_factor input")?;
    check_finite(mbar)?;
    if !(delta >= 0.0) {
        return Err(Error::Invalid(format!("delta must be nonnegative, got {delta}")));
    }
    let p = sym_fn(&sym(mbar), |l| (l * l + delta).sqrt())?;
    SpdMatrix::new(p)
}

/// Solves `M⁻¹S + SM⁻¹ = C` for symmetric `S`.
pub fn lyap_solve(m: &SpdMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let c = symmetrized(c)?;
    if c.nrows() != m.dim() {
        return Err(Error::Shape(format!(
            "lyap_solve: M is {0}x{0}, C is {1}x{1}",
            m.dim(),
            c.nrows()
        )));
    }
    let (vals, q) = sym_eig(m.matrix())?;
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let d: Vec<f64> = vals.iter().map(|v| 1.0 / v).collect();
    let mut ct = q.transpose() * &c * &q;
    for j in 0..ct.ncols() {
        for i in 0..ct.nrows() {
            ct[(i, j)] /= d[i] + d[j];
        }
    }
    Ok(sym(&(&q * ct * q.transpose())))
}

/// Thin SVD `A = U diag(σ) Vᵀ` with σ sorted descending.
pub fn svd_thin(a: &DenseMatrix) -> Result<(DenseMatrix, DVector<f64>, DenseMatrix)> {
    check_finite(a)?;
    let k = a.nrows().min(a.ncols());
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v requested").transpose();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let mut us = DenseMatrix::zeros(a.nrows(), k);
    let mut vs = DenseMatrix::zeros(a.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vs.set_column(dst, &v.column(src));
    }
    Ok((us, sigma, vs))
}

/// `S⁻¹B` through the stored Cholesky factor.
pub fn solve_spd(s: &SpdMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if b.nrows() != s.dim() {
        return Err(Error::Shape(format!(
            "solve_spd: S is {0}x{0}, B has {1} rows",
            s.dim(),
            b.nrows()
        )));
    }
    Ok(s.solve(b))
}
