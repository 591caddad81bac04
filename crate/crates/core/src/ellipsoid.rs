//! Minimizing `−bᵀx` on `{xᵀBx = 1}` under the metric family
//! `g_λ(ξ, η) = ξᵀB_λη`, `B_λ = λI + (1−λ)B`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{BlockFactors, ComponentKind, Factor, MetricFactors, ProductPoint, TangentVector};
use crate::linalg::{self, DenseMatrix, SpdMatrix};
use crate::solvers::Problem;
use crate::spectrum::numerical_spectrum;

#[derive(Clone, Debug)]
pub struct EllipsoidProblem {
    b_mat: Arc<SpdMatrix>,
    b: DenseMatrix,
    lambda: f64,
    b_lambda: Arc<SpdMatrix>,
    kinds: Vec<ComponentKind>,
}

/// `λI + (1−λ)B`, rejected when not positive definite.
pub fn b_lambda(b_mat: &SpdMatrix, lambda: f64) -> Result<SpdMatrix> {
    let n = b_mat.dim();
    SpdMatrix::new(DenseMatrix::identity(n, n) * lambda + b_mat.matrix() * (1.0 - lambda))
}

impl EllipsoidProblem {
    pub fn new(b_mat: SpdMatrix, b: Vec<f64>, lambda: f64) -> Result<Self> {
        let n = b_mat.dim();
        if b.len() != n {
            return Err(Error::Shape(format!("b has length {}, B is {n}x{n}", b.len())));
        }
        if b.iter().all(|&v| v == 0.0) {
            return Err(Error::Invalid("b must be nonzero".into()));
        }
        let b_lambda = Arc::new(b_lambda(&b_mat, lambda)?);
        let b_mat = Arc::new(b_mat);
        let kinds = vec![ComponentKind::Ellipsoid { b: b_mat.clone() }];
        Ok(Self { b_mat, b: DenseMatrix::from_column_slice(n, 1, &b), lambda, b_lambda, kinds })
    }

    /// `B = diag(4, 9, 1)`, `b = (1, 1, 1)`.
    pub fn figure_instance(lambda: f64) -> Result<Self> {
        Self::new(SpdMatrix::from_diagonal(&[4.0, 9.0, 1.0])?, vec![1.0; 3], lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let b_lambda = Arc::new(b_lambda(&self.b_mat, lambda)?);
        Ok(Self { lambda, b_lambda, ..self.clone() })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.b_mat.dim()
    }

    pub fn b_matrix(&self) -> &SpdMatrix {
        &self.b_mat
    }

    pub fn b_lambda(&self) -> &SpdMatrix {
        &self.b_lambda
    }

    /// `B⁻¹b / ‖B⁻¹b‖_B`.
    pub fn solution(&self) -> DenseMatrix {
        let y = self.b_mat.solve(&self.b);
        let nrm = (y.transpose() * self.b_mat.matrix() * &y)[(0, 0)].sqrt();
        y / nrm
    }

    pub fn solution_point(&self) -> ProductPoint {
        ProductPoint::new(vec![self.solution()])
    }

    /// `−B_λ⁻¹b + (xᵀBB_λ⁻¹b)/(xᵀBB_λ⁻¹Bx) · B_λ⁻¹Bx`.
    pub fn gradient_at(&self, x: &DenseMatrix) -> DenseMatrix {
        let bx = self.b_mat.matrix() * x;
        let lb = self.b_lambda.solve(&self.b);
        let lbx = self.b_lambda.solve(&bx);
        let num = bx.dot(&lb);
        let den = bx.dot(&lbx);
        -lb + lbx * (num / den)
    }

    /// Feasible point along the normalized direction `v`.
    pub fn normalize(&self, v: &DenseMatrix) -> Result<DenseMatrix> {
        let q = (v.transpose() * self.b_mat.matrix() * v)[(0, 0)];
        if !(q > 0.0) {
            return Err(Error::Invalid("cannot normalize a zero vector".into()));
        }
        Ok(v / q.sqrt())
    }
}

impl Problem for EllipsoidProblem {
    fn kinds(&self) -> &[ComponentKind] {
        &self.kinds
    }

    fn cost(&self, x: &ProductPoint) -> f64 {
        -self.b.dot(&x.blocks[0])
    }

    fn partials(&self, _x: &ProductPoint) -> Vec<DenseMatrix> {
        vec![-self.b.clone()]
    }

    fn metric(&self, _x: &ProductPoint) -> Result<MetricFactors> {
        Ok(MetricFactors { blocks: vec![BlockFactors::new(Factor::Spd(self.b_lambda.clone()), Factor::Identity)] })
    }

    fn gradient(&self, x: &ProductPoint, _f: &MetricFactors) -> Result<TangentVector> {
        Ok(TangentVector::new(vec![self.gradient_at(&x.blocks[0])]))
    }
}

/// `{−0.120, −0.115, …, 1.000}`.
pub fn default_grid() -> Vec<f64> {
    (0..=224).map(|i| (-120 + 5 * i) as f64 / 1000.0).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub lambda: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sweep {
    pub points: Vec<SweepPoint>,
    /// Grid values skipped, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl Sweep {
    pub fn argmin(&self) -> Option<&SweepPoint> {
        self.points.iter().min_by(|a, b| a.kappa.total_cmp(&b.kappa))
    }
}

/// Hessian condition number at `x*` for each `λ`, from the numerical spectrum.
pub fn kappa_sweep(problem: &EllipsoidProblem, grid: &[f64]) -> Sweep {
    let mut sweep = Sweep::default();
    let x = problem.solution_point();
    for &lambda in grid {
        let res = problem.with_lambda(lambda).and_then(|p| numerical_spectrum(&p, &x));
        match res {
            Ok(rep) => sweep.points.push(SweepPoint { lambda, kappa: rep.kappa }),
            Err(e) => sweep.skipped.push((lambda, e.to_string())),
        }
    }
    sweep
}

/// Extremes of `ηᵀBη / ηᵀB_λη` over the tangent space at `x*`, whose ratio
/// equals the Hessian condition number there.
pub fn rayleigh_kappa(problem: &EllipsoidProblem) -> Result<f64> {
    let x = problem.solution();
    let kind = &problem.kinds[0];
    let span = kind.tangent_spanning_set(&x)?;
    let z = DenseMatrix::from_columns(&span.iter().map(|s| s.column(0).into_owned()).collect::<Vec<_>>());
    let a = z.transpose() * problem.b_mat.matrix() * &z;
    let m = SpdMatrix::new(z.transpose() * problem.b_lambda.matrix() * &z)?;
    // M^{−1/2} A M^{−1/2} through the Cholesky factor: R⁻ᵀ A R⁻¹
    let r = m.upper_factor();
    let r_inv = r.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let vals = linalg::sym_eigenvalues(&linalg::sym(&(r_inv.transpose() * a * r_inv)))?;
    Ok(vals[vals.len() - 1] / vals[0])
}
