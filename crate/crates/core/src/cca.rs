//! Canonical correlation analysis as minimization of `−tr(UᵀΣxy V N)` over
//! the product of two generalized Stiefel manifolds, under five metrics.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{BlockFactors, ComponentKind, Factor, MetricFactors, ProductPoint, TangentVector};
use crate::linalg::{self, lyap_solve, precond_factor, sym, DenseMatrix, SpdMatrix};
use crate::rng::{self, SeededRng};
use crate::solvers::Problem;
use crate::spectrum::SpectrumInputs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CcaMetric {
    E,
    L1,
    L2,
    L12,
    Lr12,
}

impl CcaMetric {
    pub const ALL: [CcaMetric; 5] = [Self::E, Self::L1, Self::L2, Self::L12, Self::Lr12];

    pub fn tag(&self) -> &'static str {
        match self {
            Self::E => "e",
            Self::L1 => "l1",
            Self::L2 => "l2",
            Self::L12 => "l12",
            Self::Lr12 => "lr12",
        }
    }
}

impl fmt::Display for CcaMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for CcaMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Invalid(format!("unknown CCA metric '{s}' (expected e, l1, l2, l12, lr12)")))
    }
}

#[derive(Clone, Debug)]
pub struct CcaProblem {
    sxx: Arc<SpdMatrix>,
    syy: Arc<SpdMatrix>,
    sxy: DenseMatrix,
    // Σxx⁻¹Σxy and Σyy⁻¹Σxyᵀ
    px: DenseMatrix,
    py: DenseMatrix,
    mu: Vec<f64>,
    n_diag: DenseMatrix,
    delta: f64,
    metric: CcaMetric,
    kinds: Vec<ComponentKind>,
}

#[derive(Clone, Debug)]
pub struct CcaSolution {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
    /// Leading `m` canonical correlations.
    pub correlations: Vec<f64>,
    /// All singular values of the whitened cross-covariance, padded with a
    /// zero when there are only `m`.
    pub spectrum: Vec<f64>,
}

impl CcaSolution {
    pub fn point(&self) -> ProductPoint {
        ProductPoint::new(vec![self.u.clone(), self.v.clone()])
    }
}

fn check_weights(mu: &[f64]) -> Result<()> {
    if mu.is_empty() || mu.iter().any(|&v| !(v > 0.0)) || mu.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::Invalid("weights must be positive and strictly decreasing".into()));
    }
    Ok(())
}

impl CcaProblem {
    pub fn new(
        sxx: SpdMatrix,
        syy: SpdMatrix,
        sxy: DenseMatrix,
        mu: Vec<f64>,
        delta: f64,
        metric: CcaMetric,
    ) -> Result<Self> {
        check_weights(&mu)?;
        let (dx, dy, m) = (sxx.dim(), syy.dim(), mu.len());
        if sxy.shape() != (dx, dy) {
            return Err(Error::Shape(format!("Σxy is {:?}, expected ({dx}, {dy})", sxy.shape())));
        }
        if m > dx.min(dy) {
            return Err(Error::Invalid(format!("m = {m} exceeds min(d_x, d_y) = {}", dx.min(dy))));
        }
        if !(delta > 0.0) {
            return Err(Error::Invalid("delta must be positive".into()));
        }
        linalg::check_finite(&sxy)?;
        let px = sxx.solve(&sxy);
        let py = syy.solve(&sxy.transpose());
        let sxx = Arc::new(sxx);
        let syy = Arc::new(syy);
        let kinds = vec![
            ComponentKind::GeneralizedStiefel { n: dx, p: m, constraint: sxx.clone() },
            ComponentKind::GeneralizedStiefel { n: dy, p: m, constraint: syy.clone() },
        ];
        let n_diag = DenseMatrix::from_diagonal(&DVector::from_column_slice(&mu));
        Ok(Self { sxx, syy, sxy, px, py, mu, n_diag, delta, metric, kinds })
    }

    /// `Σxx = XᵀX + λxI`, `Σyy = YᵀY + λyI`, `Σxy = XᵀY`.
    pub fn build_from_data(
        x: &DenseMatrix,
        y: &DenseMatrix,
        lambda_x: f64,
        lambda_y: f64,
        mu: Vec<f64>,
        delta: f64,
        metric: CcaMetric,
    ) -> Result<Self> {
        if x.nrows() != y.nrows() || x.nrows() == 0 {
            return Err(Error::Shape(format!("X has {} rows, Y has {}", x.nrows(), y.nrows())));
        }
        if lambda_x < 0.0 || lambda_y < 0.0 {
            return Err(Error::Invalid("regularizers must be nonnegative".into()));
        }
        let (dx, dy) = (x.ncols(), y.ncols());
        let sxx = x.tr_mul(x) + DenseMatrix::identity(dx, dx) * lambda_x;
        let syy = y.tr_mul(y) + DenseMatrix::identity(dy, dy) * lambda_y;
        Self::new(SpdMatrix::new(sxx)?, SpdMatrix::new(syy)?, x.tr_mul(y), mu, delta, metric)
    }

    /// Instance whose whitened cross-covariance has exactly the singular
    /// values `sigma`, with random well-conditioned Gram matrices.
    pub fn with_whitened_spectrum(
        rng: &mut SeededRng,
        dx: usize,
        dy: usize,
        sigma: &[f64],
        mu: Vec<f64>,
        delta: f64,
        metric: CcaMetric,
    ) -> Result<Self> {
        let k = sigma.len();
        if k > dx.min(dy) {
            return Err(Error::Invalid("more singular values than min(d_x, d_y)".into()));
        }
        let gram = |rng: &mut SeededRng, d: usize| {
            let a = rng::gaussian_matrix(rng, d, d);
            a.tr_mul(&a) / d as f64 + DenseMatrix::identity(d, d) * 0.5
        };
        let sxx = gram(rng, dx);
        let syy = gram(rng, dy);
        let p = linalg::qf(&rng::gaussian_matrix(rng, dx, k))?;
        let q = linalg::qf(&rng::gaussian_matrix(rng, dy, k))?;
        let core = &p * DenseMatrix::from_diagonal(&DVector::from_column_slice(sigma)) * q.transpose();
        let hx = linalg::sym_fn(&sxx, f64::sqrt)?;
        let hy = linalg::sym_fn(&syy, f64::sqrt)?;
        let sxy = hx * core * hy;
        Self::new(SpdMatrix::new(sxx)?, SpdMatrix::new(syy)?, sxy, mu, delta, metric)
    }

    pub fn with_metric(&self, metric: CcaMetric) -> Self {
        Self { metric, ..self.clone() }
    }

    pub fn metric_tag(&self) -> CcaMetric {
        self.metric
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn sxx(&self) -> &SpdMatrix {
        &self.sxx
    }

    pub fn syy(&self) -> &SpdMatrix {
        &self.syy
    }

    pub fn sxy(&self) -> &DenseMatrix {
        &self.sxy
    }

    pub fn cost_uv(&self, u: &DenseMatrix, v: &DenseMatrix) -> f64 {
        let w = &self.sxy * v;
        -(0..self.m()).map(|i| self.mu[i] * u.column(i).dot(&w.column(i))).sum::<f64>()
    }

    /// `(−ΣxyVN, −ΣxyᵀUN)`.
    pub fn euclidean_partials(&self, u: &DenseMatrix, v: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let gu = -(&self.sxy * v * &self.n_diag);
        let gv = -(self.sxy.tr_mul(u) * &self.n_diag);
        (gu, gv)
    }

    /// `(M₁, M₂) = ((sym(UᵀΣxyVN)² + δI)^{1/2}, (sym(VᵀΣxyᵀUN)² + δI)^{1/2})`.
    pub fn right_factors(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<(SpdMatrix, SpdMatrix)> {
        let c = u.tr_mul(&self.sxy) * v;
        let m1 = precond_factor(&(&c * &self.n_diag), self.delta)?;
        let m2 = precond_factor(&(c.transpose() * &self.n_diag), self.delta)?;
        Ok((m1, m2))
    }

    pub fn metric_factors(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<MetricFactors> {
        let lx = || Factor::Spd(self.sxx.clone());
        let ly = || Factor::Spd(self.syy.clone());
        let id = || Factor::Identity;
        let blocks = match self.metric {
            CcaMetric::E => vec![BlockFactors::identity(), BlockFactors::identity()],
            CcaMetric::L1 => vec![BlockFactors::new(lx(), id()), BlockFactors::identity()],
            CcaMetric::L2 => vec![BlockFactors::identity(), BlockFactors::new(ly(), id())],
            CcaMetric::L12 => vec![BlockFactors::new(lx(), id()), BlockFactors::new(ly(), id())],
            CcaMetric::Lr12 => {
                let (m1, m2) = self.right_factors(u, v)?;
                vec![BlockFactors::new(lx(), Factor::spd(m1)), BlockFactors::new(ly(), Factor::spd(m2))]
            }
        };
        Ok(MetricFactors { blocks })
    }

    fn metric_right_factors(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<(SpdMatrix, SpdMatrix)> {
        match self.metric {
            CcaMetric::L12 => Ok((SpdMatrix::identity(self.m()), SpdMatrix::identity(self.m()))),
            CcaMetric::Lr12 => self.right_factors(u, v),
            other => Err(Error::Invalid(format!("multipliers are defined for l12 and lr12, not {other}"))),
        }
    }

    fn multipliers_with(
        &self,
        u: &DenseMatrix,
        v: &DenseMatrix,
        m1: &SpdMatrix,
        m2: &SpdMatrix,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let c = u.tr_mul(&self.sxy) * v * &self.n_diag;
        let cy = v.tr_mul(&self.sxy.tr_mul(u)) * &self.n_diag;
        // 2 sym(UᵀΣxx η̄) with η̄ = −Σxx⁻¹ΣxyVN M⁻¹
        let s1 = lyap_solve(m1, &(sym(&m1.solve_right(&c)) * -2.0))?;
        let s2 = lyap_solve(m2, &(sym(&m2.solve_right(&cy)) * -2.0))?;
        Ok((s1, s2))
    }

    /// Multipliers `S₁, S₂` of the closed-form gradient under L12 or LR12.
    pub fn lyapunov_multipliers(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let (m1, m2) = self.metric_right_factors(u, v)?;
        self.multipliers_with(u, v, &m1, &m2)
    }

    fn closed_form_gradient(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<TangentVector> {
        let n = &self.n_diag;
        let (m1, m2) = self.metric_right_factors(u, v)?;
        let (s1, s2) = self.multipliers_with(u, v, &m1, &m2)?;
        let a = &self.px * v * n + u * s1;
        let b = &self.py * u * n + v * s2;
        Ok(TangentVector::new(vec![-m1.solve_right(&a), -m2.solve_right(&b)]))
    }

    pub fn riemannian_gradient(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<TangentVector> {
        let x = ProductPoint::new(vec![u.clone(), v.clone()]);
        let f = self.metric_factors(u, v)?;
        Problem::gradient(self, &x, &f)
    }

    /// Leading canonical pairs from the thin SVD of `Σxx^{−1/2}ΣxyΣyy^{−1/2}`.
    pub fn closed_form_solution(&self) -> Result<CcaSolution> {
        let m = self.m();
        let inv_half = |s: &SpdMatrix| -> Result<DenseMatrix> {
            let (vals, _) = linalg::sym_eig(s.matrix())?;
            if vals[0] <= 1e-14 {
                return Err(Error::NotPositiveDefinite);
            }
            linalg::sym_fn(s.matrix(), |l| 1.0 / l.sqrt())
        };
        let wx = inv_half(&self.sxx)?;
        let wy = inv_half(&self.syy)?;
        let t = &wx * &self.sxy * &wy;
        let (mut ub, sigma, mut vb) = linalg::svd_thin(&t)?;
        let mut spectrum: Vec<f64> = sigma.iter().copied().collect();
        if spectrum.len() == m {
            spectrum.push(0.0);
        }
        for i in 0..m {
            if spectrum[i] - spectrum[i + 1] <= 1e-10 {
                return Err(Error::NonIsolated);
            }
        }
        for j in 0..m {
            let first = ub.column(j).iter().copied().find(|v| v.abs() > 1e-14).unwrap_or(0.0);
            if first < 0.0 {
                ub.column_mut(j).neg_mut();
                vb.column_mut(j).neg_mut();
            }
        }
        let u = wx * ub.columns(0, m);
        let v = wy * vb.columns(0, m);
        Ok(CcaSolution { u, v, correlations: spectrum[..m].to_vec(), spectrum })
    }

    pub fn spectrum_inputs(&self, solution: &CcaSolution) -> SpectrumInputs {
        SpectrumInputs::new(solution.spectrum.clone(), self.mu.clone(), self.delta)
    }

    /// Random feasible point: uniform entries normalized by the retraction.
    pub fn random_point(&self, rng: &mut SeededRng) -> Result<ProductPoint> {
        let m = self.m();
        let u = rng::uniform_matrix(rng, self.sxx.dim(), m);
        let v = rng::uniform_matrix(rng, self.syy.dim(), m);
        let zero = ProductPoint::new(vec![u, v]);
        crate::geometry::restore_feasibility(zero, &self.kinds)
    }
}

impl Problem for CcaProblem {
    fn kinds(&self) -> &[ComponentKind] {
        &self.kinds
    }

    fn cost(&self, x: &ProductPoint) -> f64 {
        self.cost_uv(&x.blocks[0], &x.blocks[1])
    }

    fn partials(&self, x: &ProductPoint) -> Vec<DenseMatrix> {
        let (a, b) = self.euclidean_partials(&x.blocks[0], &x.blocks[1]);
        vec![a, b]
    }

    fn metric(&self, x: &ProductPoint) -> Result<MetricFactors> {
        self.metric_factors(&x.blocks[0], &x.blocks[1])
    }

    fn gradient(&self, x: &ProductPoint, f: &MetricFactors) -> Result<TangentVector> {
        match self.metric {
            CcaMetric::L12 | CcaMetric::Lr12 => self.closed_form_gradient(&x.blocks[0], &x.blocks[1]),
            _ => crate::geometry::egrad_to_rgrad_general(x, &self.kinds, f, &self.partials(x)),
        }
    }
}

/// `‖UUᵀ − U_ref U_refᵀ‖_F`, evaluated on the raw matrices.
pub fn subspace_distance(u: &DenseMatrix, uref: &DenseMatrix) -> f64 {
    (u * u.transpose() - uref * uref.transpose()).norm()
}

/// `X` (n×d_x) then `Y` (n×d_y), entries uniform on [0, 1).
pub fn synthetic_data(rng: &mut SeededRng, n: usize, dx: usize, dy: usize) -> (DenseMatrix, DenseMatrix) {
    let x = rng::uniform_matrix(rng, n, dx);
    let y = rng::uniform_matrix(rng, n, dy);
    (x, y)
}

/// Seeded synthetic instance: data `X`, `Y`, then a random start, all from
/// one stream.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_instance(
    seed: u64,
    n: usize,
    dx: usize,
    dy: usize,
    lambda: (f64, f64),
    mu: Vec<f64>,
    delta: f64,
    metric: CcaMetric,
) -> Result<(CcaProblem, ProductPoint)> {
    let mut rng = rng::seeded(seed);
    let (x, y) = synthetic_data(&mut rng, n, dx, dy);
    let problem = CcaProblem::build_from_data(&x, &y, lambda.0, lambda.1, mu, delta, metric)?;
    let start = problem.random_point(&mut rng)?;
    Ok((problem, start))
}

/// `(m, m−1, …, 1)`.
pub fn default_weights(m: usize) -> Vec<f64> {
    (0..m).map(|i| (m - i) as f64).collect()
}
