//! Leading singular triplets as minimization of `−tr(UᵀAVN)` over
//! `St(p, m) × St(p, n)`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::{BlockFactors, ComponentKind, Factor, MetricFactors, ProductPoint, TangentVector};
use crate::linalg::{self, lyap_solve, precond_factor, sym, DenseMatrix, SpdMatrix};
use crate::rng::{self, SeededRng};
use crate::solvers::Problem;
use crate::spectrum::{SpectrumInputs, SvdMetric};

impl std::str::FromStr for SvdMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" | "euclidean" => Ok(Self::Euclidean),
            "r12" => Ok(Self::R12),
            _ => Err(Error::Invalid(format!("unknown SVD metric '{s}' (expected e, r12)"))),
        }
    }
}

impl std::fmt::Display for SvdMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "e",
            Self::R12 => "r12",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SvdProblem {
    a: DenseMatrix,
    mu: Vec<f64>,
    n_diag: DenseMatrix,
    delta: f64,
    metric: SvdMetric,
    kinds: Vec<ComponentKind>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvdBenchmarkSpec {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl SvdBenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if self.p == 0 || self.p >= self.m.min(self.n) {
            return Err(Error::Invalid(format!("need 0 < p < min(m, n), got p = {}", self.p)));
        }
        Ok(())
    }

    /// `(1, γ, …, γ^{p−1}, 0)`.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut s: Vec<f64> = (0..self.p).map(|i| self.gamma.powi(i as i32)).collect();
        s.push(0.0);
        s
    }

    /// `(p, …, 1)`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.p).map(|i| (self.p - i) as f64).collect()
    }
}

#[derive(Clone, Debug)]
pub struct SvdBenchmark {
    pub problem: SvdProblem,
    pub u_star: DenseMatrix,
    pub v_star: DenseMatrix,
    pub spec: SvdBenchmarkSpec,
    /// Starting point drawn from the same stream after `A`.
    pub start: ProductPoint,
}

impl SvdBenchmark {
    pub fn solution(&self) -> ProductPoint {
        ProductPoint::new(vec![self.u_star.clone(), self.v_star.clone()])
    }

    pub fn spectrum_inputs(&self) -> SpectrumInputs {
        SpectrumInputs::new(self.spec.spectrum(), self.spec.weights(), self.problem.delta)
    }
}

impl SvdProblem {
    pub fn new(a: DenseMatrix, mu: Vec<f64>, delta: f64, metric: SvdMetric) -> Result<Self> {
        let p = mu.len();
        if p == 0 || mu.iter().any(|&v| !(v > 0.0)) || mu.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::Invalid("weights must be positive and strictly decreasing".into()));
        }
        let (m, n) = a.shape();
        if p >= m.min(n) {
            return Err(Error::Invalid(format!("need p < min(m, n), got p = {p} for a {m}x{n} matrix")));
        }
        if !(delta > 0.0) {
            return Err(Error::Invalid("delta must be positive".into()));
        }
        linalg::check_finite(&a)?;
        let n_diag = DenseMatrix::from_diagonal(&DVector::from_column_slice(&mu));
        let kinds = vec![ComponentKind::Stiefel { n: m, p }, ComponentKind::Stiefel { n, p }];
        Ok(Self { a, mu, n_diag, delta, metric, kinds })
    }

    /// `A = U*ΣV*ᵀ` with uniform random orthonormalized factors, followed by a
    /// random start from the same seed.
    pub fn build_benchmark(spec: SvdBenchmarkSpec, delta: f64, metric: SvdMetric) -> Result<SvdBenchmark> {
        spec.validate()?;
        let mut rng = rng::seeded(spec.seed);
        let u_star = linalg::qf(&rng::uniform_matrix(&mut rng, spec.m, spec.p))?;
        let v_star = linalg::qf(&rng::uniform_matrix(&mut rng, spec.n, spec.p))?;
        let sigma = spec.spectrum();
        let s = DenseMatrix::from_diagonal(&DVector::from_column_slice(&sigma[..spec.p]));
        let a = &u_star * s * v_star.transpose();
        let problem = Self::new(a, spec.weights(), delta, metric)?;
        let start = problem.random_point(&mut rng)?;
        Ok(SvdBenchmark { problem, u_star, v_star, spec, start })
    }

    pub fn with_metric(&self, metric: SvdMetric) -> Self {
        Self { metric, ..self.clone() }
    }

    pub fn metric_tag(&self) -> SvdMetric {
        self.metric
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn cost_uv(&self, u: &DenseMatrix, v: &DenseMatrix) -> f64 {
        let w = &self.a * v;
        -(0..self.p()).map(|i| self.mu[i] * u.column(i).dot(&w.column(i))).sum::<f64>()
    }

    pub fn euclidean_partials(&self, u: &DenseMatrix, v: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        (-(&self.a * v * &self.n_diag), -(self.a.tr_mul(u) * &self.n_diag))
    }

    fn right_factors(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<(SpdMatrix, SpdMatrix)> {
        match self.metric {
            SvdMetric::Euclidean => Ok((SpdMatrix::identity(self.p()), SpdMatrix::identity(self.p()))),
            SvdMetric::R12 => {
                let c = u.tr_mul(&self.a) * v;
                let m1 = precond_factor(&(&c * &self.n_diag), self.delta)?;
                let m2 = precond_factor(&(c.transpose() * &self.n_diag), self.delta)?;
                Ok((m1, m2))
            }
        }
    }

    pub fn metric_factors(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<MetricFactors> {
        let blocks = match self.metric {
            SvdMetric::Euclidean => vec![BlockFactors::identity(), BlockFactors::identity()],
            SvdMetric::R12 => {
                let (m1, m2) = self.right_factors(u, v)?;
                vec![
                    BlockFactors::new(Factor::Identity, Factor::spd(m1)),
                    BlockFactors::new(Factor::Identity, Factor::spd(m2)),
                ]
            }
        };
        Ok(MetricFactors { blocks })
    }

    pub fn riemannian_gradient(&self, u: &DenseMatrix, v: &DenseMatrix) -> Result<TangentVector> {
        let (m1, m2) = self.right_factors(u, v)?;
        let (gu, gv) = self.euclidean_partials(u, v);
        let block = |x: &DenseMatrix, g: DenseMatrix, m: &SpdMatrix| -> Result<DenseMatrix> {
            let bar = m.solve_right(&g);
            let s = lyap_solve(m, &(sym(&x.tr_mul(&bar)) * 2.0))?;
            Ok(bar - m.solve_right(&(x * s)))
        };
        Ok(TangentVector::new(vec![block(u, gu, &m1)?, block(v, gv, &m2)?]))
    }

    /// Uniform random entries orthonormalized by qf.
    pub fn random_point(&self, rng: &mut SeededRng) -> Result<ProductPoint> {
        let (m, n) = self.a.shape();
        let u = linalg::qf(&rng::uniform_matrix(rng, m, self.p()))?;
        let v = linalg::qf(&rng::uniform_matrix(rng, n, self.p()))?;
        Ok(ProductPoint::new(vec![u, v]))
    }
}

impl Problem for SvdProblem {
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

    fn gradient(&self, x: &ProductPoint, _f: &MetricFactors) -> Result<TangentVector> {
        self.riemannian_gradient(&x.blocks[0], &x.blocks[1])
    }
}
