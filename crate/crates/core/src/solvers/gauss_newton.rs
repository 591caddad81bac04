use nalgebra::{Cholesky, DVector};

use super::{Clock, IterRecord, RunOptions, RunReport, StopState, StoppingCriteria, Termination};
use crate::error::{Error, Result};
use crate::geometry::ProductPoint;
use crate::linalg::DenseMatrix;

/// A least-squares residual `F(x)` over Euclidean blocks. Parameters are
/// flattened block by block, each block in row-major order (see [`flatten`]).
pub trait ResidualProblem: Sync {
    fn residual(&self, x: &ProductPoint) -> DVector<f64>;

    fn jacobian(&self, x: &ProductPoint) -> DenseMatrix;

    /// `(JᵀJ, JᵀF)`; override when the Jacobian is sparse.
    fn normal_equations(&self, x: &ProductPoint) -> (DenseMatrix, DVector<f64>) {
        let j = self.jacobian(x);
        let f = self.residual(x);
        (j.tr_mul(&j), j.tr_mul(&f))
    }

    fn error_measure(&self, _x: &ProductPoint) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnParams {
    /// `λ = damping · max diag(JᵀJ)`.
    pub damping: f64,
    /// Number of step halvings tried when `‖F‖` grows; zero disables.
    pub max_halvings: usize,
}

impl Default for GnParams {
    fn default() -> Self {
        Self { damping: 1e-10, max_halvings: 5 }
    }
}

pub fn flatten(x: &ProductPoint) -> DVector<f64> {
    let n = x.blocks.iter().map(|b| b.len()).sum();
    let mut v = DVector::zeros(n);
    let mut o = 0;
    for b in &x.blocks {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                v[o] = b[(i, j)];
                o += 1;
            }
        }
    }
    v
}

pub fn unflatten_like(x: &ProductPoint, v: &DVector<f64>) -> Vec<DenseMatrix> {
    let mut o = 0;
    x.blocks
        .iter()
        .map(|b| {
            let m = DenseMatrix::from_row_slice(b.nrows(), b.ncols(), &v.as_slice()[o..o + b.len()]);
            o += b.len();
            m
        })
        .collect()
}

pub fn gauss_newton<P: ResidualProblem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    stop: &StoppingCriteria,
) -> Result<RunReport> {
    gauss_newton_with(problem, x0, stop, &GnParams::default(), &RunOptions::default())
}

fn damped_step(jtj: &DenseMatrix, jtf: &DVector<f64>, damping: f64) -> Result<DVector<f64>> {
    let n = jtj.nrows();
    let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
    let mut lambda = damping * if max_diag > 0.0 { max_diag } else { 1.0 };
    for _ in 0..8 {
        let mut a = jtj.clone();
        for i in 0..n {
            a[(i, i)] += lambda;
        }
        if let Some(c) = Cholesky::new(a) {
            return Ok(-c.solve(jtf));
        }
        lambda *= 100.0;
    }
    Err(Error::Damping)
}

/// Gauss-Newton with unit steps on damped normal equations. The trace's
/// `cost` column holds `½‖F‖²` and `gnorm` holds `‖JᵀF‖`; extras end with the
/// number of step halvings used.
pub fn gauss_newton_with<P: ResidualProblem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    stop: &StoppingCriteria,
    params: &GnParams,
    opts: &RunOptions<'_>,
) -> Result<RunReport> {
    let clock = Clock::new(opts.record_time);
    let mut stopper = StopState::new(*stop);
    let mut records = Vec::new();
    let mut x = x0.clone();
    let mut f = problem.residual(&x);
    let mut evaluations = 1;
    let mut step = 0.0;
    let mut halvings = 0usize;
    let mut iter = 0;

    let termination = loop {
        let (jtj, jtf) = problem.normal_equations(&x);
        let gnorm = jtf.norm();
        let error = problem.error_measure(&x);
        let mut extras = opts.monitor.map(|m| m(&x)).unwrap_or_default();
        extras.push(halvings as f64);
        records.push(IterRecord {
            iter,
            cost: 0.5 * f.norm_squared(),
            gnorm,
            stepsize: step,
            time_s: clock.elapsed(),
            error,
            extras,
        });
        if f.norm() == 0.0 {
            break Termination::GradientTolerance;
        }
        if let Some(t) = stopper.check(iter, gnorm, step, error) {
            break t;
        }
        let eta = match damped_step(&jtj, &jtf, params.damping) {
            Ok(e) => e,
            Err(e) => break Termination::Failed(e.to_string()),
        };
        let eta = unflatten_like(&x, &eta);
        let fnorm = f.norm();
        let mut s = 1.0;
        halvings = 0;
        let (x_new, f_new) = loop {
            let cand = ProductPoint::new(x.blocks.iter().zip(&eta).map(|(b, e)| b + e * s).collect());
            let fc = problem.residual(&cand);
            evaluations += 1;
            if fc.norm() <= fnorm || halvings >= params.max_halvings {
                break (cand, fc);
            }
            s *= 0.5;
            halvings += 1;
        };
        if !f_new.iter().all(|v| v.is_finite()) {
            break Termination::Failed("non-finite residual".into());
        }
        x = x_new;
        f = f_new;
        step = s;
        iter += 1;
    };

    Ok(RunReport { records, termination, final_point: x, cost_evaluations: evaluations, restarts: 0 })
}
