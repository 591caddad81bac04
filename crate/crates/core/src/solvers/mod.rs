//! Riemannian gradient descent, conjugate gradients and Gauss-Newton.

mod descent;
mod gauss_newton;
mod linesearch;

use std::fmt;

use crate::error::Result;
use crate::geometry::{
    self, egrad_to_rgrad_general, ComponentKind, MetricFactors, ProductPoint, TangentVector,
};
use crate::linalg::DenseMatrix;

pub use descent::{rcg, rcg_with, rgd, rgd_with};
pub use gauss_newton::{flatten, gauss_newton, gauss_newton_with, unflatten_like, GnParams, ResidualProblem};
pub use linesearch::{armijo_from, armijo_search, LineSearchOutcome};

/// A cost on a product manifold together with its metric.
pub trait Problem: Sync {
    fn kinds(&self) -> &[ComponentKind];

    fn cost(&self, x: &ProductPoint) -> f64;

    /// Euclidean partial gradients, one block per component.
    fn partials(&self, x: &ProductPoint) -> Vec<DenseMatrix>;

    fn metric(&self, x: &ProductPoint) -> Result<MetricFactors>;

    fn gradient(&self, x: &ProductPoint, f: &MetricFactors) -> Result<TangentVector> {
        egrad_to_rgrad_general(x, self.kinds(), f, &self.partials(x))
    }

    fn retract(&self, x: &ProductPoint, eta: &TangentVector, s: f64) -> Result<ProductPoint> {
        geometry::retract(x, self.kinds(), eta, s)
    }

    /// Application-specific error used by `cost_tol` and `rel_change_tol`.
    fn error_measure(&self, _x: &ProductPoint) -> Option<f64> {
        None
    }

    fn riemannian_gradient(&self, x: &ProductPoint) -> Result<TangentVector> {
        let f = self.metric(x)?;
        self.gradient(x, &f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams {
    pub s0: f64,
    pub rho: f64,
    pub a: f64,
    pub max_backtracks: usize,
}

impl LineSearchParams {
    /// ρ = 0.5, a = 1e-4, s0 = 1.
    pub fn standard() -> Self {
        Self { s0: 1.0, rho: 0.5, a: 1e-4, max_backtracks: 60 }
    }

    /// ρ = 0.3, a = 2⁻¹³, s0 = 1.
    pub fn tensor_ring() -> Self {
        Self { s0: 1.0, rho: 0.3, a: 2f64.powi(-13), max_backtracks: 60 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.s0 > 0.0 && self.rho > 0.0 && self.rho < 1.0 && self.a > 0.0 && self.a < 1.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Invalid(format!("line search parameters out of range: {self:?}")))
        }
    }
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self::standard()
    }
}

/// A zero tolerance disables the corresponding test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingCriteria {
    pub gnorm_tol: f64,
    pub max_iters: usize,
    pub rel_change_tol: f64,
    pub min_stepsize: f64,
    pub cost_tol: f64,
}

impl StoppingCriteria {
    pub fn standard() -> Self {
        Self { gnorm_tol: 1e-6, max_iters: 10_000, rel_change_tol: 0.0, min_stepsize: 0.0, cost_tol: 0.0 }
    }

    pub fn tensor_ring() -> Self {
        Self { gnorm_tol: 1e-6, max_iters: 10_000, rel_change_tol: 1e-8, min_stepsize: 1e-10, cost_tol: 1e-14 }
    }
}

impl Default for StoppingCriteria {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaRule {
    FletcherReeves,
    PolakRibierePlus,
    HestenesStiefelPlus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CgParams {
    pub beta_rule: BetaRule,
    pub restart_on_nondescent: bool,
}

impl Default for CgParams {
    fn default() -> Self {
        Self { beta_rule: BetaRule::HestenesStiefelPlus, restart_on_nondescent: true }
    }
}

/// Per-iteration callback producing extra trace columns.
pub type Monitor<'a> = &'a (dyn Fn(&ProductPoint) -> Vec<f64> + Sync);

/// Replaces the Armijo search by a prescribed step, e.g. an exact line search.
pub type StepRule<'a> = &'a (dyn Fn(&ProductPoint, &TangentVector) -> f64 + Sync);

/// First trial stepsize of each Armijo search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialStep {
    /// Always `s0`.
    Fixed,
    /// Previous accepted step divided by ρ, capped at `s0`.
    WarmStart,
    /// `2(f_{k−1} − f_k)/(−slope)`, the minimizer of the quadratic through the
    /// last decrease; `s0` on the first iteration or when not positive.
    Interpolated,
}

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    pub initial_step: InitialStep,
    pub record_time: bool,
    pub monitor: Option<Monitor<'a>>,
    pub step_rule: Option<StepRule<'a>>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self { initial_step: InitialStep::WarmStart, record_time: true, monitor: None, step_rule: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub cost: f64,
    pub gnorm: f64,
    /// Step that produced this iterate; zero at the start.
    pub stepsize: f64,
    pub time_s: f64,
    pub error: Option<f64>,
    pub extras: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    CostTolerance,
    RelativeChange,
    MinStepsize,
    StepsizeUnderflow,
    Failed(String),
}

impl Termination {
    pub fn is_error(&self) -> bool {
        matches!(self, Self::Failed(_))
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GradientTolerance => f.write_str("gradient norm below tolerance"),
            Self::MaxIterations => f.write_str("maximum iterations reached"),
            Self::CostTolerance => f.write_str("error measure below tolerance"),
            Self::RelativeChange => f.write_str("relative change below tolerance"),
            Self::MinStepsize => f.write_str("stepsize below minimum"),
            Self::StepsizeUnderflow => f.write_str("stepsize underflow"),
            Self::Failed(msg) => write!(f, "failed: {msg}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub records: Vec<IterRecord>,
    pub termination: Termination,
    pub final_point: ProductPoint,
    pub cost_evaluations: usize,
    pub restarts: usize,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &IterRecord {
        self.records.last().expect("a report always holds the starting record")
    }
}

/// Shared bookkeeping for the stopping tests.
pub(crate) struct StopState {
    stop: StoppingCriteria,
    prev_error: Option<f64>,
}

impl StopState {
    pub(crate) fn new(stop: StoppingCriteria) -> Self {
        Self { stop, prev_error: None }
    }

    pub(crate) fn check(&mut self, iter: usize, gnorm: f64, step: f64, error: Option<f64>) -> Option<Termination> {
        let s = &self.stop;
        let prev = self.prev_error.replace(error.unwrap_or(f64::NAN));
        if gnorm < s.gnorm_tol {
            return Some(Termination::GradientTolerance);
        }
        if let Some(e) = error {
            if s.cost_tol > 0.0 && e < s.cost_tol {
                return Some(Termination::CostTolerance);
            }
            if let Some(p) = prev {
                if s.rel_change_tol > 0.0 && p.is_finite() && p > 0.0 && ((e - p) / p).abs() < s.rel_change_tol {
                    return Some(Termination::RelativeChange);
                }
            }
        }
        if iter > 0 && s.min_stepsize > 0.0 && step < s.min_stepsize {
            return Some(Termination::MinStepsize);
        }
        if iter >= s.max_iters {
            return Some(Termination::MaxIterations);
        }
        None
    }
}

pub(crate) struct Clock {
    start: std::time::Instant,
    enabled: bool,
}

impl Clock {
    pub(crate) fn new(enabled: bool) -> Self {
        Self { start: std::time::Instant::now(), enabled }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }
}
