use super::{
    armijo_from, BetaRule, CgParams, Clock, InitialStep, IterRecord, LineSearchOutcome, LineSearchParams, Problem, RunOptions,
    RunReport, StopState, StoppingCriteria, Termination,
};
use crate::error::{Error, Result};
use crate::geometry::{
    feasibility_residual, metric_inner, restore_feasibility, transport, MetricFactors, ProductPoint, TangentVector,
};

const START_FEASIBILITY_TOL: f64 = 1e-8;

pub fn rgd<P: Problem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    ls: &LineSearchParams,
    stop: &StoppingCriteria,
) -> Result<RunReport> {
    rgd_with(problem, x0, ls, stop, &RunOptions::default())
}

pub fn rgd_with<P: Problem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    ls: &LineSearchParams,
    stop: &StoppingCriteria,
    opts: &RunOptions<'_>,
) -> Result<RunReport> {
    run(problem, x0, ls, stop, None, opts)
}

pub fn rcg<P: Problem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    ls: &LineSearchParams,
    stop: &StoppingCriteria,
    cg: &CgParams,
) -> Result<RunReport> {
    rcg_with(problem, x0, ls, stop, cg, &RunOptions::default())
}

pub fn rcg_with<P: Problem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    ls: &LineSearchParams,
    stop: &StoppingCriteria,
    cg: &CgParams,
    opts: &RunOptions<'_>,
) -> Result<RunReport> {
    run(problem, x0, ls, stop, Some(cg), opts)
}

struct State {
    x: ProductPoint,
    fx: f64,
    factors: MetricFactors,
    grad: TangentVector,
    gnorm2: f64,
}

fn evaluate<P: Problem + ?Sized>(problem: &P, x: ProductPoint, fx: f64) -> Result<State> {
    let factors = problem.metric(&x)?;
    let grad = problem.gradient(&x, &factors)?;
    let gnorm2 = metric_inner(&factors, &grad, &grad)?;
    Ok(State { x, fx, factors, grad, gnorm2 })
}

fn run<P: Problem + ?Sized>(
    problem: &P,
    x0: &ProductPoint,
    ls: &LineSearchParams,
    stop: &StoppingCriteria,
    cg: Option<&CgParams>,
    opts: &RunOptions<'_>,
) -> Result<RunReport> {
    ls.validate()?;
    let kinds = problem.kinds();
    let drift = feasibility_residual(x0, kinds);
    if drift > START_FEASIBILITY_TOL {
        return Err(Error::Invalid(format!("starting point infeasible (residual {drift:.3e})")));
    }
    let clock = Clock::new(opts.record_time);
    let mut stopper = StopState::new(*stop);
    let mut records = Vec::new();
    let mut evaluations = 1;
    let mut restarts = 0;
    let mut st = evaluate(problem, x0.clone(), problem.cost(x0))?;
    let mut dir = st.grad.scaled(-1.0);
    let mut step = 0.0;
    let mut s_next = ls.s0;
    let mut f_prev = f64::NAN;
    let mut iter = 0;

    let termination = loop {
        let error = problem.error_measure(&st.x);
        let gnorm = st.gnorm2.max(0.0).sqrt();
        records.push(IterRecord {
            iter,
            cost: st.fx,
            gnorm,
            stepsize: step,
            time_s: clock.elapsed(),
            error,
            extras: opts.monitor.map(|m| m(&st.x)).unwrap_or_default(),
        });
        if let Some(t) = stopper.check(iter, gnorm, step, error) {
            break t;
        }

        let mut slope = match metric_inner(&st.factors, &st.grad, &dir) {
            Ok(v) => v,
            Err(e) => break Termination::Failed(e.to_string()),
        };
        if !(slope < 0.0) {
            dir = st.grad.scaled(-1.0);
            slope = -st.gnorm2;
            restarts += 1;
        }
        let outcome = match opts.step_rule {
            Some(rule) => {
                let s = rule(&st.x, &dir);
                match problem.retract(&st.x, &dir, s) {
                    Ok(point) => {
                        let cost = problem.cost(&point);
                        Ok(LineSearchOutcome::Accepted { step: s, evaluations: 1, point, cost })
                    }
                    Err(e) => Err(e),
                }
            }
            None => {
                if opts.initial_step == InitialStep::Interpolated {
                    let guess = 2.0 * (f_prev - st.fx) / -slope;
                    if guess.is_finite() && guess > 0.0 {
                        s_next = guess;
                    }
                }
                armijo_from(problem, &st.x, st.fx, slope, &dir, s_next, ls)
            }
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => break Termination::Failed(e.to_string()),
        };
        let (s, point, cost) = match outcome {
            LineSearchOutcome::Accepted { step, evaluations: n, point, cost } => {
                evaluations += n;
                (step, point, cost)
            }
            LineSearchOutcome::Underflow { evaluations: n } => {
                evaluations += n;
                break Termination::StepsizeUnderflow;
            }
        };
        step = s;
        s_next = match opts.initial_step {
            InitialStep::Fixed => ls.s0,
            InitialStep::WarmStart | InitialStep::Interpolated => (s / ls.rho).min(ls.s0),
        };
        f_prev = st.fx;

        let point = match restore_feasibility(point, kinds) {
            Ok(p) => p,
            Err(e) => break Termination::Failed(e.to_string()),
        };
        let next = match evaluate(problem, point, cost) {
            Ok(n) => n,
            Err(e) => break Termination::Failed(e.to_string()),
        };

        dir = match cg {
            None => next.grad.scaled(-1.0),
            Some(params) => match cg_direction(problem, params, &st, &next, &dir) {
                Ok(d) => d,
                Err(e) => break Termination::Failed(e.to_string()),
            },
        };
        st = next;
        iter += 1;
    };

    Ok(RunReport { records, termination, final_point: st.x, cost_evaluations: evaluations, restarts })
}

fn cg_direction<P: Problem + ?Sized>(
    problem: &P,
    params: &CgParams,
    old: &State,
    new: &State,
    old_dir: &TangentVector,
) -> Result<TangentVector> {
    let kinds = problem.kinds();
    let t_dir = transport(&new.x, kinds, &new.factors, old_dir)?;
    let beta = match params.beta_rule {
        BetaRule::FletcherReeves => {
            if old.gnorm2 > 0.0 {
                new.gnorm2 / old.gnorm2
            } else {
                0.0
            }
        }
        BetaRule::PolakRibierePlus | BetaRule::HestenesStiefelPlus => {
            let t_grad = transport(&new.x, kinds, &new.factors, &old.grad)?;
            let y = new.grad.axpy(-1.0, &t_grad);
            let num = metric_inner(&new.factors, &new.grad, &y)?;
            let den = if params.beta_rule == BetaRule::PolakRibierePlus {
                old.gnorm2
            } else {
                metric_inner(&new.factors, &t_dir, &y)?
            };
            if den != 0.0 && den.is_finite() {
                (num / den).max(0.0)
            } else {
                0.0
            }
        }
    };
    let dir = t_dir.scaled(beta).axpy(-1.0, &new.grad);
    if params.restart_on_nondescent && !(metric_inner(&new.factors, &new.grad, &dir)? < 0.0) {
        return Ok(new.grad.scaled(-1.0));
    }
    Ok(dir)
}
