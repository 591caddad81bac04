//! Experiment pipelines: build the problem, run the solver, collect traces.

use std::path::Path;

use anyhow::{bail, Context, Result};
use precond::cca::{self, CcaMetric, CcaProblem};
use precond::ellipsoid::{default_grid, kappa_sweep, rayleigh_kappa, EllipsoidProblem};
use precond::geometry::ProductPoint;
use precond::linalg::{DenseMatrix, SpdMatrix};
use precond::rng::{self, SeededRng};
use precond::solvers::{gauss_newton_with, rcg_with, rgd_with, Monitor, Problem, RunOptions, RunReport, Termination};
use precond::spectrum::{
    kappa_cca_l12, kappa_cca_lr12, kappa_cca_lr12_adjacent, kappa_ordering_check, kappa_svd, numerical_spectrum,
    SpectrumInputs, SvdMetric,
};
use precond::trcomp::{sample_count, SamplingSet, TrFormat, TrProblem};
use precond::tsvd::{SvdBenchmarkSpec, SvdProblem};
use serde_json::{json, Value};

use crate::config::{
    Application, CcaParams, Config, EllipsoidParams, Method, ProblemParams, SpectrumParams, TrcompParams, TsvdParams,
};
use crate::io;

/// Offset separating the starting-point stream from the data stream, so a
/// run on generated files starts where the synthetic run does.
const START_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn data_rng(seed: u64) -> SeededRng {
    rng::seeded(seed)
}

pub fn start_rng(seed: u64) -> SeededRng {
    rng::seeded(seed ^ START_STREAM)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|&v| io::fmt_f64(v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Everything a run writes: named CSV tables and the JSON summary.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub tables: Vec<(String, Table)>,
    pub summary: Value,
    /// Some run ended in a solver error.
    pub failed: bool,
}

pub const BASE_COLUMNS: [&str; 5] = ["iter", "time_s", "cost", "gnorm", "stepsize"];

/// Trace table; `extra` maps each record to the application columns.
fn trace(report: &RunReport, names: &[&str], extra: impl Fn(&precond::solvers::IterRecord) -> Vec<f64>) -> Table {
    let columns = BASE_COLUMNS.iter().chain(names).map(|s| s.to_string()).collect();
    let rows = report
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.iter as f64, r.time_s, r.cost, r.gnorm, r.stepsize];
            row.extend(extra(r));
            row
        })
        .collect();
    Table { columns, rows }
}

fn converged(t: &Termination) -> bool {
    matches!(t, Termination::GradientTolerance | Termination::CostTolerance)
}

fn options<'a>(cfg: &Config, monitor: Monitor<'a>) -> RunOptions<'a> {
    RunOptions { initial_step: cfg.initial_step, record_time: cfg.record_timing, monitor: Some(monitor), step_rule: None }
}

fn descend<P: Problem + ?Sized>(cfg: &Config, problem: &P, x0: &ProductPoint, monitor: Monitor<'_>) -> Result<RunReport> {
    let opts = options(cfg, monitor);
    let r = match cfg.method {
        Method::Rgd => rgd_with(problem, x0, &cfg.linesearch, &cfg.stopping, &opts),
        Method::Rcg => rcg_with(problem, x0, &cfg.linesearch, &cfg.stopping, &cfg.cg, &opts),
        Method::Gn => bail!("solver.method: gn needs a least-squares problem"),
    };
    Ok(r?)
}

fn trace_name(app: Application, k: usize, repeat: usize) -> String {
    if repeat == 1 {
        format!("{app}_trace.csv")
    } else {
        format!("{app}_trace_{k}.csv")
    }
}

/// Runs `once` `cfg.repeat` times and assembles traces and per-run entries.
/// `once` returns the report, its trace, and final metrics.
fn repeated(
    cfg: &Config,
    mut once: impl FnMut() -> Result<(RunReport, Table, Value)>,
) -> (Vec<(String, Table)>, Vec<Value>, bool) {
    let mut tables = Vec::new();
    let mut runs = Vec::new();
    let mut failed = false;
    for k in 1..=cfg.repeat {
        let name = trace_name(cfg.application, k, cfg.repeat);
        match once() {
            Ok((report, table, metrics)) => {
                let last = report.last();
                let is_err = report.termination.is_error();
                failed |= is_err;
                runs.push(json!({
                    "run": k,
                    "trace": name,
                    "iterations": report.iterations(),
                    "termination": report.termination.to_string(),
                    "converged": converged(&report.termination),
                    "cost": last.cost,
                    "gnorm": last.gnorm,
                    "time_s": last.time_s,
                    "cost_evaluations": report.cost_evaluations,
                    "restarts": report.restarts,
                    "metrics": metrics,
                    "error": if is_err { Value::String(report.termination.to_string()) } else { Value::Null },
                }));
                tables.push((name, table));
            }
            Err(e) => {
                failed = true;
                runs.push(json!({ "run": k, "trace": Value::Null, "error": format!("{e:#}") }));
            }
        }
    }
    (tables, runs, failed)
}

fn summary(cfg: &Config, method: Option<&str>, metric: Option<String>, kappa: Value, runs: Vec<Value>) -> Value {
    json!({
        "application": cfg.application,
        "method": method,
        "metric": metric,
        "config": cfg.echo(),
        "kappa": kappa,
        "runs": runs,
    })
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Rgd => "rgd",
        Method::Rcg => "rcg",
        Method::Gn => "gn",
    }
}

pub fn run(cfg: &Config) -> Result<Bundle> {
    match &cfg.problem {
        ProblemParams::Cca(p) => run_cca(cfg, p),
        ProblemParams::Tsvd(p) => run_tsvd(cfg, p),
        ProblemParams::Trcomp(p) => run_trcomp(cfg, p),
        ProblemParams::Ellipsoid(p) => run_ellipsoid(cfg, p),
        ProblemParams::Spectrum(p) => run_spectrum(cfg, p),
    }
}

pub fn cca_data(seed: u64, p: &CcaParams) -> Result<(DenseMatrix, DenseMatrix)> {
    match (&p.x, &p.y) {
        (Some(x), Some(y)) => {
            let (x, y) = (io::read_matrix(x)?, io::read_matrix(y)?);
            if x.nrows() != y.nrows() {
                bail!("problem.x, problem.y: sample counts differ ({} vs {})", x.nrows(), y.nrows());
            }
            Ok((x, y))
        }
        _ => Ok(cca::synthetic_data(&mut data_rng(seed), p.n, p.dx, p.dy)),
    }
}

fn run_cca(cfg: &Config, p: &CcaParams) -> Result<Bundle> {
    let metric: CcaMetric = p.metric.parse()?;
    let (x, y) = cca_data(cfg.seed, p)?;
    let mu = p.weights.clone().unwrap_or_else(|| cca::default_weights(p.m));
    let problem = CcaProblem::build_from_data(&x, &y, p.lambda_x, p.lambda_y, mu, p.delta, metric)?;
    let sol = problem.closed_form_solution().context("closed-form solution for the distance columns")?;
    let kappa = if cfg.with_spectrum {
        let inputs = problem.spectrum_inputs(&sol);
        json!({ "l12": kappa_cca_l12(&inputs)?, "lr12": kappa_cca_lr12(&inputs)? })
    } else {
        Value::Null
    };
    let dist = |x: &ProductPoint| vec![cca::subspace_distance(&x.blocks[0], &sol.u), cca::subspace_distance(&x.blocks[1], &sol.v)];
    let (tables, runs, failed) = repeated(cfg, || {
        let x0 = problem.random_point(&mut start_rng(cfg.seed))?;
        let r = descend(cfg, &problem, &x0, &dist)?;
        let t = trace(&r, &["dist_u", "dist_v"], |q| q.extras.clone());
        let last = &r.last().extras;
        let metrics = json!({ "dist_u": last[0], "dist_v": last[1], "correlations": sol.correlations });
        Ok((r, t, metrics))
    });
    let summary = summary(cfg, Some(method_name(cfg.method)), Some(metric.to_string()), kappa, runs);
    Ok(Bundle { tables, summary, failed })
}

/// Top-`p` singular triplets, descending.
fn top_singular(a: &DenseMatrix, p: usize) -> (Vec<f64>, DenseMatrix, DenseMatrix) {
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let us = DenseMatrix::from_columns(&order[..p].iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let vs = DenseMatrix::from_columns(&order[..p].iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    (sigma, us, vs)
}

pub fn tsvd_matrix(seed: u64, p: &TsvdParams) -> Result<DenseMatrix> {
    match &p.matrix {
        Some(path) => io::read_matrix(path),
        None => {
            let spec = SvdBenchmarkSpec { m: p.m, n: p.n, p: p.p, gamma: p.gamma, seed };
            Ok(SvdProblem::build_benchmark(spec, p.delta, SvdMetric::Euclidean)?.problem.a().clone())
        }
    }
}

fn run_tsvd(cfg: &Config, p: &TsvdParams) -> Result<Bundle> {
    let metric: SvdMetric = p.metric.parse()?;
    let (problem, u_star, v_star, inputs) = match &p.matrix {
        None => {
            let spec = SvdBenchmarkSpec { m: p.m, n: p.n, p: p.p, gamma: p.gamma, seed: cfg.seed };
            let mut bench = SvdProblem::build_benchmark(spec, p.delta, metric)?;
            if let Some(w) = &p.weights {
                bench.problem = SvdProblem::new(bench.problem.a().clone(), w.clone(), p.delta, metric)?;
            }
            let inputs = SpectrumInputs::new(spec.spectrum(), bench.problem.mu().to_vec(), p.delta);
            (bench.problem, bench.u_star, bench.v_star, inputs)
        }
        Some(path) => {
            let a = io::read_matrix(path)?;
            let weights = p.weights.clone().unwrap_or_else(|| cca::default_weights(p.p));
            let (sigma, us, vs) = top_singular(&a, weights.len().min(a.nrows().min(a.ncols())));
            let problem = SvdProblem::new(a, weights, p.delta, metric)?;
            let inputs = SpectrumInputs::new(sigma[..=problem.p()].to_vec(), problem.mu().to_vec(), p.delta);
            (problem, us, vs, inputs)
        }
    };
    let kappa = if cfg.with_spectrum {
        json!({
            "e": kappa_svd(&inputs, SvdMetric::Euclidean)?,
            "r12": kappa_svd(&inputs, SvdMetric::R12)?,
        })
    } else {
        Value::Null
    };
    let dist = |x: &ProductPoint| vec![cca::subspace_distance(&x.blocks[0], &u_star), cca::subspace_distance(&x.blocks[1], &v_star)];
    let (tables, runs, failed) = repeated(cfg, || {
        let x0 = problem.random_point(&mut start_rng(cfg.seed))?;
        let r = descend(cfg, &problem, &x0, &dist)?;
        let t = trace(&r, &["dist_u", "dist_v"], |q| q.extras.clone());
        let last = &r.last().extras;
        let metrics = json!({ "dist_u": last[0], "dist_v": last[1] });
        Ok((r, t, metrics))
    });
    let summary = summary(cfg, Some(method_name(cfg.method)), Some(metric.to_string()), kappa, runs);
    Ok(Bundle { tables, summary, failed })
}

/// Training set and optional test set, from files or the seeded ground truth.
pub fn trcomp_data(seed: u64, p: &TrcompParams) -> Result<(TrFormat, SamplingSet, Option<SamplingSet>)> {
    match &p.sampling {
        Some(path) => {
            let (header, omega) = io::read_sampling(path)?;
            let format = TrFormat::new(header.dims.clone(), header.ranks.clone())?;
            let test = match &p.test_sampling {
                Some(tp) => {
                    let (th, set) = io::read_sampling(tp)?;
                    if th.dims != header.dims {
                        bail!("problem.test_sampling: dims {:?} differ from training dims {:?}", th.dims, header.dims);
                    }
                    Some(set)
                }
                None => None,
            };
            Ok((format, omega, test))
        }
        None => {
            let format = TrFormat::new(p.dims.clone(), p.ranks.clone())?;
            let mut rng = data_rng(seed);
            let truth = format.random_cores(&mut rng);
            let omega = SamplingSet::sample(&format, &truth, &mut rng, sample_count(&format, p.rate))?;
            let test = if p.test_count > 0 {
                Some(SamplingSet::sample_excluding(&format, &truth, &mut rng, p.test_count, Some(&omega))?)
            } else {
                None
            };
            Ok((format, omega, test))
        }
    }
}

fn run_trcomp(cfg: &Config, p: &TrcompParams) -> Result<Bundle> {
    let (format, omega, test) = trcomp_data(cfg.seed, p)?;
    let problem = TrProblem::new(format, omega, test, p.delta)?;
    let test_err = |x: &ProductPoint| vec![problem.test_error(x).unwrap_or(f64::NAN)];
    let (tables, runs, failed) = repeated(cfg, || {
        let x0 = problem.format().random_cores(&mut start_rng(cfg.seed));
        let r = match cfg.method {
            Method::Gn => gauss_newton_with(&problem, &x0, &cfg.stopping, &cfg.gn, &options(cfg, &test_err))?,
            _ => descend(cfg, &problem, &x0, &test_err)?,
        };
        let t = trace(&r, &["train_err", "test_err"], |q| vec![q.error.unwrap_or(f64::NAN), q.extras[0]]);
        let last = r.last();
        let mut metrics = json!({ "train_err": last.error, "test_err": last.extras[0] });
        if cfg.method == Method::Gn {
            let halvings: f64 = r.records.iter().map(|q| *q.extras.last().unwrap()).sum();
            metrics["step_halvings"] = json!(halvings);
        }
        Ok((r, t, metrics))
    });
    let summary = summary(cfg, Some(method_name(cfg.method)), None, Value::Null, runs);
    Ok(Bundle { tables, summary, failed })
}

fn ellipsoid_problem(p: &EllipsoidParams) -> Result<EllipsoidProblem> {
    let b_mat = match &p.b_matrix {
        Some(rows) => {
            let n = rows.len();
            SpdMatrix::new(DenseMatrix::from_row_iterator(n, n, rows.iter().flatten().copied()))
        }
        None => SpdMatrix::from_diagonal(&p.b_diag),
    }
    .context("problem.b_matrix: B must be symmetric positive definite")?;
    Ok(EllipsoidProblem::new(b_mat, p.b.clone(), p.lambda)?)
}

fn grid(p: &EllipsoidParams) -> Vec<f64> {
    match p.grid {
        None => default_grid(),
        Some([start, stop, step]) => {
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| start + i as f64 * step).collect()
        }
    }
}

fn run_ellipsoid(cfg: &Config, p: &EllipsoidParams) -> Result<Bundle> {
    let problem = ellipsoid_problem(p)?;
    let xs = problem.solution();
    let mut tables = Vec::new();
    let mut sweep_info = Value::Null;
    if p.sweep {
        let sweep = kappa_sweep(&problem, &grid(p));
        let rows = sweep.points.iter().map(|q| vec![q.lambda, q.kappa]).collect();
        tables.push(("ellipsoid_sweep.csv".to_string(), Table { columns: vec!["lambda".into(), "kappa".into()], rows }));
        sweep_info = json!({
            "file": "ellipsoid_sweep.csv",
            "argmin": sweep.argmin().map(|q| json!({ "lambda": q.lambda, "kappa": q.kappa })),
            "skipped": sweep.skipped.iter().map(|(l, why)| json!({ "lambda": l, "reason": why })).collect::<Vec<_>>(),
        });
    }
    let kappa = if cfg.with_spectrum {
        json!({
            "numerical": numerical_spectrum(&problem, &problem.solution_point())?.kappa,
            "rayleigh": rayleigh_kappa(&problem)?,
        })
    } else {
        Value::Null
    };
    let dist = |x: &ProductPoint| vec![(&x.blocks[0] - &xs).norm()];
    let (traces, runs, failed) = repeated(cfg, || {
        let v = rng::symmetric_uniform_matrix(&mut start_rng(cfg.seed), problem.dim(), 1);
        let x0 = ProductPoint::new(vec![problem.normalize(&v)?]);
        let r = descend(cfg, &problem, &x0, &dist)?;
        let t = trace(&r, &["dist_x"], |q| q.extras.clone());
        let metrics = json!({ "dist_x": r.last().extras[0] });
        Ok((r, t, metrics))
    });
    tables.extend(traces);
    let mut summary = summary(cfg, Some(method_name(cfg.method)), Some(format!("lambda={}", p.lambda)), kappa, runs);
    summary["sweep"] = sweep_info;
    Ok(Bundle { tables, summary, failed })
}

fn run_spectrum(cfg: &Config, p: &SpectrumParams) -> Result<Bundle> {
    let inputs = SpectrumInputs::new(p.sigma[..=p.weights.len()].to_vec(), p.weights.clone(), p.delta);
    let kappa = if p.kind == "svd" {
        json!({
            "e": kappa_svd(&inputs, SvdMetric::Euclidean)?,
            "r12": kappa_svd(&inputs, SvdMetric::R12)?,
        })
    } else {
        json!({
            "l12": kappa_cca_l12(&inputs)?,
            "lr12": kappa_cca_lr12(&inputs)?,
            "lr12_adjacent": kappa_cca_lr12_adjacent(&inputs)?,
        })
    };
    let mut summary = summary(cfg, None, None, kappa, Vec::new());
    summary["ordering_holds"] = json!(kappa_ordering_check(&inputs)?);
    Ok(Bundle { tables: Vec::new(), summary, failed: false })
}

/// Writes the input files of a synthetic setup; returns their names.
pub fn generate(cfg: &Config, out: &Path) -> Result<Vec<String>> {
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        std::fs::write(out.join(name), text).with_context(|| format!("writing {}", out.join(name).display()))?;
        written.push(name.to_string());
        Ok(())
    };
    match &cfg.problem {
        ProblemParams::Cca(p) => {
            let (x, y) = cca::synthetic_data(&mut data_rng(cfg.seed), p.n, p.dx, p.dy);
            put("x.txt", io::format_matrix(&x))?;
            put("y.txt", io::format_matrix(&y))?;
        }
        ProblemParams::Tsvd(p) => put("a.txt", io::format_matrix(&tsvd_matrix(cfg.seed, &TsvdParams { matrix: None, ..p.clone() })?))?,
        ProblemParams::Trcomp(p) => {
            let (format, omega, test) = trcomp_data(cfg.seed, &TrcompParams { sampling: None, ..p.clone() })?;
            put("omega.txt", io::format_sampling(&omega, format.ranks())?)?;
            if let Some(t) = test {
                put("test.txt", io::format_sampling(&t, format.ranks())?)?;
            }
        }
        ProblemParams::Ellipsoid(_) | ProblemParams::Spectrum(_) => {
            bail!("generate: {} has no input files", cfg.application)
        }
    }
    Ok(written)
}
