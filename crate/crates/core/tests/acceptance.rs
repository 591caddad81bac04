//! Acceptance suite. Prints one PASS/FAIL line per check and exits nonzero
//! when a check fails that is not listed in `KNOWN_UNATTAINABLE`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use precond::cca::{self, CcaMetric, CcaProblem};
use precond::ellipsoid::{default_grid, kappa_sweep, EllipsoidProblem};
use precond::geometry::ProductPoint;
use precond::rng::{self, SeededRng};
use precond::solvers::{
    gauss_newton_with, rcg_with, rgd_with, CgParams, GnParams, InitialStep, LineSearchParams, RunOptions, RunReport,
    StoppingCriteria,
};
use precond::spectrum::{
    kappa_cca_l12, kappa_cca_lr12, kappa_svd, numerical_spectrum, SpectrumInputs, SvdMetric,
};
use precond::trcomp::{exact_recovery_instance, TrFormat};
use precond::tsvd::{SvdBenchmarkSpec, SvdProblem};
use rand::Rng;

/// The exact rational for the Euclidean SVD condition number disagrees with
/// the closed-form expression it is meant to evaluate (623295/256) by 2.6e-8
/// relative, so a 1e-12 match is out of reach.
const KNOWN_UNATTAINABLE: &[&str] = &["1a"];

const GNORM_TARGET: f64 = 1e-6;

struct Line {
    id: &'static str,
    pass: bool,
    text: String,
}

#[derive(Default)]
struct Outcome {
    lines: Vec<Line>,
    /// Bit patterns of every number a pipeline produced, for the rerun check.
    bits: Vec<u64>,
}

impl Outcome {
    fn check(&mut self, id: &'static str, pass: bool, text: String) {
        self.lines.push(Line { id, pass, text });
    }

    fn absorb(&mut self, vals: impl IntoIterator<Item = f64>) {
        self.bits.extend(vals.into_iter().map(f64::to_bits));
    }

    fn absorb_report(&mut self, r: &RunReport) {
        for rec in &r.records {
            self.absorb([rec.cost, rec.gnorm, rec.stepsize, rec.time_s, rec.error.unwrap_or(f64::NAN)]);
            self.absorb(rec.extras.iter().copied());
        }
        self.absorb_point(&r.final_point);
        self.bits.push(r.iterations() as u64);
    }

    fn absorb_point(&mut self, x: &ProductPoint) {
        for b in &x.blocks {
            self.absorb(b.iter().copied());
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn quiet() -> RunOptions<'static> {
    RunOptions { record_time: false, ..RunOptions::default() }
}

/// Index of the first record with gradient norm below the target.
fn first_below(r: &RunReport, tol: f64) -> Option<usize> {
    r.records.iter().position(|q| q.gnorm < tol)
}

fn show(n: Option<usize>) -> String {
    n.map_or_else(|| "never".to_string(), |k| k.to_string())
}

/// `a` strictly fewer than `b`, a run that never gets there counting as infinite.
fn fewer(a: Option<usize>, b: Option<usize>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    }
}

fn svd_reference_inputs() -> SpectrumInputs {
    let spec = SvdBenchmarkSpec { m: 120, n: 80, p: 10, gamma: 1.0 / 1.5, seed: 7 };
    SpectrumInputs::new(spec.spectrum(), spec.weights(), 1e-15)
}

fn criterion1() -> Outcome {
    let mut out = Outcome::default();
    let inputs = svd_reference_inputs();
    let ke = kappa_svd(&inputs, SvdMetric::Euclidean).unwrap();
    let kr = kappa_svd(&inputs, SvdMetric::R12).unwrap();
    let ke_ref = 153389.0 / 63.0;
    out.check("1a", rel(ke, ke_ref) < 1e-12, format!("kappa_svd(E) = {ke:.10} vs 153389/63, rel {:.2e} (tol 1e-12)", rel(ke, ke_ref)));
    out.check("1b", rel(kr, 95.0) < 1e-12, format!("kappa_svd(R12) = {kr:.15} vs 95, rel {:.2e} (tol 1e-12)", rel(kr, 95.0)));

    let spec = SvdBenchmarkSpec { m: 120, n: 80, p: 10, gamma: 1.0 / 1.5, seed: 7 };
    let bench = SvdProblem::build_benchmark(spec, 1e-15, SvdMetric::Euclidean).unwrap();
    let x = bench.solution();
    for (id, metric, want) in [("1c", SvdMetric::Euclidean, ke_ref), ("1d", SvdMetric::R12, 95.0)] {
        let rep = numerical_spectrum(&bench.problem.with_metric(metric), &x).unwrap();
        out.absorb(rep.eigenvalues.iter().copied());
        out.check(
            id,
            rel(rep.kappa, want) < 1e-4,
            format!("numerical kappa({metric}) = {:.6} vs {want:.6}, rel {:.2e} (tol 1e-4)", rep.kappa, rel(rep.kappa, want)),
        );
    }
    out.absorb([ke, kr]);
    out
}

fn random_inputs(rng: &mut SeededRng, m: usize) -> SpectrumInputs {
    let mut sigma: Vec<f64> = (0..=m).map(|_| rng.random::<f64>()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let mut mu: Vec<f64> = (0..m).map(|_| 0.1 + 10.0 * rng.random::<f64>()).collect();
    mu.sort_by(|a, b| b.total_cmp(a));
    SpectrumInputs::new(sigma, mu, 1e-12)
}

/// Both formulas often select the same extreme pair, so ties land within a
/// few ulps of each other.
const ORDER_SLACK: f64 = 1e-15;

fn criterion2() -> Outcome {
    let mut out = Outcome::default();
    let mut rng = rng::seeded(2);
    let (mut cca_ok, mut svd_ok) = (0, 0);
    let (mut cca_excess, mut svd_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for i in 0..200 {
        let inputs = random_inputs(&mut rng, 2 + i % 5);
        let l12 = kappa_cca_l12(&inputs).unwrap();
        let lr12 = kappa_cca_lr12(&inputs).unwrap();
        let e = kappa_svd(&inputs, SvdMetric::Euclidean).unwrap();
        let r12 = kappa_svd(&inputs, SvdMetric::R12).unwrap();
        cca_excess = cca_excess.max((lr12 - l12) / l12);
        svd_excess = svd_excess.max((r12 - e) / e);
        cca_ok += usize::from(lr12 <= l12 * (1.0 + ORDER_SLACK));
        svd_ok += usize::from(r12 <= e * (1.0 + ORDER_SLACK));
        out.absorb([l12, lr12, e, r12]);
    }
    out.check(
        "2a",
        cca_ok == 200,
        format!("kappa_lr12 <= kappa_l12 on {cca_ok}/200 spectra, max relative excess {cca_excess:.2e} (slack 1e-15)"),
    );
    out.check(
        "2b",
        svd_ok == 200,
        format!("kappa_svd(R12) <= kappa_svd(E) on {svd_ok}/200 spectra, max relative excess {svd_excess:.2e} (slack 1e-15)"),
    );
    out
}

fn criterion3() -> Outcome {
    let mut out = Outcome::default();
    let mut rng = rng::seeded(3);
    let sigma = [0.9, 0.7, 0.55, 0.4, 0.25, 0.1];
    let problem = CcaProblem::with_whitened_spectrum(&mut rng, 60, 40, &sigma, vec![3.0, 2.0, 1.0], 1e-15, CcaMetric::L12)
        .unwrap();
    let sol = problem.closed_form_solution().unwrap();
    let inputs = problem.spectrum_inputs(&sol);
    let x = sol.point();
    for (id, metric) in [("3a", CcaMetric::L12), ("3b", CcaMetric::Lr12)] {
        let want = match metric {
            CcaMetric::L12 => kappa_cca_l12(&inputs),
            _ => kappa_cca_lr12(&inputs),
        }
        .unwrap();
        let rep = numerical_spectrum(&problem.with_metric(metric), &x).unwrap();
        out.absorb(rep.eigenvalues.iter().copied());
        out.check(
            id,
            rel(rep.kappa, want) < 1e-3,
            format!("numerical kappa({metric}) = {:.6} vs formula {want:.6}, rel {:.2e} (tol 1e-3)", rep.kappa, rel(rep.kappa, want)),
        );
    }
    out
}

fn criterion4() -> Outcome {
    let mut out = Outcome::default();
    let spec = SvdBenchmarkSpec { m: 200, n: 100, p: 10, gamma: 1.0 / 1.5, seed: 7 };
    let bench = SvdProblem::build_benchmark(spec, 1e-15, SvdMetric::Euclidean).unwrap();
    let ls = LineSearchParams::standard();
    let stop = StoppingCriteria { max_iters: 50_000, ..StoppingCriteria::standard() };
    let cg = CgParams::default();
    let interp = RunOptions { initial_step: InitialStep::Interpolated, ..quiet() };
    let mut hits = Vec::new();
    for solver in ["RGD", "RCG"] {
        let mut pair = Vec::new();
        for metric in [SvdMetric::Euclidean, SvdMetric::R12] {
            let problem = bench.problem.with_metric(metric);
            let r = match solver {
                "RGD" => rgd_with(&problem, &bench.start, &ls, &stop, &quiet()),
                _ => rcg_with(&problem, &bench.start, &ls, &stop, &cg, &interp),
            }
            .unwrap();
            out.absorb_report(&r);
            pair.push((metric, first_below(&r, GNORM_TARGET), r));
        }
        hits.push((solver, pair));
    }
    for (solver, pair) in &hits {
        let (e, r12) = (pair[0].1, pair[1].1);
        let id = if *solver == "RGD" { "4a" } else { "4b" };
        out.check(id, fewer(r12, e), format!("{solver} iterations to gnorm < 1e-6: R12 {} vs E {}", show(r12), show(e)));
    }
    for (solver, pair) in &hits {
        let x = &pair[1].2.final_point;
        let du = cca::subspace_distance(&x.blocks[0], &bench.u_star);
        let dv = cca::subspace_distance(&x.blocks[1], &bench.v_star);
        let id = if *solver == "RGD" { "4c" } else { "4d" };
        out.check(id, du < 1e-5 && dv < 1e-5, format!("{solver}(R12) final D(U,U*) = {du:.2e}, D(V,V*) = {dv:.2e} (tol 1e-5)"));
    }
    out
}

fn criterion5() -> Outcome {
    let mut out = Outcome::default();
    let (base, start) =
        cca::synthetic_instance(2024, 2000, 120, 80, (1e-6, 1e-6), cca::default_weights(5), 1e-15, CcaMetric::Lr12).unwrap();
    let sol = base.closed_form_solution().unwrap();
    let ls = LineSearchParams::standard();
    let stop = StoppingCriteria::standard();
    let opts = RunOptions { initial_step: InitialStep::Interpolated, ..quiet() };
    let mut hit = Vec::new();
    let mut reasons = Vec::new();
    for metric in [CcaMetric::Lr12, CcaMetric::L12, CcaMetric::E] {
        let r = rcg_with(&base.with_metric(metric), &start, &ls, &stop, &CgParams::default(), &opts).unwrap();
        out.absorb_report(&r);
        hit.push(first_below(&r, GNORM_TARGET));
        reasons.push(format!("{metric}: {} after {}", r.termination, r.iterations()));
        if metric == CcaMetric::Lr12 {
            let du = cca::subspace_distance(&r.final_point.blocks[0], &sol.u);
            let dv = cca::subspace_distance(&r.final_point.blocks[1], &sol.v);
            out.check("5b", du < 1e-4 && dv < 1e-4, format!("RCG(LR12) final D(U,U*) = {du:.2e}, D(V,V*) = {dv:.2e} (tol 1e-4)"));
        }
    }
    out.check(
        "5a",
        fewer(hit[0], hit[1]) && fewer(hit[1], hit[2]),
        format!(
            "RCG iterations to gnorm < 1e-6: LR12 {} < L12 {} < E {} [{}]",
            show(hit[0]),
            show(hit[1]),
            show(hit[2]),
            reasons.join("; ")
        ),
    );
    out.lines.rotate_left(1);
    out
}

fn criterion6() -> Outcome {
    let mut out = Outcome::default();
    let format = TrFormat::new(vec![20; 3], vec![3; 3]).unwrap();
    let inst = exact_recovery_instance(format, 0.3, 2000, 1e-15, 6).unwrap();
    let gn_stop = StoppingCriteria { gnorm_tol: 0.0, max_iters: 30, cost_tol: 1e-10, ..StoppingCriteria::standard() };
    let gn_params = GnParams { max_halvings: 0, ..GnParams::default() };
    let gn = gauss_newton_with(&inst.problem, &inst.start, &gn_stop, &gn_params, &quiet()).unwrap();
    out.absorb_report(&gn);
    let errs: Vec<f64> = gn.records.iter().map(|q| q.error.unwrap()).collect();
    let hit = errs.iter().position(|&e| e < 1e-10);
    let test_err = inst.problem.test_error(&gn.final_point).unwrap();
    out.check(
        "6a",
        hit.is_some_and(|k| k <= 30),
        format!("TR-GN training error < 1e-10 at iteration {} (limit 30), test error {test_err:.2e}", show(hit)),
    );
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    let superlinear = tail.len() == 3 && tail[0] > tail[1] && tail[1] > tail[2];
    out.check("6b", superlinear, format!("TR-GN last residual ratios {:.2e}, {:.2e}, {:.2e} strictly decreasing", tail[0], tail[1], tail[2]));

    let rgd_stop = StoppingCriteria { cost_tol: 1e-8, ..StoppingCriteria::tensor_ring() };
    let rgd = rgd_with(&inst.problem, &inst.start, &LineSearchParams::tensor_ring(), &rgd_stop, &quiet()).unwrap();
    out.absorb_report(&rgd);
    let gn8 = errs.iter().position(|&e| e < 1e-8);
    let rgd8 = rgd.records.iter().position(|q| q.error.unwrap() < 1e-8);
    out.check(
        "6c",
        fewer(gn8, rgd8),
        format!("iterations to training error < 1e-8: TR-GN {} vs TR-RGD {} ({})", show(gn8), show(rgd8), rgd.termination),
    );
    out
}

fn criterion7() -> Outcome {
    let mut out = Outcome::default();
    let p = EllipsoidProblem::figure_instance(0.0).unwrap();
    let sweep = kappa_sweep(&p, &default_grid());
    out.absorb(sweep.points.iter().map(|q| q.kappa));
    let k0 = sweep.points.iter().find(|q| q.lambda == 0.0).map_or(f64::NAN, |q| q.kappa);
    out.check("7a", (k0 - 1.0).abs() < 1e-6, format!("kappa(0) = {k0:.12} (tol 1e-6)"));
    let am = sweep.argmin().unwrap();
    out.check(
        "7b",
        am.lambda == 0.0,
        format!("sweep argmin at lambda = {} over {} points, {} skipped", am.lambda, sweep.points.len(), sweep.skipped.len()),
    );

    let xs = p.solution();
    let mut rng = rng::seeded(7);
    let x0 = ProductPoint::new(vec![p.normalize(&rng::symmetric_uniform_matrix(&mut rng, 3, 1)).unwrap()]);
    let dist = |x: &ProductPoint| vec![(&x.blocks[0] - &xs).norm()];
    let opts = RunOptions { monitor: Some(&dist), ..quiet() };
    let stop = StoppingCriteria { gnorm_tol: 1e-13, max_iters: 5000, ..StoppingCriteria::standard() };
    let mut hit = Vec::new();
    for lambda in [0.0, 1.0] {
        let r = rgd_with(&p.with_lambda(lambda).unwrap(), &x0, &LineSearchParams::standard(), &stop, &opts).unwrap();
        out.absorb_report(&r);
        hit.push(r.records.iter().position(|q| q.extras[0] < 1e-8));
    }
    out.check("7c", fewer(hit[0], hit[1]), format!("RGD iterations to |x - x*| < 1e-8: g0 {} vs Euclidean {}", show(hit[0]), show(hit[1])));
    out
}

fn criterion8() -> Outcome {
    let mut out = Outcome::default();
    let ids = ["8a", "8b", "8c", "8d", "8e", "8f", "8g"];
    for (id, (name, check)) in ids.into_iter().zip(common::SUITES) {
        let failures: Vec<String> = (0..50).filter_map(|s| check(s).err().map(|e| format!("seed {s}: {e}"))).collect();
        let text = match failures.first() {
            None => format!("{name}: 50/50 seeded cases"),
            Some(f) => format!("{name}: {}/50 seeded cases, first failure {f}", 50 - failures.len()),
        };
        out.check(id, failures.is_empty(), text);
    }
    out
}

type Pipeline = (&'static str, fn() -> Outcome);

const PIPELINES: [Pipeline; 8] = [
    ("1", criterion1),
    ("2", criterion2),
    ("3", criterion3),
    ("4", criterion4),
    ("5", criterion5),
    ("6", criterion6),
    ("7", criterion7),
    ("8", criterion8),
];

fn main() -> ExitCode {
    let mut all = Vec::new();
    let mut first_bits = Vec::new();
    for (name, run) in PIPELINES {
        let t = Instant::now();
        let out = run();
        let secs = t.elapsed().as_secs_f64();
        for l in &out.lines {
            println!("{} [{}] {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.text);
        }
        println!("     criterion {name} took {secs:.1} s");
        first_bits.push(out.bits);
        all.extend(out.lines);
    }

    // Second invocation of every pipeline; timing is off, so traces must match bit for bit.
    let t = Instant::now();
    let mut differing = Vec::new();
    for ((name, run), bits) in PIPELINES.iter().zip(&first_bits) {
        if run().bits != *bits {
            differing.push(*name);
        }
    }
    let text = if differing.is_empty() {
        format!("criteria 1-8 rerun bit-identical ({} values)", first_bits.iter().map(Vec::len).sum::<usize>())
    } else {
        format!("criteria {} differ on rerun", differing.join(", "))
    };
    let det = Line { id: "9", pass: differing.is_empty(), text };
    println!("{} [9] {}", if det.pass { "PASS" } else { "FAIL" }, det.text);
    println!("     criterion 9 took {:.1} s", t.elapsed().as_secs_f64());
    all.push(det);

    let unexpected: Vec<&str> = all.iter().filter(|l| !l.pass && !KNOWN_UNATTAINABLE.contains(&l.id)).map(|l| l.id).collect();
    let known: Vec<&str> = all.iter().filter(|l| !l.pass && KNOWN_UNATTAINABLE.contains(&l.id)).map(|l| l.id).collect();
    let passed = all.iter().filter(|l| l.pass).count();
    println!("acceptance: {passed}/{} checks passed; known unattainable failing: {known:?}", all.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}");
        ExitCode::FAILURE
    }
}
