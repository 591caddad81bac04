//! Seeded invariant checks shared by the property suite and the acceptance
//! harness. Each returns `Err` with a diagnostic on violation.

#![allow(dead_code)]

use std::sync::Arc;

use precond::cca::{synthetic_data, CcaMetric, CcaProblem};
use precond::ellipsoid::EllipsoidProblem;
use precond::geometry::{
    metric_inner, metric_norm, project_tangent_general, retract, BlockFactors, ComponentKind, Factor,
    MetricFactors, ProductPoint, TangentVector,
};
use precond::linalg::{lyap_solve, sym, DenseMatrix, SpdMatrix};
use precond::rng::{self, seeded, SeededRng};
use precond::solvers::Problem;
use precond::trcomp::{exact_recovery_instance, gauge_transform, TrFormat};
use precond::tsvd::{SvdBenchmarkSpec, SvdProblem};
use precond::spectrum::SvdMetric;
use rand::Rng;

pub type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn random_spd(rng: &mut SeededRng, n: usize) -> SpdMatrix {
    let a = rng::gaussian_matrix(rng, n, n);
    SpdMatrix::new(a.transpose() * &a / n as f64 + DenseMatrix::identity(n, n) * 0.5).unwrap()
}

fn descending(rng: &mut SeededRng, m: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m).map(|_| 0.5 + 4.0 * rng.random::<f64>()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    for i in 1..m {
        if v[i] >= v[i - 1] - 1e-3 {
            v[i] = v[i - 1] - 0.1;
        }
    }
    v
}

/// One block of every kind with random SPD metric factors.
fn random_manifold(rng: &mut SeededRng) -> (ProductPoint, Vec<ComponentKind>, MetricFactors) {
    let n = rng.random_range(3..7);
    let p = rng.random_range(1..n);
    let sigma = Arc::new(random_spd(rng, n));
    let b = Arc::new(random_spd(rng, n));
    let kinds = vec![
        ComponentKind::Euclidean { rows: n, cols: p },
        ComponentKind::Stiefel { n, p },
        ComponentKind::GeneralizedStiefel { n, p, constraint: sigma },
        ComponentKind::Ellipsoid { b },
    ];
    let raw: Vec<DenseMatrix> = kinds
        .iter()
        .map(|k| {
            let (r, c) = k.shape();
            rng::symmetric_uniform_matrix(rng, r, c)
        })
        .collect();
    let x = precond::geometry::restore_feasibility(ProductPoint::new(raw), &kinds).unwrap();
    let blocks = kinds
        .iter()
        .map(|k| {
            let (r, c) = k.shape();
            BlockFactors::new(Factor::spd(random_spd(rng, r)), Factor::spd(random_spd(rng, c)))
        })
        .collect();
    (x, kinds, MetricFactors { blocks })
}

fn random_ambient(rng: &mut SeededRng, x: &ProductPoint) -> Vec<DenseMatrix> {
    x.blocks.iter().map(|b| rng::symmetric_uniform_matrix(rng, b.nrows(), b.ncols())).collect()
}

fn random_tangent(
    rng: &mut SeededRng,
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
) -> TangentVector {
    project_tangent_general(x, kinds, f, &random_ambient(rng, x)).unwrap()
}

pub fn projection_idempotence(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let (x, kinds, f) = random_manifold(&mut rng);
    let once = random_tangent(&mut rng, &x, &kinds, &f);
    let twice = project_tangent_general(&x, &kinds, &f, &once.blocks).unwrap();
    let err = once.axpy(-1.0, &twice).frobenius_norm();
    ensure(err < 1e-10 * once.frobenius_norm().max(1.0), || format!("‖Π²ξ − Πξ‖ = {err:e}"))?;
    let tan = precond::geometry::tangency_residual(&x, &kinds, &once);
    ensure(tan < 1e-10, || format!("tangency residual {tan:e}"))?;
    // g-orthogonality of the discarded part
    let amb = random_ambient(&mut rng, &x);
    let p = project_tangent_general(&x, &kinds, &f, &amb).unwrap();
    let normal = TangentVector::new(amb).axpy(-1.0, &p);
    let z = random_tangent(&mut rng, &x, &kinds, &f);
    let ip = metric_inner(&f, &normal, &z).unwrap();
    ensure(ip.abs() < 1e-10 * metric_norm(&f, &normal).unwrap().max(1.0), || format!("g(ξ − Πξ, ζ) = {ip:e}"))
}

pub fn lyapunov_residual(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let n = rng.random_range(1..9);
    let m = random_spd(&mut rng, n);
    let c = sym(&rng::symmetric_uniform_matrix(&mut rng, n, n));
    let s = lyap_solve(&m, &c).map_err(|e| e.to_string())?;
    let r = m.solve(&s) + m.solve_right(&s) - &c;
    ensure(r.norm() < 1e-10 * c.norm().max(1.0), || format!("Lyapunov residual {:e}", r.norm()))?;
    ensure((&s - s.transpose()).norm() == 0.0, || "solution not symmetric".into())
}

pub fn retraction_feasibility(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let (x, kinds, f) = random_manifold(&mut rng);
    let eta = random_tangent(&mut rng, &x, &kinds, &f);
    for s in [0.0, 1e-3, 0.5, 1.0, 3.0] {
        let y = retract(&x, &kinds, &eta, s).map_err(|e| e.to_string())?;
        let r = precond::geometry::feasibility_residual(&y, &kinds);
        ensure(r < 1e-10, || format!("feasibility {r:e} at s = {s}"))?;
    }
    let y = retract(&x, &kinds, &eta, 0.0).unwrap();
    ensure(y == x, || "R_x(0) ≠ x".into())
}

pub fn gauge_invariance(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let d = rng.random_range(2..5);
    let dims: Vec<usize> = (0..d).map(|_| rng.random_range(2..4)).collect();
    let ranks: Vec<usize> = (0..d).map(|_| rng.random_range(1..4)).collect();
    let f = TrFormat::new(dims, ranks.clone()).unwrap();
    let x = f.random_cores(&mut rng);
    let gauges: Vec<DenseMatrix> = ranks
        .iter()
        .map(|&r| DenseMatrix::identity(r, r) * 1.5 + rng::symmetric_uniform_matrix(&mut rng, r, r) * 0.4)
        .collect();
    let y = gauge_transform(&f, &x, &gauges).map_err(|e| e.to_string())?;
    let (a, b) = (f.full_tensor(&x), f.full_tensor(&y));
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(&b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
    ensure(err < 1e-10 * scale.max(1.0), || format!("gauge changed entries by {err:e}"))
}

/// Small random instances of every application, with a feasible point.
pub enum Instance {
    Cca(CcaProblem),
    Svd(SvdProblem),
    Tr(precond::trcomp::TrProblem),
    Ellipsoid(EllipsoidProblem),
}

impl Instance {
    pub fn problem(&self) -> &dyn Problem {
        match self {
            Self::Cca(p) => p,
            Self::Svd(p) => p,
            Self::Tr(p) => p,
            Self::Ellipsoid(p) => p,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Cca(p) => format!("cca/{}", p.metric_tag()),
            Self::Svd(p) => format!("tsvd/{}", p.metric_tag()),
            Self::Tr(_) => "trcomp".into(),
            Self::Ellipsoid(p) => format!("ellipsoid/λ={}", p.lambda()),
        }
    }
}

pub fn random_instance(rng: &mut SeededRng, which: usize) -> (Instance, ProductPoint) {
    match which % 4 {
        0 => {
            let (dx, dy) = (rng.random_range(3..8), rng.random_range(3..7));
            let m = rng.random_range(1..dx.min(dy));
            let (x, y) = synthetic_data(rng, 30, dx, dy);
            let tag = CcaMetric::ALL[rng.random_range(0..5)];
            let p = CcaProblem::build_from_data(&x, &y, 1e-3, 1e-3, descending(rng, m), 1e-10, tag).unwrap();
            let pt = p.random_point(rng).unwrap();
            (Instance::Cca(p), pt)
        }
        1 => {
            let (m, n) = (rng.random_range(5..12), rng.random_range(5..10));
            let p = rng.random_range(1..4);
            let spec = SvdBenchmarkSpec { m, n, p, gamma: 0.3 + 0.6 * rng.random::<f64>(), seed: rng.random() };
            let tag = if rng.random::<bool>() { SvdMetric::R12 } else { SvdMetric::Euclidean };
            let b = SvdProblem::build_benchmark(spec, 1e-12, tag).unwrap();
            let a = rng::gaussian_matrix(rng, m, n) * 0.1 + b.problem.a();
            let p = SvdProblem::new(a, b.problem.mu().to_vec(), 1e-12, tag).unwrap();
            let pt = p.random_point(rng).unwrap();
            (Instance::Svd(p), pt)
        }
        2 => {
            let d = 3;
            let f = TrFormat::new(vec![4; d], vec![2; d]).unwrap();
            let inst = exact_recovery_instance(f, 0.5, 0, 1e-8, rng.random()).unwrap();
            (Instance::Tr(inst.problem), inst.start)
        }
        _ => {
            let n = rng.random_range(2..6);
            let b = random_spd(rng, n);
            let bv: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
            let p = EllipsoidProblem::new(b, bv, -0.1 + rng.random::<f64>()).unwrap();
            let pt = ProductPoint::new(vec![p.normalize(&rng::uniform_matrix(rng, n, 1)).unwrap()]);
            (Instance::Ellipsoid(p), pt)
        }
    }
}

pub fn gradient_duality(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let (inst, x) = random_instance(&mut rng, seed as usize);
    let p = inst.problem();
    let f = p.metric(&x).map_err(|e| e.to_string())?;
    let g = p.gradient(&x, &f).map_err(|e| e.to_string())?;
    let d = p.partials(&x);
    let tan = precond::geometry::tangency_residual(&x, p.kinds(), &g);
    ensure(tan < 1e-9 * g.frobenius_norm().max(1.0), || format!("{}: gradient not tangent ({tan:e})", inst.name()))?;
    for _ in 0..3 {
        let z = random_tangent(&mut rng, &x, p.kinds(), &f);
        let lhs = metric_inner(&f, &g, &z).unwrap();
        let rhs: f64 = d.iter().zip(&z.blocks).map(|(a, b)| a.dot(b)).sum();
        let scale = metric_norm(&f, &g).unwrap() * metric_norm(&f, &z).unwrap();
        ensure((lhs - rhs).abs() < 1e-9 * scale.max(1e-12), || {
            format!("{}: g(grad, ζ) = {lhs:e}, Df[ζ] = {rhs:e}", inst.name())
        })?;
    }
    Ok(())
}

/// Central differences of `t ↦ f(R_x(tη))` against `g(grad, η)`.
pub fn fd_gradient(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let (inst, x) = random_instance(&mut rng, seed as usize);
    let p = inst.problem();
    let f = p.metric(&x).map_err(|e| e.to_string())?;
    let g = p.gradient(&x, &f).map_err(|e| e.to_string())?;
    let z = random_tangent(&mut rng, &x, p.kinds(), &f);
    let z = z.scaled(1.0 / metric_norm(&f, &z).unwrap());
    let h = 1e-5;
    let fp = p.cost(&p.retract(&x, &z, h).unwrap());
    let fm = p.cost(&p.retract(&x, &z, -h).unwrap());
    let fd = (fp - fm) / (2.0 * h);
    let an = metric_inner(&f, &g, &z).unwrap();
    let scale = metric_norm(&f, &g).unwrap();
    let rel = (fd - an).abs() / scale.max(1e-300);
    ensure(rel < 1e-6, || format!("{}: fd {fd:e} vs {an:e} (rel {rel:e})", inst.name()))
}

/// At closed-form minimizers the gradient vanishes under every metric.
pub fn criticality_metric_independent(seed: u64) -> Check {
    let mut rng = seeded(seed);
    let (dx, dy) = (rng.random_range(3..8), rng.random_range(3..7));
    let m = rng.random_range(1..dx.min(dy));
    let (xd, yd) = synthetic_data(&mut rng, 30, dx, dy);
    let base = CcaProblem::build_from_data(&xd, &yd, 1e-3, 1e-3, descending(&mut rng, m), 1e-10, CcaMetric::E)
        .unwrap();
    if let Ok(sol) = base.closed_form_solution() {
        for tag in CcaMetric::ALL {
            let g = base.with_metric(tag).riemannian_gradient(&sol.u, &sol.v).map_err(|e| e.to_string())?;
            ensure(g.frobenius_norm() < 1e-8, || format!("cca/{tag}: ‖grad‖ = {:e}", g.frobenius_norm()))?;
        }
    }
    let spec = SvdBenchmarkSpec {
        m: rng.random_range(5..12),
        n: rng.random_range(5..10),
        p: rng.random_range(1..4),
        gamma: 0.3 + 0.6 * rng.random::<f64>(),
        seed: rng.random(),
    };
    let b = SvdProblem::build_benchmark(spec, 1e-12, SvdMetric::Euclidean).unwrap();
    for tag in [SvdMetric::Euclidean, SvdMetric::R12] {
        let g = b.problem.with_metric(tag).riemannian_gradient(&b.u_star, &b.v_star).map_err(|e| e.to_string())?;
        ensure(g.frobenius_norm() < 1e-10, || format!("tsvd/{tag}: ‖grad‖ = {:e}", g.frobenius_norm()))?;
    }
    let n = rng.random_range(2..6);
    let bm = random_spd(&mut rng, n);
    let bv: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    let e = EllipsoidProblem::new(bm, bv, 0.0).unwrap();
    let xs = e.solution();
    for lambda in [-0.1, 0.0, 0.4, 1.0] {
        let g = e.with_lambda(lambda).map_err(|e| e.to_string())?.gradient_at(&xs);
        ensure(g.norm() < 1e-12, || format!("ellipsoid/λ={lambda}: ‖grad‖ = {:e}", g.norm()))?;
    }
    Ok(())
}

pub type Suite = (&'static str, fn(u64) -> Check);

pub const SUITES: [Suite; 7] = [
    ("projection idempotence", projection_idempotence),
    ("gradient duality", gradient_duality),
    ("Lyapunov residuals", lyapunov_residual),
    ("retraction feasibility", retraction_feasibility),
    ("gauge invariance of tr_entry", gauge_invariance),
    ("FD-gradient agreement", fd_gradient),
    ("metric-independence of criticality", criticality_metric_independent),
];
