//! Product manifolds with per-block metrics `g(ξ, η) = Σ_k ⟨ξ_k, L_k η_k R_k⟩`.
//!
//! Components are Euclidean spaces, (generalized) Stiefel manifolds
//! `{X : XᵀΣX = I}` and ellipsoids `{x : xᵀBx = 1}`. Tangent projections are
//! orthogonal in the supplied metric; vector transport is projection.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, frob_inner, lyap_solve, qf, sym, DenseMatrix, SpdMatrix};

/// Drift beyond which [`restore_feasibility`] re-normalizes a point.
pub const RESTORE_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub blocks: Vec<DenseMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub blocks: Vec<DenseMatrix>,
}

impl ProductPoint {
    pub fn new(blocks: Vec<DenseMatrix>) -> Self {
        Self { blocks }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }
}

impl TangentVector {
    pub fn new(blocks: Vec<DenseMatrix>) -> Self {
        Self { blocks }
    }

    pub fn zeros_like(x: &ProductPoint) -> Self {
        Self {
            blocks: x.blocks.iter().map(|b| DenseMatrix::zeros(b.nrows(), b.ncols())).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * a).collect() }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &TangentVector) -> Self {
        Self {
            blocks: self.blocks.iter().zip(&other.blocks).map(|(x, y)| x + y * a).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub enum ComponentKind {
    Euclidean { rows: usize, cols: usize },
    Stiefel { n: usize, p: usize },
    GeneralizedStiefel { n: usize, p: usize, constraint: Arc<SpdMatrix> },
    Ellipsoid { b: Arc<SpdMatrix> },
}

impl ComponentKind {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Euclidean { rows, cols } => (*rows, *cols),
            Self::Stiefel { n, p } | Self::GeneralizedStiefel { n, p, .. } => (*n, *p),
            Self::Ellipsoid { b } => (b.dim(), 1),
        }
    }

    /// Dimension of the tangent space.
    pub fn dimension(&self) -> usize {
        match self {
            Self::Euclidean { rows, cols } => rows * cols,
            Self::Stiefel { n, p } | Self::GeneralizedStiefel { n, p, .. } => n * p - p * (p + 1) / 2,
            Self::Ellipsoid { b } => b.dim() - 1,
        }
    }

    /// `Σ` for Stiefel-type blocks, `B` for ellipsoids.
    fn constraint(&self) -> Option<&SpdMatrix> {
        match self {
            Self::GeneralizedStiefel { constraint, .. } => Some(constraint),
            Self::Ellipsoid { b } => Some(b),
            _ => None,
        }
    }

    fn apply_constraint(&self, x: &DenseMatrix) -> DenseMatrix {
        match self.constraint() {
            Some(c) => c.matrix() * x,
            None => x.clone(),
        }
    }

    pub fn feasibility_residual(&self, x: &DenseMatrix) -> f64 {
        match self {
            Self::Euclidean { .. } => 0.0,
            Self::Stiefel { p, .. } | Self::GeneralizedStiefel { p, .. } => {
                let g = x.transpose() * self.apply_constraint(x);
                (g - DenseMatrix::identity(*p, *p)).norm()
            }
            Self::Ellipsoid { b } => ((x.transpose() * b.matrix() * x)[(0, 0)] - 1.0).abs(),
        }
    }

    pub fn tangency_residual(&self, x: &DenseMatrix, eta: &DenseMatrix) -> f64 {
        match self {
            Self::Euclidean { .. } => 0.0,
            Self::Stiefel { .. } | Self::GeneralizedStiefel { .. } => {
                sym(&(x.transpose() * self.apply_constraint(eta))).norm()
            }
            Self::Ellipsoid { b } => (x.transpose() * b.matrix() * eta)[(0, 0)].abs(),
        }
    }

    /// A spanning set of the tangent space at `x` (not orthonormal).
    pub fn tangent_spanning_set(&self, x: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        let (n, p) = self.shape();
        let mut out = Vec::with_capacity(self.dimension());
        match self {
            Self::Euclidean { .. } => {
                for j in 0..p {
                    for i in 0..n {
                        let mut e = DenseMatrix::zeros(n, p);
                        e[(i, j)] = 1.0;
                        out.push(e);
                    }
                }
            }
            Self::Stiefel { .. } | Self::GeneralizedStiefel { .. } => {
                for j in 0..p {
                    for i in 0..j {
                        let mut om = DenseMatrix::zeros(p, p);
                        om[(i, j)] = 1.0;
                        om[(j, i)] = -1.0;
                        out.push(x * om);
                    }
                }
                let perp = orthogonal_complement(&self.apply_constraint(x))?;
                for j in 0..p {
                    for c in 0..perp.ncols() {
                        let mut e = DenseMatrix::zeros(n, p);
                        e.set_column(j, &perp.column(c));
                        out.push(e);
                    }
                }
            }
            Self::Ellipsoid { .. } => {
                let perp = orthogonal_complement(&self.apply_constraint(x))?;
                for c in 0..perp.ncols() {
                    out.push(perp.columns(c, 1).into_owned());
                }
            }
        }
        Ok(out)
    }
}

/// Orthonormal basis of the Euclidean orthogonal complement of `range(A)`.
fn orthogonal_complement(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let q = qf(a)?;
    let proj = DenseMatrix::identity(n, n) - &q * q.transpose();
    let (vals, vecs) = linalg::sym_eig(&proj)?;
    let k = n - a.ncols();
    // Eigenvalues of the complement projector are 0 (p times) then 1.
    debug_assert!(vals.iter().skip(n - k).all(|v| (v - 1.0).abs() < 1e-8));
    Ok(vecs.columns(n - k, k).into_owned())
}

/// One side of a metric block: identity or an SPD matrix.
#[derive(Clone, Debug)]
pub enum Factor {
    Identity,
    Spd(Arc<SpdMatrix>),
}

impl Factor {
    pub fn spd(s: SpdMatrix) -> Self {
        Self::Spd(Arc::new(s))
    }

    pub fn matrix(&self, n: usize) -> DenseMatrix {
        match self {
            Self::Identity => DenseMatrix::identity(n, n),
            Self::Spd(s) => s.matrix().clone(),
        }
    }

    /// `F·X`.
    pub fn left_mul(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Identity => x.clone(),
            Self::Spd(s) => s.matrix() * x,
        }
    }

    /// `X·F`.
    pub fn right_mul(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Identity => x.clone(),
            Self::Spd(s) => x * s.matrix(),
        }
    }

    /// `F⁻¹X`.
    pub fn left_solve(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Identity => x.clone(),
            Self::Spd(s) => s.solve(x),
        }
    }

    /// `X F⁻¹`.
    pub fn right_solve(&self, x: &DenseMatrix) -> DenseMatrix {
        match self {
            Self::Identity => x.clone(),
            Self::Spd(s) => s.solve_right(x),
        }
    }

    fn as_spd(&self, n: usize) -> SpdMatrix {
        match self {
            Self::Identity => SpdMatrix::identity(n),
            Self::Spd(s) => (**s).clone(),
        }
    }

    /// Whether this factor equals `target` (`None` meaning the identity).
    fn matches(&self, target: Option<&SpdMatrix>) -> bool {
        match (self, target) {
            (Self::Identity, None) => true,
            (Self::Spd(s), Some(t)) if std::ptr::eq(&**s, t) => true,
            (f, t) => {
                let n = match (f, t) {
                    (_, Some(t)) => t.dim(),
                    (Self::Spd(s), None) => s.dim(),
                    (Self::Identity, _) => return false,
                };
                let fm = f.matrix(n);
                let tm = t.map_or_else(|| DenseMatrix::identity(n, n), |t| t.matrix().clone());
                (&fm - &tm).norm() <= 1e-12 * tm.norm()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockFactors {
    pub left: Factor,
    pub right: Factor,
}

impl BlockFactors {
    pub fn identity() -> Self {
        Self { left: Factor::Identity, right: Factor::Identity }
    }

    pub fn new(left: Factor, right: Factor) -> Self {
        Self { left, right }
    }
}

#[derive(Clone, Debug)]
pub struct MetricFactors {
    pub blocks: Vec<BlockFactors>,
}

impl MetricFactors {
    pub fn identity(k: usize) -> Self {
        Self { blocks: vec![BlockFactors::identity(); k] }
    }
}

fn check_conform(kinds: &[ComponentKind], f: &MetricFactors, blocks: &[DenseMatrix]) -> Result<()> {
    if kinds.len() != blocks.len() || f.blocks.len() != blocks.len() {
        return Err(Error::Shape(format!(
            "{} kinds, {} factor blocks, {} blocks",
            kinds.len(),
            f.blocks.len(),
            blocks.len()
        )));
    }
    for (k, (kind, b)) in kinds.iter().zip(blocks).enumerate() {
        if kind.shape() != b.shape() {
            return Err(Error::Shape(format!(
                "block {k}: expected {:?}, got {:?}",
                kind.shape(),
                b.shape()
            )));
        }
    }
    Ok(())
}

/// `Σ_k L_k η_k R_k`, block by block.
pub fn apply_metric(f: &MetricFactors, eta: &[DenseMatrix]) -> Vec<DenseMatrix> {
    eta.iter()
        .zip(&f.blocks)
        .map(|(e, bf)| bf.right.right_mul(&bf.left.left_mul(e)))
        .collect()
}

pub fn metric_inner(f: &MetricFactors, xi: &TangentVector, eta: &TangentVector) -> Result<f64> {
    if xi.blocks.len() != eta.blocks.len() || f.blocks.len() != eta.blocks.len() {
        return Err(Error::Shape("metric_inner: block counts differ".into()));
    }
    let mut s = 0.0;
    for ((a, b), bf) in xi.blocks.iter().zip(&eta.blocks).zip(&f.blocks) {
        if a.shape() != b.shape() {
            return Err(Error::Shape(format!("metric_inner: {:?} vs {:?}", a.shape(), b.shape())));
        }
        s += frob_inner(a, &bf.right.right_mul(&bf.left.left_mul(b)));
    }
    Ok(s)
}

pub fn metric_norm(f: &MetricFactors, eta: &TangentVector) -> Result<f64> {
    Ok(metric_inner(f, eta, eta)?.max(0.0).sqrt())
}

/// Tangent projection in the closed form valid when, on every Stiefel-type
/// block, the left factor equals the constraint matrix.
pub fn project_tangent(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
    ambient: &[DenseMatrix],
) -> Result<TangentVector> {
    project_impl(x, kinds, f, ambient, true)
}

/// Metric-orthogonal tangent projection for arbitrary SPD factors. Agrees with
/// [`project_tangent`] whenever the latter applies.
pub fn project_tangent_general(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
    ambient: &[DenseMatrix],
) -> Result<TangentVector> {
    project_impl(x, kinds, f, ambient, false)
}

fn project_impl(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
    ambient: &[DenseMatrix],
    strict: bool,
) -> Result<TangentVector> {
    check_conform(kinds, f, &x.blocks)?;
    check_conform(kinds, f, ambient)?;
    let mut out = Vec::with_capacity(ambient.len());
    for (k, kind) in kinds.iter().enumerate() {
        let xk = &x.blocks[k];
        let eb = &ambient[k];
        let bf = &f.blocks[k];
        let eta = match kind {
            ComponentKind::Euclidean { .. } => eb.clone(),
            ComponentKind::Ellipsoid { b } => {
                // Normal direction under g is L⁻¹Bx.
                let bx = b.matrix() * xk;
                let nrm = bf.left.left_solve(&bx);
                let num = (bx.transpose() * eb)[(0, 0)];
                let den = (bx.transpose() * &nrm)[(0, 0)];
                eb - nrm * (num / den)
            }
            ComponentKind::Stiefel { p, .. } | ComponentKind::GeneralizedStiefel { p, .. } => {
                let cons = kind.constraint();
                let sx = kind.apply_constraint(xk);
                let rhs = sym(&(sx.transpose() * eb)) * 2.0;
                let r = bf.right.as_spd(*p);
                if bf.left.matches(cons) {
                    let s = lyap_solve(&r, &rhs)?;
                    eb - bf.right.right_solve(&(xk * s))
                } else if strict {
                    return Err(Error::FactorMismatch);
                } else {
                    let lsx = bf.left.left_solve(&sx);
                    let g = sx.transpose() * &lsx;
                    let rinv = r.inverse();
                    let s = sym_sylvester(&g, &rinv, &rhs)?;
                    eb - bf.right.right_solve(&(lsx * s))
                }
            }
        };
        out.push(eta);
    }
    Ok(TangentVector::new(out))
}

/// Solves `G S P + P S G = C` for symmetric `S`, with `G`, `P` SPD, through
/// the Kronecker form `(P ⊗ G + G ⊗ P) vec S = vec C`.
fn sym_sylvester(g: &DenseMatrix, p: &DenseMatrix, c: &DenseMatrix) -> Result<DenseMatrix> {
    let m = g.nrows();
    let g = sym(g);
    let p = sym(p);
    let k = p.kronecker(&g) + g.kronecker(&p);
    let chol = nalgebra::Cholesky::new(sym(&k)).ok_or(Error::NotPositiveDefinite)?;
    let v = chol.solve(&DVector::from_column_slice(c.as_slice()));
    Ok(sym(&DenseMatrix::from_column_slice(m, m, v.as_slice())))
}

fn precondition(f: &MetricFactors, partials: &[DenseMatrix]) -> Vec<DenseMatrix> {
    partials
        .iter()
        .zip(&f.blocks)
        .map(|(d, bf)| bf.right.right_solve(&bf.left.left_solve(d)))
        .collect()
}

/// Riemannian gradient `Π(L⁻¹ ∂f R⁻¹)` using the closed-form projection.
pub fn egrad_to_rgrad(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
    partials: &[DenseMatrix],
) -> Result<TangentVector> {
    check_conform(kinds, f, partials)?;
    project_tangent(x, kinds, f, &precondition(f, partials))
}

/// As [`egrad_to_rgrad`] but valid for arbitrary factors.
pub fn egrad_to_rgrad_general(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    f: &MetricFactors,
    partials: &[DenseMatrix],
) -> Result<TangentVector> {
    check_conform(kinds, f, partials)?;
    project_tangent_general(x, kinds, f, &precondition(f, partials))
}

fn retract_block(kind: &ComponentKind, y: DenseMatrix) -> Result<DenseMatrix> {
    match kind {
        ComponentKind::Euclidean { .. } => Ok(y),
        ComponentKind::Stiefel { .. } => qf(&y).map_err(|_| Error::RetractionRank),
        ComponentKind::GeneralizedStiefel { constraint, .. } => {
            let gram = y.transpose() * constraint.matrix() * &y;
            let r = linalg::chol(&gram).map_err(|_| Error::RetractionRank)?;
            // Y R⁻¹ = (R⁻ᵀ Yᵀ)ᵀ
            let z = r
                .transpose()
                .solve_lower_triangular(&y.transpose())
                .ok_or(Error::RetractionRank)?;
            Ok(z.transpose())
        }
        ComponentKind::Ellipsoid { b } => {
            let q = (y.transpose() * b.matrix() * &y)[(0, 0)];
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::RetractionRank);
            }
            Ok(y / q.sqrt())
        }
    }
}

/// `R_x(sη)`: qf for Stiefel, Cholesky normalization for generalized
/// Stiefel, polar normalization for ellipsoids, addition for Euclidean blocks.
pub fn retract(
    x: &ProductPoint,
    kinds: &[ComponentKind],
    eta: &TangentVector,
    s: f64,
) -> Result<ProductPoint> {
    if kinds.len() != x.blocks.len() || eta.blocks.len() != x.blocks.len() {
        return Err(Error::Shape("retract: block counts differ".into()));
    }
    if s == 0.0 {
        return Ok(x.clone());
    }
    let mut out = Vec::with_capacity(x.blocks.len());
    for ((kind, xk), ek) in kinds.iter().zip(&x.blocks).zip(&eta.blocks) {
        if xk.shape() != ek.shape() {
            return Err(Error::Shape(format!("retract: {:?} vs {:?}", xk.shape(), ek.shape())));
        }
        let y = xk + ek * s;
        linalg::check_finite(&y).map_err(|_| Error::RetractionRank)?;
        out.push(retract_block(kind, y)?);
    }
    Ok(ProductPoint::new(out))
}

/// Transport by projection onto the tangent space at `x_new`.
pub fn transport(
    x_new: &ProductPoint,
    kinds: &[ComponentKind],
    f_new: &MetricFactors,
    eta: &TangentVector,
) -> Result<TangentVector> {
    project_tangent_general(x_new, kinds, f_new, &eta.blocks)
}

/// Largest constraint residual over the blocks.
pub fn feasibility_residual(x: &ProductPoint, kinds: &[ComponentKind]) -> f64 {
    kinds
        .iter()
        .zip(&x.blocks)
        .map(|(k, b)| k.feasibility_residual(b))
        .fold(0.0, f64::max)
}

/// Largest tangency residual over the blocks.
pub fn tangency_residual(x: &ProductPoint, kinds: &[ComponentKind], eta: &TangentVector) -> f64 {
    kinds
        .iter()
        .zip(x.blocks.iter().zip(&eta.blocks))
        .map(|(k, (xb, eb))| k.tangency_residual(xb, eb))
        .fold(0.0, f64::max)
}

/// Re-normalizes blocks whose constraint residual exceeds
/// [`RESTORE_THRESHOLD`]. Returns the point unchanged otherwise.
pub fn restore_feasibility(x: ProductPoint, kinds: &[ComponentKind]) -> Result<ProductPoint> {
    if feasibility_residual(&x, kinds) <= RESTORE_THRESHOLD {
        return Ok(x);
    }
    let blocks = kinds
        .iter()
        .zip(x.blocks)
        .map(|(k, b)| {
            if k.feasibility_residual(&b) > RESTORE_THRESHOLD {
                retract_block(k, b)
            } else {
                Ok(b)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProductPoint::new(blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, symmetric_uniform_matrix, SeededRng};

    fn rand_spd(rng: &mut SeededRng, n: usize) -> SpdMatrix {
        let g = symmetric_uniform_matrix(rng, n, n);
        SpdMatrix::new(g.transpose() * &g + DenseMatrix::identity(n, n) * 0.5).unwrap()
    }

    fn gs_point(rng: &mut SeededRng, sigma: &SpdMatrix, p: usize) -> DenseMatrix {
        let y = symmetric_uniform_matrix(rng, sigma.dim(), p);
        retract_block(
            &ComponentKind::GeneralizedStiefel { n: sigma.dim(), p, constraint: Arc::new(sigma.clone()) },
            y,
        )
        .unwrap()
    }

    #[test]
    fn metric_inner_small() {
        let x = TangentVector::new(vec![DenseMatrix::from_element(2, 2, 1.5)]);
        let f = MetricFactors::identity(1);
        assert!((metric_inner(&f, &x, &x).unwrap() - 9.0).abs() < 1e-15);
        let l = Factor::spd(SpdMatrix::from_diagonal(&[2.0]).unwrap());
        let f = MetricFactors { blocks: vec![BlockFactors::new(l, Factor::Identity)] };
        let e = TangentVector::new(vec![DenseMatrix::from_element(1, 1, 3.0)]);
        assert!((metric_inner(&f, &e, &e).unwrap() - 18.0).abs() < 1e-15);
    }

    #[test]
    fn stiefel_projection_reduces_to_classical() {
        let mut rng = seeded(11);
        let x = qf(&symmetric_uniform_matrix(&mut rng, 6, 3)).unwrap();
        let eb = symmetric_uniform_matrix(&mut rng, 6, 3);
        let kinds = [ComponentKind::Stiefel { n: 6, p: 3 }];
        let pt = ProductPoint::new(vec![x.clone()]);
        let eta = project_tangent(&pt, &kinds, &MetricFactors::identity(1), std::slice::from_ref(&eb)).unwrap();
        let want = &eb - &x * sym(&(x.transpose() * &eb));
        assert!((&eta.blocks[0] - want).norm() < 1e-13);
    }

    #[test]
    fn strict_projection_rejects_mismatched_factor() {
        let mut rng = seeded(12);
        let sigma = Arc::new(rand_spd(&mut rng, 5));
        let x = gs_point(&mut rng, &sigma, 2);
        let kinds = [ComponentKind::GeneralizedStiefel { n: 5, p: 2, constraint: sigma }];
        let pt = ProductPoint::new(vec![x]);
        let r = project_tangent(&pt, &kinds, &MetricFactors::identity(1), &[DenseMatrix::zeros(5, 2)]);
        assert_eq!(r, Err(Error::FactorMismatch));
    }

    #[test]
    fn general_projection_matches_closed_form() {
        let mut rng = seeded(13);
        let sigma = Arc::new(rand_spd(&mut rng, 6));
        let x = gs_point(&mut rng, &sigma, 3);
        let kinds = [ComponentKind::GeneralizedStiefel { n: 6, p: 3, constraint: sigma.clone() }];
        let r = rand_spd(&mut rng, 3);
        let f = MetricFactors {
            blocks: vec![BlockFactors::new(Factor::Spd(sigma.clone()), Factor::spd(r))],
        };
        let pt = ProductPoint::new(vec![x]);
        let eb = symmetric_uniform_matrix(&mut rng, 6, 3);
        let a = project_tangent(&pt, &kinds, &f, std::slice::from_ref(&eb)).unwrap();
        let b = {
            // Force the normal-equation path with an equal but distinct factor.
            let l = Factor::spd((*sigma).clone());
            let mut f2 = f.clone();
            f2.blocks[0].left = l;
            project_impl(&pt, &kinds, &f2, &[eb], false).unwrap()
        };
        assert!((&a.blocks[0] - &b.blocks[0]).norm() < 1e-12);
    }

    #[test]
    fn retract_zero_step_is_identity() {
        let mut rng = seeded(14);
        let x = qf(&symmetric_uniform_matrix(&mut rng, 5, 2)).unwrap();
        let pt = ProductPoint::new(vec![x]);
        let kinds = [ComponentKind::Stiefel { n: 5, p: 2 }];
        let eta = TangentVector::new(vec![symmetric_uniform_matrix(&mut rng, 5, 2)]);
        assert_eq!(retract(&pt, &kinds, &eta, 0.0).unwrap(), pt);
        let padded = DenseMatrix::identity(3, 2);
        let pt = ProductPoint::new(vec![padded.clone()]);
        let z = TangentVector::zeros_like(&pt);
        let out = retract(&pt, &[ComponentKind::Stiefel { n: 3, p: 2 }], &z, 1.0).unwrap();
        assert_eq!(out.blocks[0], padded);
    }

    #[test]
    fn generalized_retraction_matches_whitened_qf() {
        let mut rng = seeded(15);
        let sigma = Arc::new(rand_spd(&mut rng, 6));
        let x = gs_point(&mut rng, &sigma, 2);
        let kind = ComponentKind::GeneralizedStiefel { n: 6, p: 2, constraint: sigma.clone() };
        let f = MetricFactors { blocks: vec![BlockFactors::new(Factor::Spd(sigma.clone()), Factor::Identity)] };
        let pt = ProductPoint::new(vec![x.clone()]);
        let eb = symmetric_uniform_matrix(&mut rng, 6, 2);
        let eta = project_tangent(&pt, std::slice::from_ref(&kind), &f, &[eb]).unwrap();
        let y = retract(&pt, std::slice::from_ref(&kind), &eta, 0.7).unwrap();
        assert!(kind.feasibility_residual(&y.blocks[0]) < 1e-10);
        let half = linalg::sym_fn(sigma.matrix(), f64::sqrt).unwrap();
        let ihalf = linalg::sym_fn(sigma.matrix(), |v| 1.0 / v.sqrt()).unwrap();
        let whitened = ihalf * qf(&(&half * (&x + &eta.blocks[0] * 0.7))).unwrap();
        assert!((&y.blocks[0] - whitened).norm() < 1e-10);
    }

    #[test]
    fn ellipsoid_spanning_set_is_tangent() {
        let b = Arc::new(SpdMatrix::from_diagonal(&[4.0, 9.0, 1.0]).unwrap());
        let kind = ComponentKind::Ellipsoid { b: b.clone() };
        let x = DenseMatrix::from_column_slice(3, 1, &[0.5, 0.0, 0.0]);
        let set = kind.tangent_spanning_set(&x).unwrap();
        assert_eq!(set.len(), 2);
        for v in set {
            assert!(kind.tangency_residual(&x, &v) < 1e-14);
        }
    }

    #[test]
    fn restore_renormalizes_drifted_blocks() {
        let x = DenseMatrix::identity(4, 2) * (1.0 + 1e-6);
        let kinds = [ComponentKind::Stiefel { n: 4, p: 2 }];
        let out = restore_feasibility(ProductPoint::new(vec![x]), &kinds).unwrap();
        assert!(feasibility_residual(&out, &kinds) < 1e-14);
    }
}
