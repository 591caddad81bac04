//! Tensor-ring completion: sampled evaluation, the block-diagonal
//! preconditioned metric for first-order methods, and the Gauss-Newton
//! least-squares system.
//!
//! Core `k` is stored as `W_k ∈ R^{n_k × r_{k−1}r_k}`; its slice `U_k(i)` is
//! row `i` reshaped column-major, `U_k(i)[a, b] = W_k[i, a + b·r_{k−1}]`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BlockFactors, ComponentKind, Factor, MetricFactors, ProductPoint};
use crate::linalg::{DenseMatrix, SpdMatrix};
use crate::rng::{self, SeededRng};
use crate::solvers::{Problem, ResidualProblem};

/// Mode sizes and ring ranks. `ranks[k]` is the right rank of core `k`; the
/// left rank of core 0 is `ranks[d − 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrFormat {
    dims: Vec<usize>,
    ranks: Vec<usize>,
}

impl TrFormat {
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.len() != ranks.len() {
            return Err(Error::Shape(format!("{} dims but {} ranks", dims.len(), ranks.len())));
        }
        if dims.iter().chain(&ranks).any(|&v| v == 0) {
            return Err(Error::Invalid("dims and ranks must be positive".into()));
        }
        Ok(Self { dims, ranks })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn left(&self, k: usize) -> usize {
        self.ranks[(k + self.order() - 1) % self.order()]
    }

    pub fn right(&self, k: usize) -> usize {
        self.ranks[k]
    }

    pub fn core_shape(&self, k: usize) -> (usize, usize) {
        (self.dims[k], self.left(k) * self.right(k))
    }

    pub fn num_params(&self) -> usize {
        (0..self.order()).map(|k| self.core_shape(k).0 * self.core_shape(k).1).sum()
    }

    pub fn num_entries(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn kinds(&self) -> Vec<ComponentKind> {
        (0..self.order())
            .map(|k| {
                let (rows, cols) = self.core_shape(k);
                ComponentKind::Euclidean { rows, cols }
            })
            .collect()
    }

    /// Cores with entries uniform on [0, 1), core by core.
    pub fn random_cores(&self, rng: &mut SeededRng) -> ProductPoint {
        ProductPoint::new(
            (0..self.order())
                .map(|k| {
                    let (r, c) = self.core_shape(k);
                    rng::uniform_matrix(rng, r, c)
                })
                .collect(),
        )
    }

    pub fn check_cores(&self, cores: &ProductPoint) -> Result<()> {
        if cores.blocks.len() != self.order() {
            return Err(Error::Shape(format!("{} cores for order {}", cores.blocks.len(), self.order())));
        }
        for (k, w) in cores.blocks.iter().enumerate() {
            if w.shape() != self.core_shape(k) {
                return Err(Error::Shape(format!("core {k} is {:?}, expected {:?}", w.shape(), self.core_shape(k))));
            }
        }
        Ok(())
    }

    /// Row-major linear index, so sorted linear indices are lexicographic.
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        let mut out = vec![0; self.order()];
        for k in (0..self.order()).rev() {
            out[k] = lin % self.dims[k];
            lin /= self.dims[k];
        }
        out
    }

    /// All entries in lexicographic order; small instances only.
    pub fn full_tensor(&self, cores: &ProductPoint) -> Vec<f64> {
        let sl = Slices::new(self, cores);
        (0..self.num_entries()).map(|l| sl.entry(&self.multi_index(l))).collect()
    }
}

/// Contiguous column-major copies of every slice `U_k(i)`.
struct Slices<'a> {
    format: &'a TrFormat,
    data: Vec<Vec<f64>>,
}

fn matmul(a: &[f64], ar: usize, ac: usize, b: &[f64], bc: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(ar * bc, 0.0);
    for j in 0..bc {
        for l in 0..ac {
            let blj = b[l + j * ac];
            if blj != 0.0 {
                for i in 0..ar {
                    out[i + j * ar] += a[i + l * ar] * blj;
                }
            }
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * (n + 1)] = 1.0;
    }
    v
}

impl<'a> Slices<'a> {
    fn new(format: &'a TrFormat, cores: &ProductPoint) -> Self {
        let data = cores
            .blocks
            .iter()
            .map(|w| {
                let mut v = Vec::with_capacity(w.len());
                for i in 0..w.nrows() {
                    v.extend(w.row(i).iter());
                }
                v
            })
            .collect();
        Self { format, data }
    }

    fn slice(&self, k: usize, i: usize) -> &[f64] {
        let len = self.format.left(k) * self.format.right(k);
        &self.data[k][i * len..(i + 1) * len]
    }

    fn entry(&self, idx: &[usize]) -> f64 {
        let f = self.format;
        let r0 = f.left(0);
        let mut run = self.slice(0, idx[0]).to_vec();
        let mut tmp = Vec::new();
        for (k, &i) in idx.iter().enumerate().skip(1) {
            matmul(&run, r0, f.left(k), self.slice(k, i), f.right(k), &mut tmp);
            std::mem::swap(&mut run, &mut tmp);
        }
        (0..r0).map(|i| run[i * (r0 + 1)]).sum()
    }

    /// `Q_k = U_{k+1}⋯U_{d−1} · U_0⋯U_{k−1}` (r_k × r_{k−1}) for every `k`,
    /// so that the entry equals `tr(U_k(i_k) Q_k)`.
    fn complements(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        let f = self.format;
        let d = f.order();
        let r0 = f.left(0);
        let mut pre = Vec::with_capacity(d);
        pre.push(identity(r0));
        for k in 0..d - 1 {
            let mut next = Vec::new();
            matmul(&pre[k], r0, f.left(k), self.slice(k, idx[k]), f.right(k), &mut next);
            pre.push(next);
        }
        let mut suf = vec![Vec::new(); d];
        suf[d - 1] = identity(r0);
        for k in (0..d - 1).rev() {
            let mut next = Vec::new();
            matmul(self.slice(k + 1, idx[k + 1]), f.right(k), f.right(k + 1), &suf[k + 1], r0, &mut next);
            suf[k] = next;
        }
        (0..d)
            .map(|k| {
                let mut q = Vec::new();
                matmul(&suf[k], f.right(k), r0, &pre[k], f.left(k), &mut q);
                q
            })
            .collect()
    }
}

/// Writes `vec(Q_kᵀ)` in the column layout of `W_k`: position `a + b·r_{k−1}`
/// holds `Q_k[b, a]`.
fn weight_row(q: &[f64], left: usize, right: usize, out: &mut [f64]) {
    for b in 0..right {
        for a in 0..left {
            out[a + b * left] = q[b + a * right];
        }
    }
}

pub fn tr_entry(format: &TrFormat, cores: &ProductPoint, idx: &[usize]) -> f64 {
    Slices::new(format, cores).entry(idx)
}

/// Observed multi-indices in lexicographic order with aligned values.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingSet {
    dims: Vec<usize>,
    indices: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl SamplingSet {
    /// Sorts, rejects duplicates and out-of-range indices.
    pub fn new(dims: Vec<usize>, entries: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let mut entries = entries;
        for (idx, _) in &entries {
            if idx.len() != dims.len() || idx.iter().zip(&dims).any(|(&i, &n)| i >= n) {
                return Err(Error::Invalid(format!("index {idx:?} out of range for dims {dims:?}")));
            }
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("duplicate index in sampling set".into()));
        }
        let (indices, values) = entries.into_iter().unzip();
        Ok(Self { dims, indices, values })
    }

    /// `count` distinct positions drawn uniformly, valued by `cores`.
    pub fn sample(format: &TrFormat, cores: &ProductPoint, rng: &mut SeededRng, count: usize) -> Result<Self> {
        Self::sample_excluding(format, cores, rng, count, None)
    }

    /// As [`SamplingSet::sample`], restricted to positions outside `exclude`.
    pub fn sample_excluding(
        format: &TrFormat,
        cores: &ProductPoint,
        rng: &mut SeededRng,
        count: usize,
        exclude: Option<&SamplingSet>,
    ) -> Result<Self> {
        format.check_cores(cores)?;
        let total = format.num_entries();
        let pool: Option<Vec<usize>> = exclude.map(|ex| {
            let taken: std::collections::BTreeSet<usize> = ex.indices.iter().map(|i| format.linear_index(i)).collect();
            (0..total).filter(|l| !taken.contains(l)).collect()
        });
        let avail = pool.as_ref().map_or(total, Vec::len);
        if count > avail {
            return Err(Error::Invalid(format!("cannot draw {count} samples from {avail} positions")));
        }
        let picks = rng::sample_without_replacement(rng, avail, count);
        let sl = Slices::new(format, cores);
        let entries = picks
            .into_iter()
            .map(|p| {
                let lin = pool.as_ref().map_or(p, |v| v[p]);
                let idx = format.multi_index(lin);
                let val = sl.entry(&idx);
                (idx, val)
            })
            .collect();
        Self::new(format.dims.clone(), entries)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn indices(&self) -> &[Vec<usize>] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `|Ω| / Π n_k`.
    pub fn rate(&self) -> f64 {
        self.len() as f64 / self.dims.iter().product::<usize>() as f64
    }
}

/// `round(p · Π n_k)`.
pub fn sample_count(format: &TrFormat, rate: f64) -> usize {
    (rate * format.num_entries() as f64).round() as usize
}

/// `τ(W) − A` on the sampled positions.
pub fn sampled_residual(format: &TrFormat, cores: &ProductPoint, omega: &SamplingSet) -> Vec<f64> {
    let sl = Slices::new(format, cores);
    omega
        .indices
        .par_iter()
        .zip(omega.values.par_iter())
        .map(|(idx, a)| sl.entry(idx) - a)
        .collect()
}

/// `(f, S)` with `f = ‖S‖²/(2p)`.
pub fn cost_and_residual(format: &TrFormat, cores: &ProductPoint, omega: &SamplingSet) -> (f64, Vec<f64>) {
    let s = sampled_residual(format, cores, omega);
    let f = s.iter().map(|v| v * v).sum::<f64>() / (2.0 * omega.rate());
    (f, s)
}

pub fn euclidean_partials(
    format: &TrFormat,
    cores: &ProductPoint,
    omega: &SamplingSet,
    residual: &[f64],
) -> Vec<DenseMatrix> {
    let sl = Slices::new(format, cores);
    let p = omega.rate();
    let mut out: Vec<DenseMatrix> = (0..format.order())
        .map(|k| {
            let (r, c) = format.core_shape(k);
            DenseMatrix::zeros(r, c)
        })
        .collect();
    let mut row = Vec::new();
    for (idx, &s) in omega.indices.iter().zip(residual) {
        if s == 0.0 {
            continue;
        }
        for (k, q) in sl.complements(idx).iter().enumerate() {
            let (l, r) = (format.left(k), format.right(k));
            row.resize(l * r, 0.0);
            weight_row(q, l, r, &mut row);
            for (c, w) in row.iter().enumerate() {
                out[k][(idx[k], c)] += w * s / p;
            }
        }
    }
    out
}

/// `R_k = W_{≠k}ᵀW_{≠k} + δI`, `W_{≠k}` materialized over every index of the
/// other modes.
pub fn tr_metric_factors(format: &TrFormat, cores: &ProductPoint, delta: f64) -> Result<MetricFactors> {
    if !(delta > 0.0) {
        return Err(Error::Invalid("delta must be positive".into()));
    }
    let sl = Slices::new(format, cores);
    let d = format.order();
    let total = format.num_entries();
    let mut blocks = Vec::with_capacity(d);
    for k in 0..d {
        let (l, r) = (format.left(k), format.right(k));
        let rr = l * r;
        let mut gram = DenseMatrix::identity(rr, rr) * delta;
        let mut row = vec![0.0; rr];
        // one representative index per fiber: i_k = 0
        for lin in 0..total {
            let idx = format.multi_index(lin);
            if idx[k] != 0 {
                continue;
            }
            let q = &sl.complements(&idx)[k];
            weight_row(q, l, r, &mut row);
            for a in 0..rr {
                for b in 0..rr {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        blocks.push(BlockFactors::new(Factor::Identity, Factor::spd(SpdMatrix::new(gram)?)));
    }
    Ok(MetricFactors { blocks })
}

/// Dense `(J, −F)` with rows per sample, scaled by `1/√p`.
pub fn assemble_gn_system(
    format: &TrFormat,
    cores: &ProductPoint,
    omega: &SamplingSet,
    residual: &[f64],
) -> (DenseMatrix, DVector<f64>) {
    let sl = Slices::new(format, cores);
    let scale = 1.0 / omega.rate().sqrt();
    let offsets = block_offsets(format);
    let mut j = DenseMatrix::zeros(omega.len(), format.num_params());
    let mut row = Vec::new();
    for (w, idx) in omega.indices.iter().enumerate() {
        for (k, q) in sl.complements(idx).iter().enumerate() {
            let (l, r) = (format.left(k), format.right(k));
            row.resize(l * r, 0.0);
            weight_row(q, l, r, &mut row);
            let base = offsets[k] + idx[k] * l * r;
            for (c, v) in row.iter().enumerate() {
                j[(w, base + c)] = v * scale;
            }
        }
    }
    let rhs = DVector::from_iterator(residual.len(), residual.iter().map(|s| -s * scale));
    (j, rhs)
}

fn block_offsets(format: &TrFormat) -> Vec<usize> {
    let mut o = 0;
    (0..format.order())
        .map(|k| {
            let start = o;
            let (r, c) = format.core_shape(k);
            o += r * c;
            start
        })
        .collect()
}

fn relative_error(format: &TrFormat, cores: &ProductPoint, set: &SamplingSet) -> Result<f64> {
    let denom = set.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if denom == 0.0 {
        return Err(Error::Invalid("observed values are all zero".into()));
    }
    let s = sampled_residual(format, cores, set);
    Ok(s.iter().map(|v| v * v).sum::<f64>().sqrt() / denom)
}

/// `(ε_Ω, ε_Γ)`, relative errors on the training and test sets.
pub fn training_test_errors(
    format: &TrFormat,
    cores: &ProductPoint,
    omega: &SamplingSet,
    gamma: &SamplingSet,
) -> Result<(f64, f64)> {
    Ok((relative_error(format, cores, omega)?, relative_error(format, cores, gamma)?))
}

/// Completion from samples, usable by the first-order solvers (under the
/// block-diagonal metric) and by Gauss-Newton.
#[derive(Clone, Debug)]
pub struct TrProblem {
    format: TrFormat,
    omega: SamplingSet,
    test: Option<SamplingSet>,
    delta: f64,
    kinds: Vec<ComponentKind>,
}

impl TrProblem {
    pub fn new(format: TrFormat, omega: SamplingSet, test: Option<SamplingSet>, delta: f64) -> Result<Self> {
        for set in std::iter::once(&omega).chain(test.as_ref()) {
            if set.dims != format.dims {
                return Err(Error::Shape(format!("sampling dims {:?} vs format {:?}", set.dims, format.dims)));
            }
        }
        if omega.is_empty() {
            return Err(Error::Invalid("empty sampling set".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::Invalid("delta must be positive".into()));
        }
        let kinds = format.kinds();
        Ok(Self { format, omega, test, delta, kinds })
    }

    pub fn format(&self) -> &TrFormat {
        &self.format
    }

    pub fn omega(&self) -> &SamplingSet {
        &self.omega
    }

    pub fn test_set(&self) -> Option<&SamplingSet> {
        self.test.as_ref()
    }

    pub fn training_error(&self, cores: &ProductPoint) -> f64 {
        relative_error(&self.format, cores, &self.omega).unwrap_or(f64::NAN)
    }

    pub fn test_error(&self, cores: &ProductPoint) -> Option<f64> {
        self.test.as_ref().map(|g| relative_error(&self.format, cores, g).unwrap_or(f64::NAN))
    }

    pub fn gn_system(&self, cores: &ProductPoint) -> (DenseMatrix, DVector<f64>) {
        let s = sampled_residual(&self.format, cores, &self.omega);
        assemble_gn_system(&self.format, cores, &self.omega, &s)
    }
}

impl Problem for TrProblem {
    fn kinds(&self) -> &[ComponentKind] {
        &self.kinds
    }

    fn cost(&self, x: &ProductPoint) -> f64 {
        cost_and_residual(&self.format, x, &self.omega).0
    }

    fn partials(&self, x: &ProductPoint) -> Vec<DenseMatrix> {
        let s = sampled_residual(&self.format, x, &self.omega);
        euclidean_partials(&self.format, x, &self.omega, &s)
    }

    fn metric(&self, x: &ProductPoint) -> Result<MetricFactors> {
        tr_metric_factors(&self.format, x, self.delta)
    }

    fn gradient(&self, x: &ProductPoint, f: &MetricFactors) -> Result<crate::geometry::TangentVector> {
        let blocks = self
            .partials(x)
            .iter()
            .zip(&f.blocks)
            .map(|(d, bf)| bf.right.right_solve(d))
            .collect();
        Ok(crate::geometry::TangentVector::new(blocks))
    }

    fn error_measure(&self, x: &ProductPoint) -> Option<f64> {
        Some(self.training_error(x))
    }
}

impl ResidualProblem for TrProblem {
    fn residual(&self, x: &ProductPoint) -> DVector<f64> {
        let scale = 1.0 / self.omega.rate().sqrt();
        let s = sampled_residual(&self.format, x, &self.omega);
        DVector::from_iterator(s.len(), s.into_iter().map(|v| v * scale))
    }

    fn jacobian(&self, x: &ProductPoint) -> DenseMatrix {
        self.gn_system(x).0
    }

    /// Accumulates `JᵀJ` and `JᵀF` row by row from the sparse rows.
    fn normal_equations(&self, x: &ProductPoint) -> (DenseMatrix, DVector<f64>) {
        let f = &self.format;
        let sl = Slices::new(f, x);
        let scale = 1.0 / self.omega.rate().sqrt();
        let offsets = block_offsets(f);
        let np = f.num_params();
        let mut jtj = DenseMatrix::zeros(np, np);
        let mut jtf = DVector::zeros(np);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut row = Vec::new();
        for (idx, a) in self.omega.indices.iter().zip(&self.omega.values) {
            cols.clear();
            vals.clear();
            for (k, q) in sl.complements(idx).iter().enumerate() {
                let (l, r) = (f.left(k), f.right(k));
                row.resize(l * r, 0.0);
                weight_row(q, l, r, &mut row);
                let base = offsets[k] + idx[k] * l * r;
                for (c, v) in row.iter().enumerate() {
                    cols.push(base + c);
                    vals.push(v * scale);
                }
            }
            let fv = (sl.entry(idx) - a) * scale;
            for (s, &cs) in cols.iter().enumerate() {
                jtf[cs] += vals[s] * fv;
                for (t, &ct) in cols.iter().enumerate() {
                    jtj[(cs, ct)] += vals[s] * vals[t];
                }
            }
        }
        (jtj, jtf)
    }

    fn error_measure(&self, x: &ProductPoint) -> Option<f64> {
        Some(self.training_error(x))
    }
}

/// Exact-recovery instance: ground-truth cores, training set of rate `p`,
/// disjoint test set of `test_count` positions, and a random start.
pub struct TrInstance {
    pub problem: TrProblem,
    pub truth: ProductPoint,
    pub start: ProductPoint,
}

pub fn exact_recovery_instance(
    format: TrFormat,
    rate: f64,
    test_count: usize,
    delta: f64,
    seed: u64,
) -> Result<TrInstance> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Invalid(format!("sampling rate must lie in (0, 1], got {rate}")));
    }
    let mut rng = rng::seeded(seed);
    let truth = format.random_cores(&mut rng);
    let omega = SamplingSet::sample(&format, &truth, &mut rng, sample_count(&format, rate))?;
    let test = if test_count > 0 {
        Some(SamplingSet::sample_excluding(&format, &truth, &mut rng, test_count, Some(&omega))?)
    } else {
        None
    };
    let start = format.random_cores(&mut rng);
    let problem = TrProblem::new(format, omega, test, delta)?;
    Ok(TrInstance { problem, truth, start })
}

/// `U_k(i) → G_{k−1}⁻¹ U_k(i) G_k` with `gauges[k]` of size `r_k`.
pub fn gauge_transform(format: &TrFormat, cores: &ProductPoint, gauges: &[DenseMatrix]) -> Result<ProductPoint> {
    let d = format.order();
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        let (l, r) = (format.left(k), format.right(k));
        let gl = &gauges[(k + d - 1) % d];
        let gl_inv = gl.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let gr = &gauges[k];
        let w = &cores.blocks[k];
        let mut nw = DenseMatrix::zeros(w.nrows(), w.ncols());
        for i in 0..w.nrows() {
            let u = DenseMatrix::from_fn(l, r, |a, b| w[(i, a + b * l)]);
            let v = &gl_inv * u * gr;
            for b in 0..r {
                for a in 0..l {
                    nw[(i, a + b * l)] = v[(a, b)];
                }
            }
        }
        out.push(nw);
    }
    Ok(ProductPoint::new(out))
}
