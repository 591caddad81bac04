//! Experiment configuration: a TOML file with `[problem]`, `[solver]`,
//! `[linesearch]` and `[stopping]` sections. Every field has a default, so an
//! empty file runs the desk-scale setup of its application.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use precond::cca::CcaMetric;
use precond::solvers::{BetaRule, CgParams, GnParams, InitialStep, LineSearchParams, StoppingCriteria};
use precond::spectrum::SvdMetric;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Application {
    Cca,
    Tsvd,
    Trcomp,
    Ellipsoid,
    Spectrum,
}

impl Application {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cca => "cca",
            Self::Tsvd => "tsvd",
            Self::Trcomp => "trcomp",
            Self::Ellipsoid => "ellipsoid",
            Self::Spectrum => "spectrum",
        }
    }
}

impl fmt::Display for Application {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Application {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cca" => Self::Cca,
            "tsvd" => Self::Tsvd,
            "trcomp" => Self::Trcomp,
            "ellipsoid" => Self::Ellipsoid,
            "spectrum" => Self::Spectrum,
            _ => bail!("unknown application '{s}'"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rgd,
    Rcg,
    Gn,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub application: Option<Application>,
    pub seed: Option<u64>,
    pub repeat: Option<usize>,
    pub record_timing: Option<bool>,
    pub with_spectrum: Option<bool>,
    pub problem: Option<toml::Table>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub linesearch: LineSearchSection,
    #[serde(default)]
    pub stopping: StoppingSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Option<Method>,
    /// `fr`, `prp+` or `hs+`.
    pub beta: Option<String>,
    pub restart: Option<bool>,
    pub damping: Option<f64>,
    pub max_halvings: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchSection {
    pub s0: Option<f64>,
    pub rho: Option<f64>,
    pub a: Option<f64>,
    pub max_backtracks: Option<usize>,
    /// `fixed`, `warm` or `interpolated`.
    pub initial_step: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingSection {
    pub gnorm_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub rel_change_tol: Option<f64>,
    pub min_stepsize: Option<f64>,
    pub cost_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcaParams {
    pub dx: usize,
    pub dy: usize,
    pub n: usize,
    pub m: usize,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub delta: f64,
    pub metric: String,
    /// Defaults to `(m, …, 1)`.
    pub weights: Option<Vec<f64>>,
    /// Data matrix files; both or neither.
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
}

impl Default for CcaParams {
    fn default() -> Self {
        Self {
            dx: 120,
            dy: 80,
            n: 2000,
            m: 5,
            lambda_x: 1e-6,
            lambda_y: 1e-6,
            delta: 1e-15,
            metric: "lr12".into(),
            weights: None,
            x: None,
            y: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsvdParams {
    pub m: usize,
    pub n: usize,
    pub p: usize,
    pub gamma: f64,
    pub delta: f64,
    pub metric: String,
    pub weights: Option<Vec<f64>>,
    /// Matrix file replacing the benchmark construction.
    pub matrix: Option<PathBuf>,
}

impl Default for TsvdParams {
    fn default() -> Self {
        Self { m: 200, n: 100, p: 10, gamma: 1.0 / 1.5, delta: 1e-15, metric: "r12".into(), weights: None, matrix: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrcompParams {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub rate: f64,
    pub test_count: usize,
    pub delta: f64,
    /// Training entries; replaces the synthetic ground truth.
    pub sampling: Option<PathBuf>,
    pub test_sampling: Option<PathBuf>,
}

impl Default for TrcompParams {
    fn default() -> Self {
        Self { dims: vec![20; 3], ranks: vec![3; 3], rate: 0.3, test_count: 1000, delta: 1e-15, sampling: None, test_sampling: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidParams {
    /// Diagonal of `B`; ignored when `b_matrix` is given.
    pub b_diag: Vec<f64>,
    pub b_matrix: Option<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub sweep: bool,
    /// `[start, stop, step]`; the default grid otherwise.
    pub grid: Option<[f64; 3]>,
}

impl Default for EllipsoidParams {
    fn default() -> Self {
        Self { b_diag: vec![4.0, 9.0, 1.0], b_matrix: None, b: vec![1.0; 3], lambda: 0.0, sweep: true, grid: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumParams {
    /// `cca` or `svd`.
    pub kind: String,
    pub sigma: Vec<f64>,
    pub weights: Vec<f64>,
    pub delta: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        let sigma = (0..10).map(|i| (1.0f64 / 1.5).powi(i)).chain([0.0]).collect();
        Self { kind: "svd".into(), sigma, weights: (1..=10).rev().map(f64::from).collect(), delta: 1e-15 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ProblemParams {
    Cca(CcaParams),
    Tsvd(TsvdParams),
    Trcomp(TrcompParams),
    Ellipsoid(EllipsoidParams),
    Spectrum(SpectrumParams),
}

/// Validated configuration.
#[derive(Clone, Debug)]
pub struct Config {
    pub application: Application,
    pub seed: u64,
    pub repeat: usize,
    pub record_timing: bool,
    pub with_spectrum: bool,
    pub problem: ProblemParams,
    pub method: Method,
    pub cg: CgParams,
    pub gn: GnParams,
    pub linesearch: LineSearchParams,
    pub initial_step: InitialStep,
    pub stopping: StoppingCriteria,
}

/// Problem table merged over the application defaults.
fn section<T: DeserializeOwned + Serialize + Default>(table: Option<&toml::Table>) -> Result<T> {
    let mut merged = toml::Table::try_from(T::default())?;
    for (k, v) in table.into_iter().flatten() {
        merged.insert(k.clone(), v.clone());
    }
    toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| anyhow::anyhow!("problem: {}", e.message()))
}

fn parse_beta(s: &str) -> Result<BetaRule> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "fr" => BetaRule::FletcherReeves,
        "prp+" => BetaRule::PolakRibierePlus,
        "hs+" => BetaRule::HestenesStiefelPlus,
        _ => bail!("solver.beta: unknown rule '{s}' (expected fr, prp+, hs+)"),
    })
}

pub fn parse_initial_step(s: &str) -> Result<InitialStep> {
    Ok(match s {
        "fixed" => InitialStep::Fixed,
        "warm" => InitialStep::WarmStart,
        "interpolated" => InitialStep::Interpolated,
        _ => bail!("linesearch.initial_step: unknown value '{s}' (expected fixed, warm, interpolated)"),
    })
}

fn positive(path: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{path}: must be positive, got {v}");
    }
    Ok(())
}

fn nonneg(path: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        bail!("{path}: must be nonnegative, got {v}");
    }
    Ok(())
}

fn check_weights(path: &str, w: &[f64], m: usize) -> Result<()> {
    if w.len() != m {
        bail!("{path}: expected {m} weights, got {}", w.len());
    }
    if !w.windows(2).all(|p| p[0] > p[1]) || w.iter().any(|&v| !(v > 0.0)) {
        bail!("{path}: weights must be positive and strictly decreasing");
    }
    Ok(())
}

impl ProblemParams {
    fn parse(app: Application, table: Option<&toml::Table>) -> Result<Self> {
        Ok(match app {
            Application::Cca => Self::Cca(section(table)?),
            Application::Tsvd => Self::Tsvd(section(table)?),
            Application::Trcomp => Self::Trcomp(section(table)?),
            Application::Ellipsoid => Self::Ellipsoid(section(table)?),
            Application::Spectrum => Self::Spectrum(section(table)?),
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Cca(p) => {
                CcaMetric::from_str(&p.metric).map_err(|e| anyhow::anyhow!("problem.metric: {e}"))?;
                if p.x.is_some() != p.y.is_some() {
                    bail!("problem.x, problem.y: give both data files or neither");
                }
                if p.x.is_none() {
                    if p.m == 0 || p.m > p.dx.min(p.dy) {
                        bail!("problem.m: must lie in 1..=min(dx, dy), got {}", p.m);
                    }
                    if p.n < 2 {
                        bail!("problem.n: need at least 2 samples");
                    }
                }
                positive("problem.lambda_x", p.lambda_x)?;
                positive("problem.lambda_y", p.lambda_y)?;
                positive("problem.delta", p.delta)?;
                if let Some(w) = &p.weights {
                    check_weights("problem.weights", w, p.m)?;
                }
            }
            Self::Tsvd(p) => {
                SvdMetric::from_str(&p.metric).map_err(|e| anyhow::anyhow!("problem.metric: {e}"))?;
                if p.matrix.is_none() && (p.p == 0 || p.p >= p.m.min(p.n)) {
                    bail!("problem.p: must lie in 1..min(m, n), got {}", p.p);
                }
                if !(p.gamma > 0.0 && p.gamma < 1.0) {
                    bail!("problem.gamma: must lie in (0, 1), got {}", p.gamma);
                }
                positive("problem.delta", p.delta)?;
                if let Some(w) = &p.weights {
                    check_weights("problem.weights", w, p.p)?;
                }
            }
            Self::Trcomp(p) => {
                if p.sampling.is_none() {
                    if p.dims.is_empty() || p.dims.contains(&0) {
                        bail!("problem.dims: need at least one positive mode size");
                    }
                    if p.ranks.len() != p.dims.len() || p.ranks.contains(&0) {
                        bail!("problem.ranks: need one positive rank per mode");
                    }
                }
                if !(p.rate > 0.0 && p.rate <= 1.0) {
                    bail!("problem.rate: must lie in (0, 1], got {}", p.rate);
                }
                if p.sampling.is_none() {
                    let total: usize = p.dims.iter().product();
                    let train = (p.rate * total as f64).round() as usize;
                    if p.test_count > total - train.min(total) {
                        bail!("problem.test_count: {} exceeds the {} unobserved positions", p.test_count, total - train.min(total));
                    }
                }
                if p.test_sampling.is_some() && p.sampling.is_none() {
                    bail!("problem.test_sampling: requires problem.sampling");
                }
                positive("problem.delta", p.delta)?;
            }
            Self::Ellipsoid(p) => {
                let n = p.b_matrix.as_ref().map_or(p.b_diag.len(), Vec::len);
                if n == 0 {
                    bail!("problem.b_diag: empty");
                }
                if p.b.len() != n {
                    bail!("problem.b: expected length {n}, got {}", p.b.len());
                }
                if let Some(rows) = &p.b_matrix {
                    if rows.iter().any(|r| r.len() != n) {
                        bail!("problem.b_matrix: must be square");
                    }
                }
                if let Some([start, stop, step]) = p.grid {
                    if !(step > 0.0 && stop >= start) {
                        bail!("problem.grid: need start <= stop and step > 0");
                    }
                }
            }
            Self::Spectrum(p) => {
                if !matches!(p.kind.as_str(), "cca" | "svd") {
                    bail!("problem.kind: expected cca or svd, got '{}'", p.kind);
                }
                if p.weights.len() + 1 > p.sigma.len() {
                    bail!("problem.sigma: need at least m+1 = {} values", p.weights.len() + 1);
                }
                check_weights("problem.weights", &p.weights, p.weights.len())?;
                positive("problem.delta", p.delta)?;
            }
        }
        Ok(())
    }
}

fn default_method(app: Application) -> Method {
    match app {
        Application::Trcomp => Method::Gn,
        Application::Ellipsoid => Method::Rgd,
        _ => Method::Rcg,
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<RawConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))
    }

    /// Applies defaults and validates. `app` comes from the subcommand and
    /// must agree with the file when both are given.
    pub fn resolve(raw: RawConfig, app: Application) -> Result<Self> {
        if let Some(a) = raw.application {
            if a != app {
                bail!("application: config says {a}, subcommand is {app}");
            }
        }
        let problem = ProblemParams::parse(app, raw.problem.as_ref())?;
        problem.validate()?;

        let method = raw.solver.method.unwrap_or_else(|| default_method(app));
        match (app, method) {
            (Application::Trcomp, _) | (_, Method::Rgd | Method::Rcg) => {}
            (_, Method::Gn) => bail!("solver.method: gn is only available for trcomp"),
        }
        let mut cg = CgParams::default();
        if let Some(b) = &raw.solver.beta {
            cg.beta_rule = parse_beta(b)?;
        }
        if let Some(r) = raw.solver.restart {
            cg.restart_on_nondescent = r;
        }
        let mut gn = GnParams::default();
        if let Some(d) = raw.solver.damping {
            positive("solver.damping", d)?;
            gn.damping = d;
        }
        if let Some(h) = raw.solver.max_halvings {
            gn.max_halvings = h;
        }

        let ls_raw = &raw.linesearch;
        let mut linesearch = if app == Application::Trcomp { LineSearchParams::tensor_ring() } else { LineSearchParams::standard() };
        linesearch.s0 = ls_raw.s0.unwrap_or(linesearch.s0);
        linesearch.rho = ls_raw.rho.unwrap_or(linesearch.rho);
        linesearch.a = ls_raw.a.unwrap_or(linesearch.a);
        linesearch.max_backtracks = ls_raw.max_backtracks.unwrap_or(linesearch.max_backtracks);
        linesearch.validate().map_err(|e| anyhow::anyhow!("linesearch: {e}"))?;
        let initial_step = match &ls_raw.initial_step {
            Some(s) => parse_initial_step(s)?,
            None if method == Method::Rcg => InitialStep::Interpolated,
            None => InitialStep::WarmStart,
        };

        let st = &raw.stopping;
        let mut stopping = match (app, method) {
            (Application::Trcomp, Method::Gn) => StoppingCriteria { gnorm_tol: 0.0, cost_tol: 1e-10, max_iters: 50, ..StoppingCriteria::tensor_ring() },
            (Application::Trcomp, _) => StoppingCriteria::tensor_ring(),
            _ => StoppingCriteria::standard(),
        };
        for (path, value, slot) in [
            ("stopping.gnorm_tol", st.gnorm_tol, &mut stopping.gnorm_tol),
            ("stopping.rel_change_tol", st.rel_change_tol, &mut stopping.rel_change_tol),
            ("stopping.min_stepsize", st.min_stepsize, &mut stopping.min_stepsize),
            ("stopping.cost_tol", st.cost_tol, &mut stopping.cost_tol),
        ] {
            if let Some(v) = value {
                nonneg(path, v)?;
                *slot = v;
            }
        }
        stopping.max_iters = st.max_iters.unwrap_or(stopping.max_iters);

        let repeat = raw.repeat.unwrap_or(1);
        if repeat == 0 {
            bail!("repeat: must be at least 1");
        }
        Ok(Self {
            application: app,
            seed: raw.seed.unwrap_or(0),
            repeat,
            record_timing: raw.record_timing.unwrap_or(true),
            with_spectrum: raw.with_spectrum.unwrap_or(false),
            problem,
            method,
            cg,
            gn,
            linesearch,
            initial_step,
            stopping,
        })
    }

    /// Effective settings, echoed into the summary.
    pub fn echo(&self) -> serde_json::Value {
        let beta = match self.cg.beta_rule {
            BetaRule::FletcherReeves => "fr",
            BetaRule::PolakRibierePlus => "prp+",
            BetaRule::HestenesStiefelPlus => "hs+",
        };
        let initial_step = match self.initial_step {
            InitialStep::Fixed => "fixed",
            InitialStep::WarmStart => "warm",
            InitialStep::Interpolated => "interpolated",
        };
        let (ls, st) = (&self.linesearch, &self.stopping);
        serde_json::json!({
            "application": self.application,
            "seed": self.seed,
            "repeat": self.repeat,
            "record_timing": self.record_timing,
            "with_spectrum": self.with_spectrum,
            "problem": self.problem,
            "solver": {
                "method": self.method,
                "beta": beta,
                "restart": self.cg.restart_on_nondescent,
                "damping": self.gn.damping,
                "max_halvings": self.gn.max_halvings,
            },
            "linesearch": {
                "s0": ls.s0, "rho": ls.rho, "a": ls.a, "max_backtracks": ls.max_backtracks,
                "initial_step": initial_step,
            },
            "stopping": {
                "gnorm_tol": st.gnorm_tol, "max_iters": st.max_iters, "rel_change_tol": st.rel_change_tol,
                "min_stepsize": st.min_stepsize, "cost_tol": st.cost_tol,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str, app: Application) -> Result<Config> {
        Config::resolve(toml::from_str(text).map_err(|e: toml::de::Error| anyhow::anyhow!(e.message().to_string()))?, app)
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = resolve("", Application::Tsvd).unwrap();
        assert_eq!(c.method, Method::Rcg);
        assert_eq!(c.initial_step, InitialStep::Interpolated);
        match c.problem {
            ProblemParams::Tsvd(p) => assert_eq!((p.m, p.n, p.p), (200, 100, 10)),
            _ => panic!(),
        }
    }

    #[test]
    fn partial_problem_table_merges_with_defaults() {
        let c = resolve("[problem]\nm = 50\nn = 30\n", Application::Tsvd).unwrap();
        match c.problem {
            ProblemParams::Tsvd(p) => assert_eq!((p.m, p.n, p.p), (50, 30, 10)),
            _ => panic!(),
        }
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = resolve("[problem]\nrate = 1.5\n", Application::Trcomp).unwrap_err().to_string();
        assert!(e.contains("problem.rate"), "{e}");
        let e = resolve("[problem]\ndims = [4, 4]\nranks = [1, 1]\n", Application::Trcomp).unwrap_err().to_string();
        assert!(e.contains("problem.test_count"), "{e}");
        let e = resolve("[problem]\nbogus = 1\n", Application::Cca).unwrap_err().to_string();
        assert!(e.contains("problem") && e.contains("bogus"), "{e}");
        let e = resolve("[linesearch]\ninitial_step = \"big\"\n", Application::Cca).unwrap_err().to_string();
        assert!(e.contains("linesearch.initial_step"), "{e}");
        let e = resolve("[solver]\nmethod = \"gn\"\n", Application::Cca).unwrap_err().to_string();
        assert!(e.contains("solver.method"), "{e}");
        let e = resolve("[problem]\nweights = [1.0, 2.0]\nm = 2\n", Application::Cca).unwrap_err().to_string();
        assert!(e.contains("problem.weights"), "{e}");
    }

    #[test]
    fn application_mismatch_rejected() {
        assert!(resolve("application = \"cca\"\n", Application::Tsvd).is_err());
        assert!(resolve("application = \"tsvd\"\n", Application::Tsvd).is_ok());
    }

    #[test]
    fn trcomp_gn_defaults() {
        let c = resolve("", Application::Trcomp).unwrap();
        assert_eq!(c.method, Method::Gn);
        assert_eq!(c.stopping.cost_tol, 1e-10);
        assert_eq!(c.linesearch.rho, 0.3);
    }
}
