//! Versioned JSON run configuration.
//!
//! Every default lives in this file and is written back into `run.json`, so
//! a run's resolved config is complete.

use std::path::Path;

use serde::{Deserialize, Serialize};

use kfp_core::analytic_kernel::kernel_value;
use kfp_core::coefficients::{mollify, CoefficientFamily, EllipticMatrixField};
use kfp_core::discretization::{build_grid, Grid, Resolution};
use kfp_core::geometry::{AxisBox, GraphFunction, LipschitzGraphDomain, Point, ProductDomain};
use kfp_core::stochastic::{KineticDomain, McOptions};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Direct,
    Variational,
    Exhaustion,
    Montecarlo,
    Battery,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub resolution: ResolutionSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    /// Kolmogorov boundary data `g`.
    #[serde(default)]
    pub data: DataSpec,
    /// Right-hand side `g*`.
    #[serde(default)]
    pub source: DataSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub montecarlo: MonteCarloSpec,
    #[serde(default)]
    pub exhaustion: ExhaustionSpec,
    #[serde(default)]
    pub battery: BatterySpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Box {
        #[serde(rename = "U_X")]
        u_x: Vec<[f64; 2]>,
        #[serde(rename = "V_Yt")]
        v_yt: Vec<[f64; 2]>,
    },
    /// `{x_m > ψ(x_1..x_{m−1})}` with declared Lipschitz constant `M`.
    Graph {
        m: usize,
        #[serde(rename = "M")]
        lipschitz: f64,
        psi: PsiName,
        /// plane: slopes (`m − 1`); cone: `[c]`; sine: `[amplitude, wavenumber]`.
        #[serde(default)]
        params: Vec<f64>,
        /// Base `(Y, t)` box, dilated per exhaustion radius.
        #[serde(rename = "V_Yt")]
        v_yt: Vec<[f64; 2]>,
        /// Initial time for Monte-Carlo paths; defaults to the time lower
        /// bound of `V_Yt`.
        #[serde(default)]
        t_min: Option<f64>,
    },
}

impl Default for DomainSpec {
    /// `U_X = (−1, 1)`, `V = (−1, 1) × (0, 1)`.
    fn default() -> Self {
        DomainSpec::Box {
            u_x: vec![[-1.0, 1.0]],
            v_yt: vec![[-1.0, 1.0], [0.0, 1.0]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiName {
    Plane,
    Cone,
    Sine,
}

/// Either `n` nodes on every axis or explicit per-axis counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolutionSpec {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub nx: Option<Vec<usize>>,
    #[serde(default)]
    pub ny: Option<Vec<usize>>,
    #[serde(default)]
    pub nt: Option<usize>,
}

impl Default for ResolutionSpec {
    fn default() -> Self {
        ResolutionSpec {
            n: Some(16),
            nx: None,
            ny: None,
            nt: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Identity,
    Constant,
    Rotated,
    Checkerboard,
    Periodic,
}

/// `params` per family: identity `[]`; constant the row-major `m × m`
/// matrix; rotated the `m` eigenvalues then the angle; checkerboard
/// `[a, b]` or `[a, b, period]`; periodic `[amplitude, wavenumber]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub family: FamilyName,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default)]
    pub identity_outside: Option<Vec<[f64; 2]>>,
    /// Mollification width; `null` for the raw field.
    #[serde(default)]
    pub mollify: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec {
            family: FamilyName::Identity,
            kappa: 1.0,
            params: Vec::new(),
            identity_outside: None,
            mollify: None,
        }
    }
}

/// Scalar data on space-time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    #[default]
    Zero,
    Constant { value: f64 },
    /// Fundamental solution with pole `[x.., y.., t]`.
    PrototypeKernel { pole: Vec<f64> },
    /// `Σ_i (x_i² + y_i + x_i t) + 2m t`, a solution for `A = I`.
    KineticPolynomial,
}

impl DataSpec {
    pub fn evaluator(&self, m: usize) -> Result<Box<dyn Fn(&Point) -> f64 + Sync + Send>> {
        Ok(match self.clone() {
            DataSpec::Zero => Box::new(|_| 0.0),
            DataSpec::Constant { value } => Box::new(move |_| value),
            DataSpec::PrototypeKernel { pole } => {
                if pole.len() != 2 * m + 1 {
                    return Err(CliError::config(format!("pole needs {} coordinates, got {}", 2 * m + 1, pole.len())));
                }
                Box::new(move |p: &Point| kernel_value(&p.x, &p.y, p.t, &pole[..m], &pole[m..2 * m], pole[2 * m]))
            }
            DataSpec::KineticPolynomial => Box::new(move |p: &Point| {
                (0..m).map(|i| p.x[i] * p.x[i] + p.y[i] + p.x[i] * p.t).sum::<f64>() + 2.0 * m as f64 * p.t
            }),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Factor the whole space-time system instead of marching in time.
    #[serde(default)]
    pub monolithic: bool,
    #[serde(default = "rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "max_refinements")]
    pub max_refinements: usize,
    /// A solve passes when its weak residual is at most this.
    #[serde(default = "weak_tol")]
    pub weak_tol: f64,
}

fn rel_tol() -> f64 {
    1e-12
}

fn max_refinements() -> usize {
    4
}

fn weak_tol() -> f64 {
    1e-8
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            monolithic: false,
            rel_tol: rel_tol(),
            max_refinements: max_refinements(),
            weak_tol: weak_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSpec {
    #[serde(default = "paths")]
    pub paths: usize,
    /// `null` means `(t − t_min) / 2048` per start point.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "seed")]
    pub seed: u64,
    #[serde(default)]
    pub exact_y: bool,
    #[serde(default = "yes")]
    pub bridge: bool,
    /// Start points `[x.., y.., t]`; on box domains each is moved to the
    /// nearest grid node so that runs compare against direct solves.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
}

fn paths() -> usize {
    100_000
}

fn seed() -> u64 {
    1
}

fn yes() -> bool {
    true
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        MonteCarloSpec {
            paths: paths(),
            dt: None,
            seed: seed(),
            exact_y: false,
            bridge: true,
            probes: Vec::new(),
        }
    }
}

impl MonteCarloSpec {
    pub fn options(&self) -> McOptions {
        McOptions {
            paths: self.paths,
            dt: self.dt,
            seed: self.seed,
            exact_y: self.exact_y,
            bridge: self.bridge,
        }
    }
}

/// Defaults are the half-space benchmark at `h = 0.25`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionSpec {
    #[serde(default = "radii")]
    pub radii: Vec<f64>,
    /// Probe box over all `2m + 1` axes.
    #[serde(default = "probe")]
    pub probe: Vec<[f64; 2]>,
    /// Uniform core box of the graded grids.
    #[serde(default = "core")]
    pub core: Vec<[f64; 2]>,
    /// Core spacing per axis.
    #[serde(default = "spacing")]
    pub h: Vec<f64>,
    #[serde(default = "growth")]
    pub growth: f64,
}

fn radii() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}

fn probe() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0], [-0.5, 0.5], [0.0, 0.5]]
}

fn core() -> Vec<[f64; 2]> {
    vec![[0.0, 2.0], [-2.0, 2.0], [-3.0, 1.0]]
}

fn spacing() -> Vec<f64> {
    vec![0.25, 0.25, 0.125]
}

fn growth() -> f64 {
    1.25
}

impl Default for ExhaustionSpec {
    fn default() -> Self {
        ExhaustionSpec {
            radii: radii(),
            probe: probe(),
            core: core(),
            h: spacing(),
            growth: growth(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySpec {
    /// Nodes per axis at each refinement level.
    #[serde(default = "levels")]
    pub levels: Vec<usize>,
    /// Also run the variational solver and report its distance to the
    /// direct solution.
    #[serde(default)]
    pub variational: bool,
}

fn levels() -> Vec<usize> {
    vec![9, 17, 33]
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec {
            levels: levels(),
            variational: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "cases")]
    pub cases: usize,
    #[serde(default = "seed")]
    pub seed: u64,
}

fn cases() -> usize {
    1000
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec { cases: cases(), seed: seed() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub binary: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { csv: true, binary: true }
    }
}

/// Line of the last key of `path` in `text`, searching each key after the
/// previous one.
fn locate(text: &str, path: &[&str]) -> Option<usize> {
    let mut pos = 0;
    for key in path {
        let needle = format!("\"{key}\"");
        pos += text[pos..].find(&needle)?;
    }
    Some(text[..pos].matches('\n').count() + 1)
}

fn at(text: &str, name: &str, path: &[&str], message: impl Into<String>) -> CliError {
    CliError::Config {
        location: Some(match locate(text, path) {
            Some(line) => format!("{name}:{line}"),
            None => name.to_string(),
        }),
        message: format!("{}: {}", path.join("."), message.into()),
    }
}

impl Config {
    /// Parses and validates; errors carry `file:line`.
    pub fn parse(text: &str, name: &str) -> Result<Config> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| CliError::Config {
            location: Some(format!("{name}:{}:{}", e.line(), e.column())),
            message: e.to_string(),
        })?;
        cfg.validate(text, name)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn m(&self) -> usize {
        match &self.domain {
            DomainSpec::Box { u_x, .. } => u_x.len(),
            DomainSpec::Graph { m, .. } => *m,
        }
    }

    fn validate(&self, text: &str, name: &str) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(at(
                text,
                name,
                &["schema_version"],
                format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.coefficients.kappa >= 1.0) {
            return Err(at(
                text,
                name,
                &["coefficients", "kappa"],
                format!("ellipticity constant must be ≥ 1 (got {})", self.coefficients.kappa),
            ));
        }
        let m = self.m();
        if m == 0 {
            return Err(at(text, name, &["domain"], "need at least one space dimension"));
        }
        match &self.domain {
            DomainSpec::Box { v_yt, .. } if v_yt.len() != m + 1 => {
                return Err(at(text, name, &["domain", "V_Yt"], format!("needs {} intervals, got {}", m + 1, v_yt.len())));
            }
            DomainSpec::Graph { v_yt, .. } if v_yt.len() != m + 1 => {
                return Err(at(text, name, &["domain", "V_Yt"], format!("needs {} intervals, got {}", m + 1, v_yt.len())));
            }
            _ => {}
        }
        let r = &self.resolution;
        if r.n.is_none() && (r.nx.is_none() || r.ny.is_none() || r.nt.is_none()) {
            return Err(at(text, name, &["resolution"], "give either n or all of nx, ny, nt"));
        }
        // An omitted mode is filled in later by the subcommand.
        if locate(text, &["mode"]).is_some() {
            self.check_mode().map_err(|e| match e {
                CliError::Config { message, .. } => at(text, name, &["mode"], message),
                other => other,
            })?;
        }
        for (i, p) in self.montecarlo.probes.iter().enumerate() {
            if p.len() != 2 * m + 1 {
                return Err(at(text, name, &["montecarlo", "probes"], format!("probe {i} needs {} coordinates", 2 * m + 1)));
            }
        }
        for (key, spec) in [("data", &self.data), ("source", &self.source)] {
            if let DataSpec::PrototypeKernel { pole } = spec {
                if pole.len() != 2 * m + 1 {
                    return Err(at(text, name, &[key, "pole"], format!("needs {} coordinates, got {}", 2 * m + 1, pole.len())));
                }
            }
        }
        // Remaining checks reuse the library constructors.
        let anchor = |path: &[&str], e: CliError| match e {
            CliError::Config { message, .. } => at(text, name, path, message),
            other => other,
        };
        self.coefficient_field().map_err(|e| anchor(&["coefficients"], e))?;
        match &self.domain {
            DomainSpec::Box { .. } => {
                self.grid().map_err(|e| anchor(&["domain"], e))?;
            }
            DomainSpec::Graph { .. } => {
                self.graph_domain().map_err(|e| anchor(&["domain"], e))?;
            }
        }
        Ok(())
    }

    /// Mode-specific requirements; rerun after a subcommand overrides the
    /// configured mode.
    pub fn check_mode(&self) -> Result<()> {
        let graph = matches!(self.domain, DomainSpec::Graph { .. });
        match self.mode {
            Mode::Exhaustion if !graph => Err(CliError::config("exhaustion needs a graph domain")),
            Mode::Direct | Mode::Variational | Mode::Battery if graph => Err(CliError::config(
                "bounded solves need a box domain; use exhaustion for graph domains",
            )),
            Mode::Montecarlo if self.montecarlo.probes.is_empty() => {
                Err(CliError::config("montecarlo mode needs at least one probe"))
            }
            _ => Ok(()),
        }
    }

    pub fn coefficient_field(&self) -> Result<EllipticMatrixField> {
        let m = self.m();
        let c = &self.coefficients;
        let p = &c.params;
        let need = |n: usize, what: &str| {
            if p.len() == n {
                Ok(())
            } else {
                Err(CliError::config(format!("{what} needs {n} params, got {}", p.len())))
            }
        };
        let family = match c.family {
            FamilyName::Identity => {
                need(0, "identity")?;
                let mut matrix = vec![0.0; m * m];
                for i in 0..m {
                    matrix[i * m + i] = 1.0;
                }
                CoefficientFamily::Constant { matrix }
            }
            FamilyName::Constant => {
                need(m * m, "constant")?;
                CoefficientFamily::Constant { matrix: p.clone() }
            }
            FamilyName::Rotated => {
                need(m + 1, "rotated")?;
                CoefficientFamily::Rotated {
                    eigenvalues: p[..m].to_vec(),
                    angle: p[m],
                }
            }
            FamilyName::Checkerboard => {
                if p.len() != 2 && p.len() != 3 {
                    return Err(CliError::config(format!("checkerboard needs 2 or 3 params, got {}", p.len())));
                }
                CoefficientFamily::Checkerboard {
                    a: p[0],
                    b: p[1],
                    period: p.get(2).copied(),
                }
            }
            FamilyName::Periodic => {
                need(2, "periodic")?;
                CoefficientFamily::Periodic {
                    amplitude: p[0],
                    wavenumber: p[1],
                }
            }
        };
        let mut a = EllipticMatrixField::new(m, c.kappa, family)?;
        if let Some(region) = &c.identity_outside {
            a = a.with_identity_outside(AxisBox::new(region.clone())?)?;
        }
        if let Some(eps) = c.mollify {
            a = mollify(&a, eps)?;
        }
        Ok(a)
    }

    pub fn product_domain(&self) -> Result<ProductDomain> {
        match &self.domain {
            DomainSpec::Box { u_x, v_yt } => Ok(ProductDomain::new(AxisBox::new(u_x.clone())?, AxisBox::new(v_yt.clone())?)?),
            DomainSpec::Graph { .. } => Err(CliError::config("expected a box domain")),
        }
    }

    pub fn resolution_at(&self, n: Option<usize>) -> Resolution {
        let m = self.m();
        match (n, &self.resolution) {
            (Some(n), _) => Resolution::uniform(m, n),
            (None, ResolutionSpec { n: Some(n), .. }) => Resolution::uniform(m, *n),
            (None, r) => Resolution {
                nx: r.nx.clone().unwrap_or_default(),
                ny: r.ny.clone().unwrap_or_default(),
                nt: r.nt.unwrap_or_default(),
            },
        }
    }

    /// Grid of a box domain at the configured resolution.
    pub fn grid(&self) -> Result<Grid> {
        self.grid_at(None)
    }

    /// Grid with `n` nodes per axis (or the configured resolution).
    pub fn grid_at(&self, n: Option<usize>) -> Result<Grid> {
        Ok(build_grid(&self.product_domain()?, &self.resolution_at(n))?)
    }

    pub fn graph_domain(&self) -> Result<(LipschitzGraphDomain, AxisBox)> {
        let DomainSpec::Graph {
            m,
            lipschitz,
            psi,
            params,
            v_yt,
            ..
        } = &self.domain
        else {
            return Err(CliError::config("expected a graph domain"));
        };
        let f = match psi {
            PsiName::Plane => {
                if params.len() != m - 1 {
                    return Err(CliError::config(format!("plane needs {} slopes, got {}", m - 1, params.len())));
                }
                GraphFunction::Plane { slope: params.clone() }
            }
            PsiName::Cone => match params.as_slice() {
                [c] => GraphFunction::Cone { slope: *c },
                _ => return Err(CliError::config("cone needs params [c]")),
            },
            PsiName::Sine => match params.as_slice() {
                [a, k] => GraphFunction::Sine {
                    amplitude: *a,
                    wavenumber: *k,
                },
                _ => return Err(CliError::config("sine needs params [amplitude, wavenumber]")),
            },
        };
        Ok((LipschitzGraphDomain::new(*m, f, *lipschitz)?, AxisBox::new(v_yt.clone())?))
    }

    pub fn kinetic_domain(&self) -> Result<KineticDomain> {
        match &self.domain {
            DomainSpec::Box { .. } => Ok(KineticDomain::Box(self.product_domain()?)),
            DomainSpec::Graph { t_min, v_yt, .. } => {
                let (omega, _) = self.graph_domain()?;
                Ok(KineticDomain::Graph {
                    omega,
                    t_min: t_min.unwrap_or(v_yt[self.m()][0]),
                })
            }
        }
    }

    /// Exact solution when the data determine one: constants with zero
    /// source, or the kernel and the polynomial with `A = I` and zero source.
    pub fn exact_solution(&self) -> Result<Option<Box<dyn Fn(&Point) -> f64 + Sync + Send>>> {
        if self.source != DataSpec::Zero {
            return Ok(None);
        }
        let identity = self.coefficients.family == FamilyName::Identity && self.coefficients.identity_outside.is_none();
        match self.data {
            DataSpec::Zero | DataSpec::Constant { .. } => Ok(Some(self.data.evaluator(self.m())?)),
            DataSpec::PrototypeKernel { .. } | DataSpec::KineticPolynomial if identity => Ok(Some(self.data.evaluator(self.m())?)),
            _ => Ok(None),
        }
    }
}
