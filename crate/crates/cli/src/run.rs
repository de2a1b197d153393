//! Executes one configured run and writes its artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use kfp_core::coefficients::verify_ellipticity;
use kfp_core::discretization::{
    solve_problem, weak_residual, DiscreteField, Grid, NodeClass, SolveOptions,
};
use kfp_core::exhaustion::{solve_exhaustion, GradedSpec};
use kfp_core::function_spaces::w_norm;
use kfp_core::geometry::{quasi_triangle_constant, AxisBox, BoundaryClass, FaceLocation, Point};
use kfp_core::stochastic::{box_faces, estimate_parabolic_measure, estimate_solution, KineticDomain};
use kfp_core::variational::{energy_estimate_ratio, minimize_joint};

use crate::config::{Config, DomainSpec, Mode};
use crate::error::{CliError, Result};

/// Node coordinates of every axis, enough to decide whether two fields live
/// on the same grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub m: usize,
    pub x_axes: Vec<Vec<f64>>,
    pub y_axes: Vec<Vec<f64>>,
    pub t_axis: Vec<f64>,
}

impl GridInfo {
    pub fn of(g: &Grid) -> Self {
        GridInfo {
            m: g.m,
            x_axes: g.x_axes.iter().map(|a| a.nodes.clone()).collect(),
            y_axes: g.y_axes.iter().map(|a| a.nodes.clone()).collect(),
            t_axis: g.t_axis.nodes.clone(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.x_axes
            .iter()
            .chain(&self.y_axes)
            .map(Vec::len)
            .chain([self.t_axis.len()])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub binary: Option<String>,
    pub csv: Option<String>,
    pub grid: GridInfo,
}

/// Monte-Carlo estimate at one start point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub point: Vec<f64>,
    /// Grid node the requested point was moved to (box domains).
    pub node: Option<usize>,
    pub mean: f64,
    pub std_error: f64,
    pub lost_fraction: f64,
    pub paths: usize,
}

#[derive(Default)]
struct ModeResult {
    report: Value,
    fields: Vec<(String, DiscreteField)>,
    grid: Option<GridInfo>,
    probes: Option<Vec<ProbeResult>>,
    tables: Vec<(String, String)>,
    passed: bool,
    lines: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub passed: bool,
    pub summary: String,
}

/// Runs `f` on a pool of `jobs` threads (all cores when `None`).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(f))
}

fn field(g: &Arc<Grid>, f: &(dyn Fn(&Point) -> f64 + Sync + Send)) -> DiscreteField {
    DiscreteField::from_fn(g.clone(), f)
}

fn solve_options(cfg: &Config) -> SolveOptions {
    SolveOptions {
        monolithic: cfg.solver.monolithic,
        rel_tol: cfg.solver.rel_tol,
        max_refinements: cfg.solver.max_refinements,
    }
}

/// Interior L² and sup errors against the exact solution, if there is one.
fn exact_errors(cfg: &Config, u: &DiscreteField) -> Result<Option<(f64, f64)>> {
    let Some(exact) = cfg.exact_solution()? else {
        return Ok(None);
    };
    let e = u.sub(&field(&u.grid, &*exact))?;
    let interior = |c: NodeClass| c == NodeClass::Interior;
    let (lo, hi) = e.range_where(interior);
    Ok(Some((e.l2_norm_where(interior), lo.abs().max(hi.abs()))))
}

fn direct(cfg: &Config) -> Result<ModeResult> {
    let m = cfg.m();
    let a = cfg.coefficient_field()?;
    let g = Arc::new(cfg.grid()?);
    let data = field(&g, &*cfg.data.evaluator(m)?);
    let gstar = field(&g, &*cfg.source.evaluator(m)?);
    let (u, mut rep) = solve_problem(&a, &data, &gstar, solve_options(cfg))?;
    rep.w_norm = Some(w_norm(&u)?.w_norm);
    rep.energy_ratio = Some(energy_estimate_ratio(&u, &data, &gstar)?);
    let errors = exact_errors(cfg, &u)?;
    let passed = rep.weak_residual <= cfg.solver.weak_tol;
    let mut lines = vec![
        format!("direct solve, {} unknowns", rep.unknowns),
        format!("algebraic residual {:.3e}, weak residual {:.3e}", rep.algebraic_residual, rep.weak_residual),
    ];
    if let Some((l2, sup)) = errors {
        lines.push(format!("interior error vs exact: L2 {l2:.3e}, sup {sup:.3e}"));
    }
    Ok(ModeResult {
        report: json!({
            "solve": rep,
            "exact_error": errors.map(|(l2, sup)| json!({"l2_interior": l2, "sup_interior": sup})),
        }),
        grid: Some(GridInfo::of(&g)),
        fields: vec![("u".into(), u)],
        passed,
        lines,
        ..Default::default()
    })
}

fn variational(cfg: &Config) -> Result<ModeResult> {
    let m = cfg.m();
    let a = cfg.coefficient_field()?;
    let g = Arc::new(cfg.grid()?);
    let data = field(&g, &*cfg.data.evaluator(m)?);
    let gstar = field(&g, &*cfg.source.evaluator(m)?);
    let start = Instant::now();
    let pair = minimize_joint(&data, &gstar, &a)?;
    let wall = start.elapsed().as_secs_f64();
    let weak = weak_residual(&pair.f, &a, &data, &gstar)?;
    let errors = exact_errors(cfg, &pair.f)?;
    let passed = weak <= cfg.solver.weak_tol;
    let mut lines = vec![
        format!("variational solve, {} unknowns", pair.unknowns),
        format!(
            "objective {:.3e}, constraint residual {:.3e}, weak residual {weak:.3e}",
            pair.objective, pair.constraint_residual
        ),
    ];
    if let Some((l2, sup)) = errors {
        lines.push(format!("interior error vs exact: L2 {l2:.3e}, sup {sup:.3e}"));
    }
    Ok(ModeResult {
        report: json!({
            "minimizer": pair,
            "weak_residual": weak,
            "wall_time_s": wall,
            "exact_error": errors.map(|(l2, sup)| json!({"l2_interior": l2, "sup_interior": sup})),
        }),
        grid: Some(GridInfo::of(&g)),
        fields: vec![("u".into(), pair.f)],
        passed,
        lines,
        ..Default::default()
    })
}

fn exhaustion(cfg: &Config) -> Result<ModeResult> {
    let m = cfg.m();
    let (omega, v) = cfg.graph_domain()?;
    let a = cfg.coefficient_field()?;
    let ex = &cfg.exhaustion;
    let spec = GradedSpec {
        core: AxisBox::new(ex.core.clone())?,
        h: ex.h.clone(),
        growth: ex.growth,
    };
    let probe = AxisBox::new(ex.probe.clone())?;
    let g = cfg.data.evaluator(m)?;
    let gstar = cfg.source.evaluator(m)?;
    let report = solve_exhaustion(&omega, &v, &*g, &*gstar, &a, &ex.radii, &probe, &spec)?;
    let levels: Vec<Value> = report
        .levels
        .iter()
        .map(|l| {
            json!({
                "radius": l.radius,
                "unknowns": l.unknowns,
                "sup_difference": l.sup_difference,
                "solution_sup": l.solution_sup,
                "data_sup": l.data_sup,
                "weak_residual": l.weak_residual,
                "wall_time_s": l.wall_time_s,
            })
        })
        .collect();
    let passed = report.monotone && report.bounded_by_data && report.nested;
    let mut lines = vec![format!("exhaustion over radii {:?}", ex.radii)];
    for l in &report.levels {
        lines.push(format!(
            "R = {}: {} unknowns, sup difference {}",
            l.radius,
            l.unknowns,
            l.sup_difference.map(|d| format!("{d:.3e}")).unwrap_or_else(|| "-".into())
        ));
    }
    lines.push(format!(
        "monotone {}, bounded by data {}, nested {}",
        report.monotone, report.bounded_by_data, report.nested
    ));
    let grid = report.levels.first().map(|l| GridInfo::of(&l.probe_field.grid));
    Ok(ModeResult {
        report: json!({
            "levels": levels,
            "differences": report.differences(),
            "monotone": report.monotone,
            "bounded_by_data": report.bounded_by_data,
            "nested": report.nested,
        }),
        grid,
        fields: report
            .levels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("probe_{i}"), l.probe_field.clone()))
            .collect(),
        passed,
        lines,
        ..Default::default()
    })
}

fn nearest_node(g: &Grid, target: &Point) -> usize {
    let dist = |n: usize| {
        let p = g.point(n).to_flat();
        p.iter().zip(target.to_flat()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    };
    // Unknown nodes off the y-faces: interior points and the final face.
    let inside = |n: usize| {
        let (_, iy, _) = g.split(n);
        g.y_multi(iy).iter().zip(&g.y_axes).all(|(&i, a)| i > 0 && i + 1 < a.len())
    };
    (0..g.len())
        .filter(|&n| g.class(n).is_unknown() && inside(n))
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
        .unwrap_or(0)
}

fn montecarlo(cfg: &Config) -> Result<ModeResult> {
    let m = cfg.m();
    let a = cfg.coefficient_field()?;
    let domain = cfg.kinetic_domain()?;
    let phi = cfg.data.evaluator(m)?;
    let opts = cfg.montecarlo.options();
    let grid = match &cfg.domain {
        DomainSpec::Box { .. } => Some(cfg.grid()?),
        DomainSpec::Graph { .. } => None,
    };
    let mut probes = Vec::new();
    for flat in &cfg.montecarlo.probes {
        let requested = Point::from_flat(flat)?;
        let (point, node) = match &grid {
            Some(g) => {
                let n = nearest_node(g, &requested);
                (g.point(n), Some(n))
            }
            None => (requested, None),
        };
        let est = estimate_solution(&point, &domain, &a, &*phi, &opts)?;
        probes.push(ProbeResult {
            point: point.to_flat(),
            node,
            mean: est.mean,
            std_error: est.std_error,
            lost_fraction: est.lost_fraction,
            paths: est.paths,
        });
    }
    let patches = match &domain {
        KineticDomain::Box(_) => box_faces(m),
        KineticDomain::Graph { .. } => vec![FaceLocation::Graph, FaceLocation::Initial],
    };
    let first = Point::from_flat(&probes[0].point)?;
    let measure = estimate_parabolic_measure(&first, &domain, &a, &patches, &opts)?;
    let passed = probes.iter().all(|p| p.lost_fraction <= 0.01);
    let mut lines = vec![format!("Monte-Carlo, {} paths per probe, seed {}", opts.paths, opts.seed)];
    for p in &probes {
        lines.push(format!(
            "{:?}: mean {:.6} ± {:.2e}, lost {:.2}%",
            p.point,
            p.mean,
            p.std_error,
            100.0 * p.lost_fraction
        ));
    }
    lines.push(format!("exit measure at the first probe sums to {:.6}", measure.masses.iter().sum::<f64>()));
    Ok(ModeResult {
        report: json!({ "measure": measure }),
        grid: grid.as_ref().map(GridInfo::of),
        probes: Some(probes),
        passed,
        lines,
        ..Default::default()
    })
}

#[derive(Clone, Debug, Serialize)]
struct BatteryLevel {
    n: usize,
    h: f64,
    unknowns: usize,
    error_l2: f64,
    error_sup: f64,
    order_l2: Option<f64>,
    weak_residual: f64,
    variational_rel_diff: Option<f64>,
    wall_time_s: f64,
}

fn battery(cfg: &Config) -> Result<ModeResult> {
    if cfg.exact_solution()?.is_none() {
        return Err(CliError::config(
            "battery needs data with a known exact solution: constant, or prototype_kernel / kinetic_polynomial with identity coefficients and zero source",
        ));
    }
    let m = cfg.m();
    let a = cfg.coefficient_field()?;
    let results: Result<Vec<BatteryLevel>> = cfg
        .battery
        .levels
        .par_iter()
        .map(|&n| {
            let start = Instant::now();
            let g = Arc::new(cfg.grid_at(Some(n))?);
            let data = field(&g, &*cfg.data.evaluator(m)?);
            let gstar = field(&g, &*cfg.source.evaluator(m)?);
            let (u, rep) = solve_problem(&a, &data, &gstar, solve_options(cfg))?;
            let (l2, sup) = exact_errors(cfg, &u)?.unwrap_or_default();
            let variational_rel_diff = if cfg.battery.variational {
                let v = minimize_joint(&data, &gstar, &a)?;
                Some(v.f.sub(&u)?.l2_norm() / u.l2_norm().max(f64::MIN_POSITIVE))
            } else {
                None
            };
            Ok(BatteryLevel {
                n,
                h: g.max_h(),
                unknowns: rep.unknowns,
                error_l2: l2,
                error_sup: sup,
                order_l2: None,
                weak_residual: rep.weak_residual,
                variational_rel_diff,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let mut levels = results?;
    for i in 1..levels.len() {
        let (prev, cur) = (&levels[i - 1], &levels[i]);
        if prev.error_l2 > 0.0 && cur.error_l2 > 0.0 {
            levels[i].order_l2 = Some((prev.error_l2 / cur.error_l2).ln() / (prev.h / cur.h).ln());
        }
    }
    let monotone = levels.windows(2).all(|w| w[1].error_l2 < w[0].error_l2);
    let weak_ok = levels.iter().all(|l| l.weak_residual <= cfg.solver.weak_tol);
    let mut csv = String::from("n,h,unknowns,error_l2,error_sup,order_l2,weak_residual,variational_rel_diff\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for l in &levels {
        let _ = writeln!(
            csv,
            "{},{:e},{},{:e},{:e},{},{:e},{}",
            l.n,
            l.h,
            l.unknowns,
            l.error_l2,
            l.error_sup,
            opt(l.order_l2),
            l.weak_residual,
            opt(l.variational_rel_diff)
        );
    }
    let mut lines = vec![format!("refinement battery over n = {:?}", cfg.battery.levels)];
    for l in &levels {
        lines.push(format!(
            "n = {}: L2 error {:.3e}, order {}",
            l.n,
            l.error_l2,
            l.order_l2.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into())
        ));
    }
    lines.push(format!("errors monotone: {monotone}"));
    Ok(ModeResult {
        report: json!({ "levels": levels, "monotone": monotone }),
        tables: vec![("convergence.csv".into(), csv)],
        passed: monotone && weak_ok,
        lines,
        ..Default::default()
    })
}

fn rel_diff(p: &Point, q: &Point) -> f64 {
    let scale = p.to_flat().iter().chain(&q.to_flat()).fold(1.0f64, |a, v| a.max(v.abs()));
    p.max_abs_diff(q) / scale
}

fn verify(cfg: &Config) -> Result<ModeResult> {
    let m = cfg.m();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.verify.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..2 * m + 1).map(|_| rng.random_range(-3.0..3.0)).collect();
        Point::from_flat(&v).expect("2m + 1 coordinates")
    };
    let (mut law, mut inv, mut hom, mut sym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let e = Point::origin(m);
    for _ in 0..cfg.verify.cases {
        let (p, q, w) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        law = law.max(rel_diff(&p.compose(&q).compose(&w), &p.compose(&q.compose(&w))));
        law = law.max(rel_diff(&p.compose(&e), &p)).max(rel_diff(&e.compose(&p), &p));
        inv = inv.max(rel_diff(&p.compose(&p.inverse()), &e)).max(rel_diff(&p.inverse().compose(&p), &e));
        let r = 10f64.powf(rng.random_range(-2.0..2.0));
        let norm = p.homogeneous_norm();
        hom = hom.max((p.dilate(r)?.homogeneous_norm() - r * norm).abs() / (r * norm));
        let d = p.quasi_distance(&q);
        sym = sym.max((d - q.quasi_distance(&p)).abs() / d.max(f64::MIN_POSITIVE));
    }
    let identities_ok = law.max(inv).max(hom).max(sym) <= 1e-12;
    let triangle = quasi_triangle_constant(m, 2000, &mut rng);

    let mut misclassified = None;
    let region = match &cfg.domain {
        DomainSpec::Box { u_x, v_yt } => {
            let d = cfg.product_domain()?;
            let g = cfg.grid()?;
            let bad = (0..g.len())
                .filter(|&n| {
                    let expected = match d.classify_point(&g.point(n)) {
                        None => NodeClass::Interior,
                        Some(BoundaryClass::Kolmogorov) => NodeClass::Kolmogorov,
                        Some(BoundaryClass::Free) => NodeClass::Free,
                    };
                    g.class(n) != expected
                })
                .count();
            misclassified = Some(bad);
            AxisBox::new(u_x.iter().chain(v_yt).copied().collect())?
        }
        DomainSpec::Graph { v_yt, .. } => {
            AxisBox::new(vec![[-1.0, 1.0]; m].into_iter().chain(v_yt.iter().copied()).collect())?
        }
    };
    let ellipticity = verify_ellipticity(&cfg.coefficient_field()?, &region, cfg.verify.cases, &mut rng)?;
    let passed = identities_ok && misclassified.unwrap_or(0) == 0 && ellipticity.passed();
    let lines = vec![
        format!(
            "group law {law:.1e}, inverse {inv:.1e}, homogeneity {hom:.1e}, symmetry {sym:.1e} over {} cases",
            cfg.verify.cases
        ),
        format!("observed quasi-triangle constant {triangle:.4}"),
        match misclassified {
            Some(b) => format!("boundary classification: {b} misclassified nodes"),
            None => "boundary classification: skipped for graph domains".into(),
        },
        format!(
            "ellipticity: eigenvalues in [{:.4}, {:.4}], passed {}",
            ellipticity.min_eig,
            ellipticity.max_eig,
            ellipticity.passed()
        ),
    ];
    Ok(ModeResult {
        report: json!({
            "identities": {"group_law": law, "inverse": inv, "homogeneity": hom, "symmetry": sym, "cases": cfg.verify.cases, "passed": identities_ok},
            "quasi_triangle_constant": triangle,
            "misclassified_nodes": misclassified,
            "ellipticity": ellipticity,
        }),
        passed,
        lines,
        ..Default::default()
    })
}

/// Moves every `wall_time_s` entry out of `v` into `out`, keyed by its path.
fn strip_timing(v: &mut Value, path: &str, out: &mut BTreeMap<String, f64>) {
    match v {
        Value::Object(map) => {
            if let Some(t) = map.remove("wall_time_s") {
                out.insert(format!("{path}/wall_time_s"), t.as_f64().unwrap_or(f64::NAN));
            }
            for (k, child) in map.iter_mut() {
                strip_timing(child, &format!("{path}/{k}"), out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter_mut().enumerate() {
                strip_timing(child, &format!("{path}/{i}"), out);
            }
        }
        _ => {}
    }
}

/// Runs `cfg` and writes `run.json`, `timing.json`, `summary.txt`, fields
/// and tables into `out`. Wall times go to `timing.json` only, so equal
/// configs give byte-identical `run.json`.
pub fn run(cfg: &Config, out: &Path) -> Result<RunOutput> {
    let start = Instant::now();
    let mut res = match cfg.mode {
        Mode::Direct => direct(cfg)?,
        Mode::Variational => variational(cfg)?,
        Mode::Exhaustion => exhaustion(cfg)?,
        Mode::Montecarlo => montecarlo(cfg)?,
        Mode::Battery => battery(cfg)?,
        Mode::Verify => verify(cfg)?,
    };
    std::fs::create_dir_all(out)?;
    let mut fields = BTreeMap::new();
    for (name, f) in &res.fields {
        let binary = cfg.output.binary.then(|| format!("{name}.bin"));
        let csv = cfg.output.csv.then(|| format!("{name}.csv"));
        if let Some(b) = &binary {
            f.write_binary(&out.join(b))?;
        }
        if let Some(c) = &csv {
            f.write_csv(&out.join(c))?;
        }
        fields.insert(
            name.clone(),
            FieldEntry {
                binary,
                csv,
                grid: GridInfo::of(&f.grid),
            },
        );
    }
    for (name, text) in &res.tables {
        std::fs::write(out.join(name), text)?;
    }
    let mut timing = BTreeMap::new();
    strip_timing(&mut res.report, "/report", &mut timing);
    let doc = json!({
        "schema_version": crate::config::SCHEMA_VERSION,
        "tool": {"name": "kfp", "version": env!("CARGO_PKG_VERSION")},
        "mode": cfg.mode,
        "config": cfg,
        "passed": res.passed,
        "grid": res.grid,
        "fields": fields,
        "probes": res.probes,
        "report": res.report,
    });
    std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    let total = start.elapsed().as_secs_f64();
    std::fs::write(
        out.join("timing.json"),
        serde_json::to_string_pretty(&json!({"total_s": total, "entries": timing}))? + "\n",
    )?;
    let mut summary = res.lines.join("\n");
    let _ = write!(summary, "\n{}\n", if res.passed { "PASSED" } else { "FAILED" });
    std::fs::write(out.join("summary.txt"), &summary)?;
    Ok(RunOutput {
        dir: out.to_path_buf(),
        passed: res.passed,
        summary,
    })
}
