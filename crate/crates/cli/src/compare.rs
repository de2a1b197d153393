//! Comparison of two runs: fields against fields, fields against
//! Monte-Carlo probes, or probes against probes.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use kfp_core::discretization::read_binary_raw;

use crate::error::{CliError, Result};
use crate::run::{FieldEntry, GridInfo, ProbeResult};

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    /// `fields`, `field_vs_probes` or `probes`.
    pub kind: String,
    pub field: Option<String>,
    pub rel_l2: Option<f64>,
    pub sup: Option<f64>,
    /// Largest `|difference| / standard error` over the probes.
    pub max_z: Option<f64>,
    pub z_scores: Vec<f64>,
    pub tolerance: f64,
    pub sigmas: f64,
    pub within: bool,
}

struct Run {
    dir: std::path::PathBuf,
    name: String,
    doc: Value,
}

impl Run {
    fn load(path: &Path) -> Result<Run> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
        Ok(Run {
            dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            name: path.display().to_string(),
            doc,
        })
    }

    fn fields(&self) -> Result<Vec<(String, FieldEntry)>> {
        let Some(map) = self.doc.get("fields").and_then(Value::as_object) else {
            return Ok(Vec::new());
        };
        map.iter()
            .map(|(k, v)| {
                let e: FieldEntry = serde_json::from_value(v.clone())
                    .map_err(|e| CliError::config(format!("{}: field {k}: {e}", self.name)))?;
                Ok((k.clone(), e))
            })
            .collect()
    }

    fn probes(&self) -> Result<Option<Vec<ProbeResult>>> {
        match self.doc.get("probes") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::config(format!("{}: probes: {e}", self.name))),
        }
    }

    fn grid(&self) -> Option<GridInfo> {
        self.doc.get("grid").and_then(|g| serde_json::from_value(g.clone()).ok())
    }

    fn values(&self, name: &str, entry: &FieldEntry) -> Result<Vec<f64>> {
        let Some(bin) = &entry.binary else {
            return Err(CliError::config(format!(
                "{}: field {name} has no binary file; enable output.binary",
                self.name
            )));
        };
        let (dims, values) = read_binary_raw(&self.dir.join(bin)).map_err(|e| CliError::Io(e.to_string()))?;
        if dims != entry.grid.dims() {
            return Err(CliError::Numerical(format!(
                "{}: {bin} has dims {dims:?}, run.json says {:?}",
                self.name,
                entry.grid.dims()
            )));
        }
        Ok(values)
    }
}

fn grid_mismatch(what: &str, a: &GridInfo, b: &GridInfo) -> CliError {
    let detail = if a.m != b.m {
        format!("m = {} vs m = {}", a.m, b.m)
    } else if a.dims() != b.dims() {
        format!("node counts {:?} vs {:?}", a.dims(), b.dims())
    } else {
        "same node counts but different node coordinates".to_string()
    };
    CliError::config(format!("grid mismatch in {what}: {detail}"))
}

fn z(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.abs() / se
    }
}

fn field_vs_probes(grid: &GridInfo, values: &[f64], probes: &[ProbeResult], probe_grid: Option<GridInfo>) -> Result<Vec<f64>> {
    match probe_grid {
        Some(pg) if pg == *grid => {}
        Some(pg) => return Err(grid_mismatch("field vs probes", grid, &pg)),
        None => return Err(CliError::config("Monte-Carlo run has no grid; only box-domain runs compare with fields")),
    }
    probes
        .iter()
        .map(|p| {
            let n = p.node.ok_or_else(|| CliError::config("probe without a grid node"))?;
            Ok(z(p.mean - values[n], p.std_error))
        })
        .collect()
}

/// Compares two `run.json` files. Fields pass when the relative L² difference
/// is at most `tolerance`; probe comparisons pass when every difference is
/// within `sigmas` standard errors.
pub fn compare(a: &Path, b: &Path, tolerance: f64, sigmas: f64) -> Result<CompareReport> {
    let (ra, rb) = (Run::load(a)?, Run::load(b)?);
    let (fa, fb) = (ra.fields()?, rb.fields()?);
    let (pa, pb) = (ra.probes()?, rb.probes()?);
    let mut report = CompareReport {
        kind: String::new(),
        field: None,
        rel_l2: None,
        sup: None,
        max_z: None,
        z_scores: Vec::new(),
        tolerance,
        sigmas,
        within: false,
    };
    let common: Vec<&String> = fa.iter().map(|(k, _)| k).filter(|k| fb.iter().any(|(j, _)| j == *k)).collect();
    let chosen = common.iter().find(|k| k.as_str() == "u").or(common.first()).copied();
    if let Some(name) = chosen {
        let ea = &fa.iter().find(|(k, _)| k == name).unwrap().1;
        let eb = &fb.iter().find(|(k, _)| k == name).unwrap().1;
        if ea.grid != eb.grid {
            return Err(grid_mismatch(&format!("field {name}"), &ea.grid, &eb.grid));
        }
        let (va, vb) = (ra.values(name, ea)?, rb.values(name, eb)?);
        let diff2: f64 = va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum();
        let norm2: f64 = vb.iter().map(|y| y * y).sum();
        let sup = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let rel = if diff2 == 0.0 { 0.0 } else { (diff2 / norm2.max(f64::MIN_POSITIVE)).sqrt() };
        report.kind = "fields".into();
        report.field = Some(name.clone());
        report.rel_l2 = Some(rel);
        report.sup = Some(sup);
        report.within = rel <= tolerance;
        return Ok(report);
    }
    let zs = match (&pa, &pb) {
        (Some(p), None) | (None, Some(p)) => {
            let (field_run, probe_run, fields) = if pa.is_some() { (&rb, &ra, &fb) } else { (&ra, &rb, &fa) };
            let Some((name, entry)) = fields.iter().find(|(k, _)| k == "u").or(fields.first()) else {
                return Err(CliError::config("neither run has a field to compare with the probes"));
            };
            report.kind = "field_vs_probes".into();
            report.field = Some(name.clone());
            field_vs_probes(&entry.grid, &field_run.values(name, entry)?, p, probe_run.grid())?
        }
        (Some(p), Some(q)) => {
            if p.len() != q.len() || p.iter().zip(q).any(|(x, y)| x.point != y.point) {
                return Err(CliError::config("the two runs have different probe points"));
            }
            report.kind = "probes".into();
            p.iter()
                .zip(q)
                .map(|(x, y)| z(x.mean - y.mean, (x.std_error.powi(2) + y.std_error.powi(2)).sqrt()))
                .collect()
        }
        (None, None) => return Err(CliError::config("the runs share no field and carry no probes")),
    };
    let max_z = zs.iter().copied().fold(0.0, f64::max);
    report.max_z = Some(max_z);
    report.within = max_z <= sigmas;
    report.z_scores = zs;
    Ok(report)
}
