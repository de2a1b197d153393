//! Grid functions and their on-disk formats.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use super::grid::{Grid, NodeClass};
use crate::error::{KfpError, Result};
use crate::geometry::Point;

/// One value per grid node. Values at inactive nodes are kept at zero.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl PartialEq for DiscreteField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_layout(&other.grid) && self.values == other.values
    }
}

const MAGIC: &[u8; 4] = b"KFPF";

impl DiscreteField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KfpError::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KfpError::InvalidInput(format!("non-finite value at node {i}")));
        }
        Ok(DiscreteField { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        DiscreteField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    /// Samples `f` at every active node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|n| {
                if grid.class(n) == NodeClass::Inactive {
                    0.0
                } else {
                    f(&grid.point(n))
                }
            })
            .collect();
        DiscreteField { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same(&self, other: &DiscreteField) -> Result<()> {
        if !self.grid.same_layout(&other.grid) {
            return Err(KfpError::GridMismatch("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn sub(&self, other: &DiscreteField) -> Result<DiscreteField> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(DiscreteField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn add(&self, other: &DiscreteField) -> Result<DiscreteField> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(DiscreteField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn scale(&self, c: f64) -> DiscreteField {
        DiscreteField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Space-time trapezoid `L²` norm.
    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_where(|_| true)
    }

    /// `L²` norm restricted to nodes whose class passes `keep`.
    pub fn l2_norm_where(&self, keep: impl Fn(NodeClass) -> bool) -> f64 {
        (0..self.len())
            .filter(|&n| keep(self.grid.class(n)))
            .map(|n| self.grid.weight(n) * self.values[n] * self.values[n])
            .sum::<f64>()
            .sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `(min, max)` over nodes whose class passes `keep`.
    pub fn range_where(&self, keep: impl Fn(NodeClass) -> bool) -> (f64, f64) {
        (0..self.len())
            .filter(|&n| keep(self.grid.class(n)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), n| {
                (lo.min(self.values[n]), hi.max(self.values[n]))
            })
    }

    /// Node counts per axis, `X` then `Y` then `t`.
    pub fn dims(&self) -> Vec<usize> {
        let g = &self.grid;
        g.x_axes
            .iter()
            .chain(&g.y_axes)
            .map(|a| a.len())
            .chain([g.n_t()])
            .collect()
    }

    /// CSV with one row per active node: `x1..xm,y1..ym,t,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let m = self.grid.m;
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        let mut header: Vec<String> = (1..=m).map(|i| format!("x{i}")).collect();
        header.extend((1..=m).map(|i| format!("y{i}")));
        header.push("t".into());
        header.push("value".into());
        writeln!(w, "{}", header.join(","))?;
        for n in 0..self.len() {
            if self.grid.class(n) == NodeClass::Inactive {
                continue;
            }
            let p = self.grid.point(n);
            let cols: Vec<String> = p
                .to_flat()
                .iter()
                .chain([&self.values[n]])
                .map(|v| format!("{v:e}"))
                .collect();
            writeln!(w, "{}", cols.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary layout: `KFPF`, `u64` axis count, `u64` per-axis node counts,
    /// then all node values as little-endian `f64` in grid order.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        let dims = self.dims();
        w.write_all(&(dims.len() as u64).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a binary field written for `grid`.
    pub fn read_binary(path: &Path, grid: Arc<Grid>) -> Result<DiscreteField> {
        let (dims, values) = read_binary_raw(path)?;
        let expected = DiscreteField::zeros(grid.clone()).dims();
        if dims != expected {
            return Err(KfpError::GridMismatch(format!("file dims {dims:?}, grid dims {expected:?}")));
        }
        DiscreteField::new(grid, values)
    }
}

/// Dimensions and raw values of a binary field file.
pub fn read_binary_raw(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(KfpError::Io("not a field file".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let nd = u64::from_le_bytes(b8) as usize;
    let mut dims = Vec::with_capacity(nd);
    for _ in 0..nd {
        r.read_exact(&mut b8)?;
        dims.push(u64::from_le_bytes(b8) as usize);
    }
    let count: usize = dims.iter().product();
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    if r.fill_buf()?.is_empty() {
        Ok((dims, values))
    } else {
        Err(KfpError::Io("trailing bytes in field file".into()))
    }
}
