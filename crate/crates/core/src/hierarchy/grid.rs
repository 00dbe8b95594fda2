use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispersal::DispersalKernel;
use crate::error::{Error, Result};

/// Uniform periodic grid on `[0, L)^d` with `N` points per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    side: f64,
    points: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, side: f64, points: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("model.dim", "must be >= 1"));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::invalid(
                "model.side",
                format!("must be positive, got {side}"),
            ));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::invalid(
                "solver.grid_points",
                format!("must be a power of two >= 8, got {points}"),
            ));
        }
        Ok(Self { dim, side, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.points as f64
    }

    /// Number of cells, `N^d`.
    pub fn cells(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    /// Grid spacing must resolve the dispersal kernel along every direction.
    pub fn check_resolution(&self, kernel: &DispersalKernel) -> Result<()> {
        if kernel.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: kernel.dim(),
            });
        }
        let scale = kernel.min_std();
        if self.spacing() >= scale {
            return Err(Error::invalid(
                "solver.grid_points",
                format!(
                    "grid spacing {} must be below the dispersal length scale {scale}",
                    self.spacing()
                ),
            ));
        }
        Ok(())
    }

    /// Per-axis indices of a cell, axis 0 most significant.
    pub fn coords(&self, cell: usize, out: &mut [usize]) {
        let mut rest = cell;
        for k in (0..self.dim).rev() {
            out[k] = rest % self.points;
            rest /= self.points;
        }
    }

    pub fn cell(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, c| acc * self.points + c)
    }

    pub fn position(&self, cell: usize) -> Vec<f64> {
        let mut c = vec![0; self.dim];
        self.coords(cell, &mut c);
        c.iter().map(|&i| i as f64 * self.spacing()).collect()
    }

    /// Cell of `a - b` on the torus.
    pub fn sub(&self, a: usize, b: usize) -> usize {
        let n = self.points;
        let (mut ra, mut rb, mut out, mut scale) = (a, b, 0, 1);
        for _ in 0..self.dim {
            let d = (ra % n + n - rb % n) % n;
            out += d * scale;
            scale *= n;
            ra /= n;
            rb /= n;
        }
        out
    }

    /// Cell of `a + b` on the torus.
    pub fn add(&self, a: usize, b: usize) -> usize {
        let n = self.points;
        let (mut ra, mut rb, mut out, mut scale) = (a, b, 0, 1);
        for _ in 0..self.dim {
            out += ((ra % n + rb % n) % n) * scale;
            scale *= n;
            ra /= n;
            rb /= n;
        }
        out
    }

    pub fn neg(&self, a: usize) -> usize {
        self.sub(0, a)
    }

    /// Minimal-image Euclidean length of the displacement stored in `cell`.
    pub fn torus_norm(&self, cell: usize) -> f64 {
        let n = self.points;
        let mut rest = cell;
        let mut sum = 0.0;
        for _ in 0..self.dim {
            let i = rest % n;
            rest /= n;
            let j = i.min(n - i) as f64 * self.spacing();
            sum += j * j;
        }
        sum.sqrt()
    }

    /// Signed integer frequency per axis, in `[-N/2, N/2)`.
    pub fn signed_index(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i >= n / 2 {
            i - n
        } else {
            i
        }
    }

    /// Angular frequency `2 pi k / L` per axis of a frequency cell.
    pub fn frequency(&self, cell: usize) -> Vec<f64> {
        let mut c = vec![0; self.dim];
        self.coords(cell, &mut c);
        c.iter()
            .map(|&i| 2.0 * std::f64::consts::PI * self.signed_index(i) as f64 / self.side)
            .collect()
    }

    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }
}

/// Storage layout of a correlation function of order `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Spatially homogeneous: a function of the marks only.
    MarkOnly,
    /// Translation invariant: a function of `x_i - x_n`, `i < n`, and the marks.
    Difference,
    /// Values on `(grid x marks)^n`.
    Full,
}

impl Representation {
    /// Number of spatial slots (each a `d`-dimensional grid) for order `n`.
    pub fn spatial_slots(self, order: usize) -> usize {
        match self {
            Representation::MarkOnly => 0,
            Representation::Difference => order.saturating_sub(1),
            Representation::Full => order,
        }
    }
}

/// Order-`n` correlation function sampled on a torus grid and a mark set.
///
/// Values are stored row-major with the spatial slots first (slot 0 most
/// significant, each slot a grid cell) followed by the `n` mark indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    order: usize,
    repr: Representation,
    grid: Option<TorusGrid>,
    marks: usize,
    values: Vec<f64>,
}

/// Inhomogeneous term `f^(n)` of the hierarchy; same layout as a correlation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerm(pub CorrelationGrid);

impl std::ops::Deref for SourceTerm {
    type Target = CorrelationGrid;
    fn deref(&self) -> &CorrelationGrid {
        &self.0
    }
}

pub(crate) fn storage_len(
    order: usize,
    repr: Representation,
    grid: Option<&TorusGrid>,
    marks: usize,
) -> usize {
    let spatial = grid
        .map(|g| g.cells().pow(repr.spatial_slots(order) as u32))
        .unwrap_or(1);
    spatial * marks.pow(order as u32)
}

impl CorrelationGrid {
    pub fn from_values(
        order: usize,
        repr: Representation,
        grid: Option<TorusGrid>,
        marks: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if marks == 0 {
            return Err(Error::invalid("marks", "at least one mark"));
        }
        match repr {
            Representation::MarkOnly => {}
            Representation::Difference if order < 2 => {
                return Err(Error::Representation(
                    "difference representation needs order >= 2".into(),
                ))
            }
            _ if grid.is_none() => {
                return Err(Error::Representation(format!(
                    "{repr:?} representation needs a grid"
                )))
            }
            _ => {}
        }
        let grid = if repr == Representation::MarkOnly {
            None
        } else {
            grid
        };
        let expected = storage_len(order, repr, grid.as_ref(), marks);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self {
            order,
            repr,
            grid,
            marks,
            values,
        })
    }

    pub fn constant(
        order: usize,
        repr: Representation,
        grid: Option<TorusGrid>,
        marks: usize,
        value: f64,
    ) -> Result<Self> {
        let grid_ref = if repr == Representation::MarkOnly {
            None
        } else {
            grid
        };
        let len = storage_len(order, repr, grid_ref.as_ref(), marks);
        Self::from_values(order, repr, grid, marks, vec![value; len])
    }

    /// `k^(0) = 1`.
    pub fn unit(marks: usize) -> Self {
        Self {
            order: 0,
            repr: Representation::MarkOnly,
            grid: None,
            marks,
            values: vec![1.0],
        }
    }

    /// Homogeneous order-1 function from per-mark values.
    pub fn mark_vector(values: Vec<f64>) -> Self {
        Self {
            order: 1,
            repr: Representation::MarkOnly,
            grid: None,
            marks: values.len(),
            values,
        }
    }

    /// Homogeneous `prod_i k1(s_i)` of order `n`.
    pub fn product(k1: &[f64], order: usize) -> Self {
        let m = k1.len();
        let len = m.pow(order as u32);
        let values = (0..len)
            .map(|idx| {
                let mut rest = idx;
                let mut prod = 1.0;
                for _ in 0..order {
                    prod *= k1[rest % m];
                    rest /= m;
                }
                prod
            })
            .collect();
        Self {
            order,
            repr: Representation::MarkOnly,
            grid: None,
            marks: m,
            values,
        }
    }

    /// Value-less handle carrying only the layout, for index decoding.
    pub(crate) fn layout(
        order: usize,
        repr: Representation,
        grid: Option<TorusGrid>,
        marks: usize,
    ) -> Self {
        Self {
            order,
            repr,
            grid,
            marks,
            values: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn representation(&self) -> Representation {
        self.repr
    }

    pub fn grid(&self) -> Option<&TorusGrid> {
        self.grid.as_ref()
    }

    pub fn marks(&self) -> usize {
        self.marks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn spatial_slots(&self) -> usize {
        self.repr.spatial_slots(self.order)
    }

    pub fn spatial_len(&self) -> usize {
        self.grid
            .map(|g| g.cells().pow(self.spatial_slots() as u32))
            .unwrap_or(1)
    }

    pub fn mark_len(&self) -> usize {
        self.marks.pow(self.order as u32)
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            values,
            ..self.clone()
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.order == other.order
            && self.repr == other.repr
            && self.marks == other.marks
            && self.grid == other.grid
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_layout(other) {
            return Err(Error::Representation(
                "grids differ in order, representation, marks or grid".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `sup |k| / prod_i q(s_i)`.
    pub fn weighted_sup(&self, q: &[f64]) -> f64 {
        let weights = mark_products(q, self.order);
        let ml = self.mark_len();
        self.values
            .iter()
            .enumerate()
            .fold(0.0, |m, (i, v)| m.max(v.abs() / weights[i % ml]))
    }

    /// Decodes a flat index into one grid cell per point and one mark per point.
    ///
    /// For the difference layout the last point sits at cell 0.
    pub fn decode(&self, index: usize, cells: &mut [usize], marks: &mut [usize]) {
        let ml = self.mark_len();
        let mut mark_rest = index % ml;
        for s in marks[..self.order].iter_mut().rev() {
            *s = mark_rest % self.marks;
            mark_rest /= self.marks;
        }
        let mut spatial = index / ml;
        let slots = self.spatial_slots();
        cells[..self.order].iter_mut().for_each(|c| *c = 0);
        if let Some(g) = &self.grid {
            let nc = g.cells();
            for c in cells[..slots].iter_mut().rev() {
                *c = spatial % nc;
                spatial /= nc;
            }
        }
    }

    /// Value at points given as grid cells and marks (one per point).
    pub fn eval(&self, cells: &[usize], marks: &[usize]) -> f64 {
        debug_assert_eq!(cells.len(), self.order);
        let mark_index = marks.iter().fold(0, |acc, s| acc * self.marks + s);
        let spatial = match (self.repr, &self.grid) {
            (Representation::MarkOnly, _) | (_, None) => 0,
            (Representation::Difference, Some(g)) => {
                let last = cells[self.order - 1];
                let nc = g.cells();
                cells[..self.order - 1]
                    .iter()
                    .fold(0, |acc, &c| acc * nc + g.sub(c, last))
            }
            (Representation::Full, Some(g)) => {
                let nc = g.cells();
                cells.iter().fold(0, |acc, &c| acc * nc + c)
            }
        };
        self.values[spatial * self.mark_len() + mark_index]
    }

    /// Re-samples into the full layout on `grid` (needed for mark-only inputs).
    pub fn to_full(&self, grid: TorusGrid) -> Result<Self> {
        if let Some(g) = &self.grid {
            if *g != grid {
                return Err(Error::Representation("grid mismatch".into()));
            }
        }
        let mut out = Self::constant(
            self.order,
            Representation::Full,
            Some(grid),
            self.marks,
            0.0,
        )?;
        let mut cells = vec![0; self.order];
        let mut marks = vec![0; self.order];
        for i in 0..out.values.len() {
            out.decode(i, &mut cells, &mut marks);
            out.values[i] = self.eval(&cells, &marks);
        }
        Ok(out)
    }

    /// Writes `coordinates..., marks..., value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let slots = self.spatial_slots();
        let dim = self.grid.map(|g| g.dim()).unwrap_or(0);
        let prefix = if self.repr == Representation::Difference {
            "u"
        } else {
            "x"
        };
        let mut header = Vec::new();
        for i in 0..slots {
            for k in 0..dim {
                header.push(format!("{prefix}{}_{}", i + 1, k + 1));
            }
        }
        for i in 0..self.order {
            header.push(format!("mark_{}", i + 1));
        }
        header.push("value".into());
        w.write_record(&header)?;

        let mut cells = vec![0; self.order.max(1)];
        let mut marks = vec![0; self.order.max(1)];
        let mut record = Vec::with_capacity(header.len());
        for (i, v) in self.values.iter().enumerate() {
            self.decode(i, &mut cells, &mut marks);
            record.clear();
            if let Some(g) = &self.grid {
                for &c in &cells[..slots] {
                    record.extend(g.position(c).iter().map(|x| x.to_string()));
                }
            }
            record.extend(marks[..self.order].iter().map(|s| s.to_string()));
            record.push(v.to_string());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Binary dump: `b"CHK1"`, then little-endian `u32 n, u32 d, u32 N,
    /// f64 L, u32 m`, then the values as `f64`. Mark-only grids store
    /// `d = N = 0` and `L = 0`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let (d, n, side) = match &self.grid {
            Some(g) => (g.dim() as u32, g.points() as u32, g.side()),
            None => (0, 0, 0.0),
        };
        w.write_all(MAGIC)?;
        w.write_all(&(self.order as u32).to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
        w.write_all(&n.to_le_bytes())?;
        w.write_all(&side.to_le_bytes())?;
        w.write_all(&(self.marks as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// Inverse of [`Self::write_binary`]; the layout is inferred from the value count.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() < 4 || &buf[..4] != MAGIC {
            return Err(Error::Format("missing CHK1 header".into()));
        }
        if buf.len() < 28 {
            return Err(Error::Format("truncated header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap()) as usize;
        let order = u32_at(4);
        let d = u32_at(8);
        let n = u32_at(12);
        let side = f64::from_le_bytes(buf[16..24].try_into().unwrap());
        let marks = u32_at(24);
        let payload = &buf[28..];
        if payload.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64".into()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if n == 0 {
            return Self::from_values(order, Representation::MarkOnly, None, marks, values);
        }
        let grid = TorusGrid::new(d, side, n)?;
        for repr in [Representation::Difference, Representation::Full] {
            if (repr != Representation::Difference || order >= 2)
                && storage_len(order, repr, Some(&grid), marks) == values.len()
            {
                return Self::from_values(order, repr, Some(grid), marks, values);
            }
        }
        Err(Error::Format(format!(
            "{} values do not match any layout of order {order}",
            values.len()
        )))
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_binary(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const MAGIC: &[u8; 4] = b"CHK1";

/// `prod_i q(s_i)` for every mark multi-index of length `order`, row-major.
pub(crate) fn mark_products(q: &[f64], order: usize) -> Vec<f64> {
    CorrelationGrid::product(q, order).values
}
