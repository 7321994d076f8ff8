//! Rectangular grids and dense value functions.
//!
//! A [`Grid`] discretizes a box in a labelled state subspace. A
//! [`ValueFunction`] stores one scalar per grid point in row-major order with
//! the last dimension varying fastest. Periodic dimensions hold `counts`
//! samples covering one period, the right endpoint excluded.
//!
//! Grids that share a dimension label are expected to agree exactly on that
//! axis (bounds, count and periodicity), so that projection, back-projection
//! and cross-grid lookups are pure index operations.

mod io;

use std::collections::BTreeMap;

pub use io::{read_value, write_csv, write_value};

use crate::error::{Error, Result};

/// Index distance below which a fractional grid coordinate is treated as
/// lying on a grid line.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    periodic: Vec<bool>,
    labels: Vec<String>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new<S: AsRef<str>>(
        bounds: &[(f64, f64)],
        counts: &[usize],
        periodic: &[bool],
        labels: &[S],
    ) -> Result<Grid> {
        let dim = bounds.len();
        if dim == 0 {
            return Err(Error::Grid("grid needs at least one dimension".into()));
        }
        if counts.len() != dim || periodic.len() != dim || labels.len() != dim {
            return Err(Error::Grid(format!(
                "inconsistent dimension: {} bounds, {} counts, {} periodic flags, {} labels",
                dim,
                counts.len(),
                periodic.len(),
                labels.len()
            )));
        }
        let labels: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains(|c: char| c.is_whitespace() || c == ',' || c == '=') {
                return Err(Error::Grid(format!("invalid label '{l}'")));
            }
            if labels[..i].contains(l) {
                return Err(Error::Grid(format!("duplicate label '{l}'")));
            }
        }
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        let mut spacing = Vec::with_capacity(dim);
        for i in 0..dim {
            let (lo, hi) = bounds[i];
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(Error::Grid(format!(
                    "dimension '{}' has invalid bounds [{lo}, {hi}]",
                    labels[i]
                )));
            }
            if counts[i] < 3 {
                return Err(Error::Grid(format!(
                    "dimension '{}' needs at least 3 points, got {}",
                    labels[i], counts[i]
                )));
            }
            let cells = if periodic[i] { counts[i] } else { counts[i] - 1 };
            lower.push(lo);
            upper.push(hi);
            spacing.push((hi - lo) / cells as f64);
        }
        let mut strides = vec![1usize; dim];
        for i in (0..dim - 1).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        Ok(Grid {
            lower,
            upper,
            counts: counts.to_vec(),
            periodic: periodic.to_vec(),
            labels,
            spacing,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, d: usize) -> &str {
        &self.labels[d]
    }

    pub fn lower(&self, d: usize) -> f64 {
        self.lower[d]
    }

    pub fn upper(&self, d: usize) -> f64 {
        self.upper[d]
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }

    pub fn count(&self, d: usize) -> usize {
        self.counts[d]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn is_periodic(&self, d: usize) -> bool {
        self.periodic[d]
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn spacing(&self, d: usize) -> f64 {
        self.spacing[d]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn stride(&self, d: usize) -> usize {
        self.strides[d]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn period(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    pub fn coord(&self, d: usize, j: usize) -> f64 {
        self.lower[d] + j as f64 * self.spacing[d]
    }

    pub fn coords(&self, d: usize) -> Vec<f64> {
        (0..self.counts[d]).map(|j| self.coord(d, j)).collect()
    }

    pub fn dim_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for d in 0..self.dim() {
            out[d] = flat / self.strides[d];
            flat %= self.strides[d];
        }
    }

    /// Coordinates of the grid point with the given flat index.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.unravel(flat, &mut idx);
        idx.iter().enumerate().map(|(d, &j)| self.coord(d, j)).collect()
    }

    /// Compact size signature such as `15x15x21`.
    pub fn signature(&self) -> String {
        self.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("x")
    }

    /// True when axis `d` of `self` and axis `od` of `other` are identical.
    pub fn same_axis(&self, d: usize, other: &Grid, od: usize) -> bool {
        self.labels[d] == other.labels[od]
            && self.lower[d] == other.lower[od]
            && self.upper[d] == other.upper[od]
            && self.counts[d] == other.counts[od]
            && self.periodic[d] == other.periodic[od]
    }

    /// Sub-grid over the listed labels, kept in this grid's dimension order.
    pub fn restrict<S: AsRef<str>>(&self, keep: &[S]) -> Result<Grid> {
        let dims = self.dims_for(keep)?;
        self.restrict_dims(&dims)
    }

    pub(crate) fn restrict_dims(&self, dims: &[usize]) -> Result<Grid> {
        let bounds: Vec<_> = dims.iter().map(|&d| (self.lower[d], self.upper[d])).collect();
        let counts: Vec<_> = dims.iter().map(|&d| self.counts[d]).collect();
        let periodic: Vec<_> = dims.iter().map(|&d| self.periodic[d]).collect();
        let labels: Vec<_> = dims.iter().map(|&d| self.labels[d].clone()).collect();
        Grid::new(&bounds, &counts, &periodic, &labels)
    }

    /// Sorted dimension indices for a label set; errors on unknown labels.
    fn dims_for<S: AsRef<str>>(&self, keep: &[S]) -> Result<Vec<usize>> {
        let mut dims = Vec::with_capacity(keep.len());
        for l in keep {
            let l = l.as_ref();
            let d = self
                .dim_of(l)
                .ok_or_else(|| Error::Invalid(format!("label '{l}' is not a grid dimension")))?;
            if !dims.contains(&d) {
                dims.push(d);
            }
        }
        dims.sort_unstable();
        Ok(dims)
    }

    /// Wraps a periodic coordinate into `[lower, upper)`.
    pub fn wrap(&self, d: usize, x: f64) -> f64 {
        if self.periodic[d] {
            let p = self.period(d);
            let w = self.lower[d] + (x - self.lower[d]).rem_euclid(p);
            if w >= self.upper[d] {
                self.lower[d]
            } else {
                w
            }
        } else {
            x
        }
    }

    /// Whether `x` lies inside the computation bounds of dimension `d`.
    pub fn contains_coord(&self, d: usize, x: f64) -> bool {
        if self.periodic[d] {
            return x.is_finite();
        }
        let tol = SNAP_TOL * self.spacing[d];
        x >= self.lower[d] - tol && x <= self.upper[d] + tol
    }

    /// Nearest grid index along `d` and the distance to it.
    pub fn nearest_index(&self, d: usize, x: f64) -> (usize, f64) {
        let x = self.wrap(d, x);
        let t = (x - self.lower[d]) / self.spacing[d];
        let n = self.counts[d];
        let j = if self.periodic[d] {
            (t.round() as i64).rem_euclid(n as i64) as usize
        } else {
            (t.round().max(0.0) as usize).min(n - 1)
        };
        let mut dist = (self.coord(d, j) - x).abs();
        if self.periodic[d] {
            dist = dist.min(self.period(d) - dist);
        }
        (j, dist)
    }

    /// Cell index and fractional offset of `x` along `d`.
    ///
    /// Returns `(j, frac, clamped)`; the corner pair is `(j, j+1)` (wrapped for
    /// periodic axes).
    fn locate(&self, d: usize, x: f64) -> (usize, f64, bool) {
        let n = self.counts[d];
        if self.periodic[d] {
            let x = self.wrap(d, x);
            let mut t = (x - self.lower[d]) / self.spacing[d];
            let r = t.round();
            if (t - r).abs() < SNAP_TOL {
                t = r;
            }
            let mut j = t.floor() as usize;
            let mut frac = t - j as f64;
            if j >= n {
                j = 0;
                frac = 0.0;
            }
            return (j, frac, false);
        }
        let mut t = (x - self.lower[d]) / self.spacing[d];
        let r = t.round();
        if (t - r).abs() < SNAP_TOL {
            t = r;
        }
        let max_t = (n - 1) as f64;
        let clamped = t < -SNAP_TOL || t > max_t + SNAP_TOL;
        let t = t.clamp(0.0, max_t);
        let j = (t.floor() as usize).min(n - 2);
        (j, t - j as f64, clamped)
    }
}

/// A dense scalar field over a [`Grid`] at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    grid: Grid,
    values: Vec<f64>,
    time: f64,
}

impl ValueFunction {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<ValueFunction> {
        if values.len() != grid.len() {
            return Err(Error::Invalid(format!(
                "value array holds {} entries, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        if !time.is_finite() {
            return Err(Error::Invalid(format!("time {time} is not finite")));
        }
        Ok(ValueFunction { grid, values, time })
    }

    /// Constructor for arrays already known to be finite and of the right length.
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>, time: f64) -> ValueFunction {
        debug_assert_eq!(values.len(), grid.len());
        ValueFunction { grid, values, time }
    }

    /// Tabulates `f` at every grid point.
    pub fn from_fn(grid: Grid, time: f64, f: impl Fn(&[f64]) -> f64) -> Result<ValueFunction> {
        let mut idx = vec![0usize; grid.dim()];
        let mut z = vec![0.0; grid.dim()];
        let mut values = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            grid.unravel(flat, &mut idx);
            for d in 0..grid.dim() {
                z[d] = grid.coord(d, idx[d]);
            }
            values.push(f(&z));
        }
        ValueFunction::new(grid, values, time)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> ValueFunction {
        self.time = time;
        self
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.grid.flat_index(idx)]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of grid points in the zero sublevel set.
    pub fn sublevel_count(&self) -> usize {
        self.values.iter().filter(|&&v| v <= 0.0).count()
    }

    /// Multilinear interpolation; errors when a non-periodic coordinate is out
    /// of bounds.
    pub fn interpolate(&self, z: &[f64]) -> Result<f64> {
        let (v, clamped) = self.interpolate_clamped(z)?;
        if clamped {
            return Err(Error::OutOfBounds(z.to_vec()));
        }
        Ok(v)
    }

    /// Multilinear interpolation with out-of-bounds coordinates clamped onto
    /// the boundary. The flag reports whether clamping happened.
    pub fn interpolate_clamped(&self, z: &[f64]) -> Result<(f64, bool)> {
        let g = &self.grid;
        let dim = g.dim();
        if z.len() != dim {
            return Err(Error::Invalid(format!(
                "query has {} coordinates, grid has {dim} dimensions",
                z.len()
            )));
        }
        let mut base = [0usize; 16];
        let mut next = [0usize; 16];
        let mut frac = [0.0f64; 16];
        if dim > 16 {
            return Err(Error::Invalid("interpolation supports at most 16 dimensions".into()));
        }
        let mut clamped = false;
        for d in 0..dim {
            let (j, f, c) = g.locate(d, z[d]);
            clamped |= c;
            base[d] = j;
            next[d] = if j + 1 == g.count(d) { 0 } else { j + 1 };
            frac[d] = f;
        }
        let mut acc = 0.0;
        'corner: for corner in 0u32..(1u32 << dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for d in 0..dim {
                let hi = corner >> (dim - 1 - d) & 1 == 1;
                let wd = if hi { frac[d] } else { 1.0 - frac[d] };
                if wd == 0.0 {
                    continue 'corner;
                }
                w *= wd;
                flat += if hi { next[d] } else { base[d] } * g.stride(d);
            }
            acc += w * self.values[flat];
        }
        Ok((acc, clamped))
    }

    /// Minimum over every dimension not listed in `keep`.
    pub fn project_min<S: AsRef<str>>(&self, keep: &[S]) -> Result<ValueFunction> {
        if keep.is_empty() {
            return Err(Error::Invalid("projection must keep at least one dimension".into()));
        }
        let dims = self.grid.dims_for(keep)?;
        self.project_min_dims(&dims)
    }

    pub(crate) fn project_min_dims(&self, dims: &[usize]) -> Result<ValueFunction> {
        let g = &self.grid;
        if dims.len() == g.dim() {
            return Ok(self.clone());
        }
        let out_grid = g.restrict_dims(dims)?;
        let mut out = vec![f64::INFINITY; out_grid.len()];
        // stride of each input dimension in the output array (0 when dropped)
        let mut out_stride = vec![0usize; g.dim()];
        for (k, &d) in dims.iter().enumerate() {
            out_stride[d] = out_grid.stride(k);
        }
        let mut idx = vec![0usize; g.dim()];
        for (flat, &v) in self.values.iter().enumerate() {
            g.unravel(flat, &mut idx);
            let o: usize = idx.iter().zip(&out_stride).map(|(i, s)| i * s).sum();
            if v < out[o] {
                out[o] = v;
            }
        }
        Ok(ValueFunction::from_parts(out_grid, out, self.time))
    }

    /// Cylindrical extension onto `target`: constant along every dimension of
    /// `target` absent from this function's grid.
    pub fn back_project(&self, target: &Grid) -> Result<ValueFunction> {
        let g = &self.grid;
        let mut in_stride = vec![0usize; target.dim()];
        for d in 0..g.dim() {
            let label = g.label(d);
            let td = target.dim_of(label).ok_or_else(|| Error::DimMismatch {
                dim: label.to_string(),
                reason: "absent from the target grid".into(),
            })?;
            if !g.same_axis(d, target, td) {
                return Err(Error::DimMismatch {
                    dim: label.to_string(),
                    reason: "bounds, counts or periodicity differ".into(),
                });
            }
            in_stride[td] = g.stride(d);
        }
        let mut idx = vec![0usize; target.dim()];
        let values = (0..target.len())
            .map(|flat| {
                target.unravel(flat, &mut idx);
                let i: usize = idx.iter().zip(&in_stride).map(|(i, s)| i * s).sum();
                self.values[i]
            })
            .collect();
        Ok(ValueFunction::from_parts(target.clone(), values, self.time))
    }

    /// Lower-dimensional slice with the listed coordinates fixed at their
    /// nearest grid lines.
    pub fn extract_slice(&self, spec: &SliceSpec) -> Result<Slice> {
        let g = &self.grid;
        if spec.fixed.is_empty() {
            return Err(Error::Invalid("slice must fix at least one dimension".into()));
        }
        if spec.fixed.len() >= g.dim() {
            return Err(Error::Invalid(
                "slice fixes every dimension; use interpolation for point queries".into(),
            ));
        }
        let mut fixed_idx = vec![None; g.dim()];
        let mut snaps = Vec::new();
        for (label, &x) in &spec.fixed {
            let d = g
                .dim_of(label)
                .ok_or_else(|| Error::Invalid(format!("slice label '{label}' not in grid")))?;
            if !g.contains_coord(d, x) {
                return Err(Error::Invalid(format!(
                    "slice value {x} for '{label}' outside [{}, {}]",
                    g.lower(d),
                    g.upper(d)
                )));
            }
            let (j, dist) = g.nearest_index(d, x);
            fixed_idx[d] = Some(j);
            snaps.push(Snap {
                label: label.clone(),
                requested: x,
                snapped: g.coord(d, j),
                distance: dist,
            });
        }
        let free: Vec<usize> = (0..g.dim()).filter(|&d| fixed_idx[d].is_none()).collect();
        let out_grid = g.restrict_dims(&free)?;
        let offset: usize = fixed_idx
            .iter()
            .enumerate()
            .filter_map(|(d, j)| j.map(|j| j * g.stride(d)))
            .sum();
        let mut idx = vec![0usize; out_grid.dim()];
        let values = (0..out_grid.len())
            .map(|flat| {
                out_grid.unravel(flat, &mut idx);
                let i: usize = free.iter().zip(&idx).map(|(&d, &j)| j * g.stride(d)).sum();
                self.values[offset + i]
            })
            .collect();
        Ok(Slice {
            value: ValueFunction::from_parts(out_grid, values, self.time),
            snaps,
        })
    }

    /// Pointwise minimum with a field on the same grid.
    pub fn pointwise_min(&self, other: &ValueFunction) -> Result<ValueFunction> {
        if self.grid != other.grid {
            return Err(Error::Invalid("pointwise minimum of fields on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.min(*b)).collect();
        Ok(ValueFunction::from_parts(self.grid.clone(), values, self.time))
    }
}

/// Coordinates to hold fixed when extracting a slice.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceSpec {
    pub fixed: BTreeMap<String, f64>,
}

impl SliceSpec {
    pub fn new() -> SliceSpec {
        SliceSpec::default()
    }

    pub fn fix(mut self, label: &str, value: f64) -> SliceSpec {
        self.fixed.insert(label.to_string(), value);
        self
    }
}

/// How a requested slice coordinate was moved onto the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Snap {
    pub label: String,
    pub requested: f64,
    pub snapped: f64,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct Slice {
    pub value: ValueFunction,
    pub snaps: Vec<Snap>,
}
