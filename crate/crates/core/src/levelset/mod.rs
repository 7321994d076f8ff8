//! Numerical kernel for the Hamilton-Jacobi variational inequality.
//!
//! Time runs backward from `s = 0`. One step maps `V(., s)` to
//! `V(., s - dt) = V + dt * H_lf`, where the Lax-Friedrichs Hamiltonian is
//!
//! ```text
//! H_lf = H(x, (D- + D+) / 2) + sum_d alpha_d (D+_d - D-_d) / 2
//! ```
//!
//! and `H = min_d max_u grad . f`. The result is then clipped from above
//! (see [`TubeMode`]) so the zero sublevel set only grows.

pub(crate) mod solve;

use rayon::prelude::*;

pub use solve::{checkpoint_times, solve_full_brt, SolveOptions, SolveResult};

use crate::dynamics::{LatticeConfig, SubsystemHamiltonian};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueFunction};
use crate::interval::{Interval, IntervalUnion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    /// Heun's two-stage method.
    Rk2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dissipation {
    /// One alpha per dimension over the whole computation box.
    Global,
    /// Alpha re-bounded at every grid point from its own state and ranges.
    Local,
}

/// What the stepped value is clipped against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeMode {
    /// `min(V_new, V_prev)`: the running minimum, monotone in `|s|` by
    /// construction.
    RunningMin,
    /// `min(V_new, l)`: the classic freeze against the target function.
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub order: u8,
    pub integrator: Integrator,
    pub cfl: f64,
    pub dissipation: Dissipation,
    pub tube: TubeMode,
    pub lattice: LatticeConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            order: 1,
            integrator: Integrator::Euler,
            cfl: 0.5,
            dissipation: Dissipation::Local,
            tube: TubeMode::RunningMin,
            lattice: LatticeConfig::default(),
        }
    }
}

impl SchemeConfig {
    /// Parses comma-separated tokens over the defaults: `o1`/`o2`,
    /// `euler`/`rk2`, `glf`/`llf`, `running`/`target`.
    pub fn parse(text: &str) -> Result<SchemeConfig> {
        let mut s = SchemeConfig::default();
        for tok in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "o1" => s.order = 1,
                "o2" => s.order = 2,
                "euler" => s.integrator = Integrator::Euler,
                "rk2" => s.integrator = Integrator::Rk2,
                "glf" => s.dissipation = Dissipation::Global,
                "llf" => s.dissipation = Dissipation::Local,
                "running" => s.tube = TubeMode::RunningMin,
                "target" => s.tube = TubeMode::Target,
                _ => return Err(Error::Invalid(format!("unknown scheme token '{tok}'"))),
            }
        }
        Ok(s)
    }

    pub fn name(&self) -> String {
        format!(
            "o{},{},{},{}",
            self.order,
            match self.integrator {
                Integrator::Euler => "euler",
                Integrator::Rk2 => "rk2",
            },
            match self.dissipation {
                Dissipation::Global => "glf",
                Dissipation::Local => "llf",
            },
            match self.tube {
                TubeMode::RunningMin => "running",
                TubeMode::Target => "target",
            }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Invalid(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.order == 1 || self.order == 2) {
            return Err(Error::Invalid(format!("spatial order must be 1 or 2, got {}", self.order)));
        }
        Ok(())
    }
}

/// Ranges of one missing state, tabulated over the subsystem dimensions it
/// depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingTable {
    pub state: usize,
    /// Subsystem grid dimensions indexing the table, ascending.
    pub dims: Vec<usize>,
    /// Row-major over `dims`.
    pub ranges: Vec<IntervalUnion>,
    strides: Vec<usize>,
    hull: Interval,
}

impl MissingTable {
    pub fn new(state: usize, dims: Vec<usize>, grid: &Grid, ranges: Vec<IntervalUnion>) -> Result<Self> {
        let mut strides = vec![1; dims.len()];
        for t in (0..dims.len().saturating_sub(1)).rev() {
            strides[t] = strides[t + 1] * grid.count(dims[t + 1]);
        }
        let len: usize = dims.iter().map(|&d| grid.count(d)).product();
        if ranges.len() != len {
            return Err(Error::Invalid(format!("range table holds {} entries, expected {len}", ranges.len())));
        }
        let mut hull: Option<Interval> = None;
        for r in &ranges {
            match r.hull() {
                Some(h) => hull = Some(hull.map_or(h, |a| a.hull(h))),
                None => return Err(Error::Invalid("range table holds an empty union".into())),
            }
        }
        let hull = hull.ok_or_else(|| Error::Invalid("empty range table".into()))?;
        Ok(MissingTable { state, dims, ranges, strides, hull })
    }

    /// Range at a subsystem grid multi-index.
    #[inline]
    pub fn at(&self, idx: &[usize]) -> &IntervalUnion {
        let k: usize = self.dims.iter().zip(&self.strides).map(|(&d, &s)| idx[d] * s).sum();
        &self.ranges[k]
    }

    pub fn hull(&self) -> Interval {
        self.hull
    }
}

/// `dt = cfl / sum_d(alpha_d / dx_d)`; infinite when every alpha is zero.
pub fn cfl_dt(alphas: &[f64], grid: &Grid, cfl: f64) -> f64 {
    let rate: f64 = alphas.iter().enumerate().map(|(d, a)| a / grid.spacing(d)).sum();
    if rate > 0.0 {
        cfl / rate
    } else {
        f64::INFINITY
    }
}

/// Pointwise minimum of two value functions on the same grid.
pub fn apply_tube_min(v_new: &ValueFunction, v_final: &ValueFunction) -> Result<ValueFunction> {
    let v = v_new.pointwise_min(v_final)?;
    Ok(v.with_time(v_new.time()))
}

/// Raises every value to at least `floor`.
///
/// Linear extrapolation past the grid edges can pull values below the
/// infimum of the target function, which no exact solution reaches.
pub fn apply_floor(v: ValueFunction, floor: Option<f64>) -> ValueFunction {
    match floor {
        Some(f) if v.values().iter().any(|&x| x < f) => {
            let t = v.time();
            let grid = v.grid().clone();
            let vals = v.into_values().into_iter().map(|x| x.max(f)).collect();
            ValueFunction::from_parts(grid, vals, t)
        }
        _ => v,
    }
}

/// Value at `j + off` along `dim`, wrapping periodic axes and extrapolating
/// linearly past the ends of the others.
#[inline]
fn sample(vals: &[f64], grid: &Grid, base: usize, j: usize, dim: usize, off: isize) -> f64 {
    let n = grid.count(dim) as isize;
    let st = grid.stride(dim);
    let origin = base - j * st;
    let t = j as isize + off;
    if grid.is_periodic(dim) {
        let w = t.rem_euclid(n) as usize;
        return vals[origin + w * st];
    }
    if t < 0 {
        let (v0, v1) = (vals[origin], vals[origin + st]);
        v0 + t as f64 * (v1 - v0)
    } else if t >= n {
        let last = (n - 1) as usize;
        let (a, b) = (vals[origin + last * st], vals[origin + (last - 1) * st]);
        a + (t - (n - 1)) as f64 * (a - b)
    } else {
        vals[origin + t as usize * st]
    }
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Left and right one-sided derivatives at one point.
#[inline]
fn one_sided(vals: &[f64], grid: &Grid, flat: usize, j: usize, dim: usize, order: u8) -> (f64, f64) {
    let h = grid.spacing(dim);
    let at = |off| sample(vals, grid, flat, j, dim, off);
    let (vm, v0, vp) = (at(-1), at(0), at(1));
    let mut dm = (v0 - vm) / h;
    let mut dp = (vp - v0) / h;
    if order == 2 {
        let (vmm, vpp) = (at(-2), at(2));
        let c = (vp - 2.0 * v0 + vm) / (h * h);
        let l = (v0 - 2.0 * vm + vmm) / (h * h);
        let r = (vpp - 2.0 * vp + v0) / (h * h);
        dm += 0.5 * h * minmod(l, c);
        dp -= 0.5 * h * minmod(c, r);
    }
    (dm, dp)
}

/// Left and right derivative arrays along one dimension.
pub fn upwind_derivatives(v: &ValueFunction, dim: usize, order: u8) -> (Vec<f64>, Vec<f64>) {
    let g = v.grid();
    let mut idx = vec![0; g.dim()];
    let (mut left, mut right) = (Vec::with_capacity(g.len()), Vec::with_capacity(g.len()));
    for flat in 0..g.len() {
        g.unravel(flat, &mut idx);
        let (dm, dp) = one_sided(v.values(), g, flat, idx[dim], dim, order);
        left.push(dm);
        right.push(dp);
    }
    (left, right)
}

/// Per-dimension dissipation bounds over the whole grid box, with missing
/// states spanning the hull of their tables.
pub fn global_alphas(ham: &SubsystemHamiltonian, grid: &Grid, tables: &[MissingTable]) -> Vec<f64> {
    let model = ham.model();
    let mut bx: Vec<Interval> = model.bounds().iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect();
    for (d, &s) in ham.states().iter().enumerate() {
        bx[s] = Interval::new(grid.lower(d), grid.upper(d));
    }
    for t in tables {
        bx[t.state] = t.hull();
    }
    let mut out = vec![0.0; ham.states().len()];
    ham.alphas(&bx, &mut out);
    out
}

const CHUNK: usize = 512;

/// Time derivative `H_lf` of the backward update at every grid point.
fn lf_rate(
    v: &ValueFunction,
    ham: &SubsystemHamiltonian,
    tables: &[MissingTable],
    alphas: &[f64],
    scheme: &SchemeConfig,
) -> Result<Vec<f64>> {
    let grid = v.grid();
    let dim = grid.dim();
    let vals = v.values();
    let model = ham.model();
    let base_box: Vec<Interval> = model.bounds().iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect();
    let mut rate = vec![0.0; grid.len()];
    rate.par_chunks_mut(CHUNK).enumerate().for_each_init(
        || {
            (
                ham.scratch(),
                vec![0usize; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                base_box.clone(),
                vec![0.0; dim],
            )
        },
        |(hs, idx, z, pbar, dm, dp, bx, la), (c, out)| {
            let mut ranges: Vec<&IntervalUnion> = Vec::with_capacity(tables.len());
            for (k, o) in out.iter_mut().enumerate() {
                let flat = c * CHUNK + k;
                grid.unravel(flat, idx);
                for d in 0..dim {
                    z[d] = grid.coord(d, idx[d]);
                    let (a, b) = one_sided(vals, grid, flat, idx[d], d, scheme.order);
                    dm[d] = a;
                    dp[d] = b;
                    pbar[d] = 0.5 * (a + b);
                }
                ranges.clear();
                ranges.extend(tables.iter().map(|t| t.at(idx)));
                let h = ham.eval(z, pbar, &ranges, false, hs);
                let alpha: &[f64] = match scheme.dissipation {
                    Dissipation::Global => alphas,
                    Dissipation::Local => {
                        for (d, &s) in ham.states().iter().enumerate() {
                            bx[s] = Interval::point(z[d]);
                        }
                        for (t, r) in tables.iter().zip(&ranges) {
                            bx[t.state] = r.hull().expect("nonempty range");
                        }
                        ham.alphas(bx, la);
                        la
                    }
                };
                let diss: f64 = (0..dim).map(|d| alpha[d] * 0.5 * (dp[d] - dm[d])).sum();
                *o = h + diss;
            }
        },
    );
    if let Some(i) = rate.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteUpdate { index: i, time: v.time() });
    }
    Ok(rate)
}

/// One integrator step of size `dt` backward in time, before clipping.
///
/// `tables` follow the order of `ham.missing()`. `alphas` are the global
/// per-dimension bounds used for the CFL limit (and for dissipation under
/// [`Dissipation::Global`]).
pub fn lf_step(
    v: &ValueFunction,
    ham: &SubsystemHamiltonian,
    tables: &[MissingTable],
    alphas: &[f64],
    dt: f64,
    scheme: &SchemeConfig,
) -> Result<ValueFunction> {
    if tables.len() != ham.missing().len() || tables.iter().zip(ham.missing()).any(|(t, &m)| t.state != m) {
        return Err(Error::Invalid("range tables do not match the subsystem's missing states".into()));
    }
    if v.grid().dim() != ham.states().len() {
        return Err(Error::Invalid("grid dimension differs from subsystem size".into()));
    }
    let t_new = v.time() - dt;
    let euler = |v: &ValueFunction| -> Result<Vec<f64>> {
        let r = lf_rate(v, ham, tables, alphas, scheme)?;
        Ok(v.values().iter().zip(&r).map(|(a, b)| a + dt * b).collect())
    };
    let out = match scheme.integrator {
        Integrator::Euler => euler(v)?,
        Integrator::Rk2 => {
            let v1 = ValueFunction::from_parts(v.grid().clone(), euler(v)?, t_new);
            let v2 = euler(&v1)?;
            v.values().iter().zip(&v2).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    };
    if let Some(i) = out.iter().position(|x: &f64| !x.is_finite()) {
        return Err(Error::NonFiniteUpdate { index: i, time: t_new });
    }
    Ok(ValueFunction::from_parts(v.grid().clone(), out, t_new))
}
