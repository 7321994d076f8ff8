//! Min-max extremization of `grad . f` over inputs and missing-state ranges.
//!
//! Free variables are controls (maximized), disturbances and missing states
//! (minimized). Terms sharing a free variable are grouped into blocks; since
//! the blocks have disjoint variables, min-max of the sum is the sum of the
//! per-block min-max values. Inside a block the search is exhaustive over
//! candidate lists: interval endpoints for affine variables, a fixed lattice
//! otherwise.

use std::collections::BTreeMap;

use super::{DynamicsModel, Var};
use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalUnion};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMode {
    Value,
    ArgControl,
    ArgDisturbance,
}

/// Sample counts used for inputs that do not enter affinely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeConfig {
    /// Evenly spaced samples across a non-affine control or disturbance.
    pub input_samples: usize,
    /// Interior samples per interval of a non-affine missing state.
    pub missing_interior: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig { input_samples: 17, missing_interior: 5 }
    }
}

/// Result of a full extremization.
#[derive(Debug, Clone, PartialEq)]
pub struct Extremum {
    pub value: f64,
    pub control: Vec<f64>,
    pub disturbance: Vec<f64>,
    /// Chosen value for each missing state, keyed by state index.
    pub missing: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Free {
    var: Var,
    affine: bool,
    lo: f64,
    hi: f64,
    // position in the missing list, for missing states
    slot: usize,
}

#[derive(Debug, Clone)]
struct Block {
    // (term index, costate slot)
    terms: Vec<(usize, usize)>,
    max_vars: Vec<Free>,
    min_vars: Vec<Free>,
}

/// Precompiled Hamiltonian of one subsystem.
#[derive(Debug, Clone)]
pub struct SubsystemHamiltonian {
    model: DynamicsModel,
    states: Vec<usize>,
    missing: Vec<usize>,
    fixed: Vec<(usize, usize)>,
    blocks: Vec<Block>,
    // term indices per costate slot
    by_slot: Vec<Vec<usize>>,
    u_box: Vec<Interval>,
    d_box: Vec<Interval>,
    lattice: LatticeConfig,
}

/// Reusable buffers for [`SubsystemHamiltonian::eval`].
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    z: Vec<f64>,
    u: Vec<f64>,
    d: Vec<f64>,
    min_c: Vec<Vec<f64>>,
    max_c: Vec<Vec<f64>>,
    min_i: Vec<usize>,
    max_i: Vec<usize>,
    arg_max: Vec<usize>,
    best_min: Vec<usize>,
    best_max: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

impl SubsystemHamiltonian {
    /// Compiles the Hamiltonian for the subsystem made of `states`.
    ///
    /// Missing states are the states read by the subsystem's derivatives that
    /// are not themselves in the subsystem.
    pub fn new(model: &DynamicsModel, states: &[usize], lattice: LatticeConfig) -> Result<Self> {
        let n = model.n();
        if states.is_empty() {
            return Err(Error::Invalid("empty subsystem".into()));
        }
        let mut pos = vec![None; n];
        for (k, &s) in states.iter().enumerate() {
            if s >= n {
                return Err(Error::Invalid(format!("state index {s} out of range")));
            }
            if pos[s].is_some() {
                return Err(Error::Invalid(format!("state '{}' listed twice", model.labels()[s])));
            }
            pos[s] = Some(k);
        }
        let mut missing: Vec<usize> = states
            .iter()
            .flat_map(|&s| model.deps()[s].iter().copied())
            .filter(|&j| pos[j].is_none())
            .collect();
        missing.sort_unstable();
        missing.dedup();

        let active: Vec<(usize, usize)> = model
            .terms()
            .iter()
            .enumerate()
            .filter_map(|(ti, t)| pos[t.component].map(|slot| (ti, slot)))
            .collect();
        let is_free = |v: &Var| match *v {
            Var::State(j) => pos[j].is_none(),
            Var::Control(_) | Var::Disturbance(_) => true,
        };

        // union-find over active terms that share a free variable
        let mut parent: Vec<usize> = (0..active.len()).collect();
        let mut owner: BTreeMap<Var, usize> = BTreeMap::new();
        for (a, &(ti, _)) in active.iter().enumerate() {
            for v in model.terms()[ti].reads.iter().filter(|v| is_free(v)) {
                match owner.get(v) {
                    Some(&b) => {
                        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                        parent[ra] = rb;
                    }
                    None => {
                        owner.insert(*v, a);
                    }
                }
            }
        }

        let mut fixed = Vec::new();
        let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (a, &(ti, slot)) in active.iter().enumerate() {
            if model.terms()[ti].reads.iter().any(is_free) {
                let r = find(&mut parent, a);
                groups.entry(r).or_default().push((ti, slot));
            } else {
                fixed.push((ti, slot));
            }
        }

        let mut blocks = Vec::with_capacity(groups.len());
        for terms in groups.into_values() {
            let mut vars: Vec<Var> = terms
                .iter()
                .flat_map(|&(ti, _)| model.terms()[ti].reads.iter().copied())
                .filter(|v| is_free(v))
                .collect();
            vars.sort_unstable();
            vars.dedup();
            let mut block = Block { terms, max_vars: Vec::new(), min_vars: Vec::new() };
            for var in vars {
                let affine = block.terms.iter().all(|&(ti, _)| {
                    let t = &model.terms()[ti];
                    !t.reads.contains(&var) || t.is_affine_in(var)
                });
                let (lo, hi, slot) = match var {
                    Var::Control(c) => (model.controls()[c].lower, model.controls()[c].upper, 0),
                    Var::Disturbance(c) => {
                        (model.disturbances()[c].lower, model.disturbances()[c].upper, 0)
                    }
                    Var::State(j) => {
                        let slot = missing.binary_search(&j).expect("missing state listed");
                        (f64::NAN, f64::NAN, slot)
                    }
                };
                let free = Free { var, affine, lo, hi, slot };
                match var {
                    Var::Control(_) => block.max_vars.push(free),
                    _ => block.min_vars.push(free),
                }
            }
            blocks.push(block);
        }

        let mut by_slot = vec![Vec::new(); states.len()];
        for &(ti, slot) in &active {
            by_slot[slot].push(ti);
        }
        Ok(SubsystemHamiltonian {
            model: model.clone(),
            states: states.to_vec(),
            missing,
            fixed,
            blocks,
            by_slot,
            u_box: model.controls().iter().map(|c| c.interval()).collect(),
            d_box: model.disturbances().iter().map(|c| c.interval()).collect(),
            lattice,
        })
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Missing states in ascending index order; `ranges` arguments follow
    /// this order.
    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    /// Bounds on `|zdot_j|` for each subsystem state over a box of full
    /// states and the full input bounds. These bound `|dH/dp_j|`.
    pub fn alphas(&self, state_box: &[Interval], out: &mut [f64]) {
        let terms = self.model.terms();
        for (o, ts) in out.iter_mut().zip(&self.by_slot) {
            *o = ts
                .iter()
                .fold(Interval::point(0.0), |acc, &ti| acc + terms[ti].bound(state_box, &self.u_box, &self.d_box))
                .mag();
        }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch {
            z: vec![0.0; self.model.n()],
            u: self.model.control_mid(),
            d: self.model.disturbance_mid(),
            ..Scratch::default()
        }
    }

    /// Min over disturbances and missing ranges, max over controls, of
    /// `sum_j grad_j * zdot_j` for the subsystem states.
    ///
    /// After the call, the scratch input vectors hold the extremizers.
    pub fn eval(
        &self,
        z_sub: &[f64],
        grad: &[f64],
        ranges: &[&IntervalUnion],
        arg: bool,
        s: &mut Scratch,
    ) -> f64 {
        debug_assert_eq!(z_sub.len(), self.states.len());
        debug_assert_eq!(grad.len(), self.states.len());
        debug_assert_eq!(ranges.len(), self.missing.len());
        for (&i, &x) in self.states.iter().zip(z_sub) {
            s.z[i] = x;
        }
        s.u.iter_mut().zip(self.model.controls()).for_each(|(u, c)| *u = c.mid());
        s.d.iter_mut().zip(self.model.disturbances()).for_each(|(d, c)| *d = c.mid());
        if arg {
            // unread missing states keep a defined value
            for (k, &j) in self.missing.iter().enumerate() {
                if let Some(iv) = ranges[k].hull() {
                    s.z[j] = iv.mid();
                }
            }
        }

        let terms = self.model.terms();
        let mut total = 0.0;
        for &(ti, slot) in &self.fixed {
            total += grad[slot] * terms[ti].eval(&s.z, &s.u, &s.d);
        }
        for b in &self.blocks {
            total += self.eval_block(b, grad, ranges, arg, s);
        }
        total
    }

    fn eval_block(
        &self,
        b: &Block,
        grad: &[f64],
        ranges: &[&IntervalUnion],
        arg: bool,
        s: &mut Scratch,
    ) -> f64 {
        let lat = self.lattice;
        fill(&mut s.min_c, &b.min_vars, |f, out| candidates(f, ranges, arg, lat, out));
        fill(&mut s.max_c, &b.max_vars, |f, out| candidates(f, ranges, arg, lat, out));
        s.min_i.clear();
        s.min_i.resize(b.min_vars.len(), 0);
        s.best_min.clear();
        s.best_min.resize(b.min_vars.len(), 0);
        s.best_max.clear();
        s.best_max.resize(b.max_vars.len(), 0);

        let terms = self.model.terms();
        let mut best = f64::INFINITY;
        loop {
            for (k, f) in b.min_vars.iter().enumerate() {
                set(f.var, s.min_c[k][s.min_i[k]], s);
            }
            let mut inner = f64::NEG_INFINITY;
            s.max_i.clear();
            s.max_i.resize(b.max_vars.len(), 0);
            s.arg_max.clear();
            s.arg_max.resize(b.max_vars.len(), 0);
            loop {
                for (k, f) in b.max_vars.iter().enumerate() {
                    set(f.var, s.max_c[k][s.max_i[k]], s);
                }
                let val: f64 = b
                    .terms
                    .iter()
                    .map(|&(ti, slot)| grad[slot] * terms[ti].eval(&s.z, &s.u, &s.d))
                    .sum();
                if val > inner {
                    inner = val;
                    s.arg_max.copy_from_slice(&s.max_i);
                }
                if !advance(&mut s.max_i, &s.max_c) {
                    break;
                }
            }
            if inner < best {
                best = inner;
                s.best_min.copy_from_slice(&s.min_i);
                s.best_max.copy_from_slice(&s.arg_max);
            }
            if !advance(&mut s.min_i, &s.min_c) {
                break;
            }
        }
        for (k, f) in b.min_vars.iter().enumerate() {
            set(f.var, s.min_c[k][s.best_min[k]], s);
        }
        for (k, f) in b.max_vars.iter().enumerate() {
            set(f.var, s.max_c[k][s.best_max[k]], s);
        }
        best
    }

    /// Extremizes and reports the chosen inputs and missing states.
    pub fn extremize(
        &self,
        z_sub: &[f64],
        grad: &[f64],
        ranges: &[&IntervalUnion],
        s: &mut Scratch,
    ) -> Extremum {
        let value = self.eval(z_sub, grad, ranges, true, s);
        Extremum {
            value,
            control: s.u.clone(),
            disturbance: s.d.clone(),
            missing: self.missing.iter().map(|&j| (j, s.z[j])).collect(),
        }
    }
}

fn fill(bufs: &mut Vec<Vec<f64>>, vars: &[Free], mut f: impl FnMut(&Free, &mut Vec<f64>)) {
    if bufs.len() < vars.len() {
        bufs.resize_with(vars.len(), Vec::new);
    }
    for (k, v) in vars.iter().enumerate() {
        bufs[k].clear();
        f(v, &mut bufs[k]);
    }
}

#[inline]
fn set(var: Var, x: f64, s: &mut Scratch) {
    match var {
        Var::State(j) => s.z[j] = x,
        Var::Control(c) => s.u[c] = x,
        Var::Disturbance(c) => s.d[c] = x,
    }
}

/// Mixed-radix increment; false once every combination was visited.
fn advance(idx: &mut [usize], cands: &[Vec<f64>]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < cands[k].len() {
            return true;
        }
        idx[k] = 0;
    }
    false
}

fn candidates(f: &Free, ranges: &[&IntervalUnion], arg: bool, lat: LatticeConfig, out: &mut Vec<f64>) {
    match f.var {
        Var::State(_) => {
            for iv in ranges[f.slot].intervals() {
                out.push(iv.lo);
                if iv.hi > iv.lo {
                    if !f.affine {
                        let m = lat.missing_interior;
                        out.extend((1..=m).map(|k| iv.lo + iv.width() * k as f64 / (m + 1) as f64));
                    }
                    out.push(iv.hi);
                }
            }
        }
        _ => {
            let (lo, hi) = (f.lo, f.hi);
            let mid = 0.5 * (lo + hi);
            if hi == lo {
                out.push(lo);
            } else if f.affine {
                // midpoint first so zero coefficients keep it
                if arg {
                    out.push(mid);
                }
                out.push(lo);
                out.push(hi);
            } else {
                let m = lat.input_samples.max(2);
                out.push(mid);
                out.extend(
                    (0..m)
                        .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                        .filter(|&x| x != mid),
                );
            }
        }
    }
}

/// Convenience entry point compiling the subsystem Hamiltonian on the fly.
///
/// `missing_ranges` must hold a nonempty union for every state read by the
/// subsystem but not contained in it.
pub fn hamiltonian_extremize(
    model: &DynamicsModel,
    subsystem: &[usize],
    z_sub: &[f64],
    grad: &[f64],
    missing_ranges: &BTreeMap<usize, IntervalUnion>,
    mode: OptMode,
) -> Result<Extremum> {
    let h = SubsystemHamiltonian::new(model, subsystem, LatticeConfig::default())?;
    if z_sub.len() != subsystem.len() || grad.len() != subsystem.len() {
        return Err(Error::Invalid(format!(
            "subsystem has {} states, got {} coordinates and {} costates",
            subsystem.len(),
            z_sub.len(),
            grad.len()
        )));
    }
    let mut ranges = Vec::with_capacity(h.missing().len());
    for &j in h.missing() {
        let label = &model.labels()[j];
        match missing_ranges.get(&j) {
            None => return Err(Error::MissingRange(label.clone())),
            Some(r) if r.is_empty() => {
                return Err(Error::Invalid(format!("empty range for missing state '{label}'")))
            }
            Some(r) => ranges.push(r),
        }
    }
    let mut s = h.scratch();
    Ok(match mode {
        OptMode::Value => {
            let value = h.eval(z_sub, grad, &ranges, false, &mut s);
            Extremum { value, control: Vec::new(), disturbance: Vec::new(), missing: Vec::new() }
        }
        OptMode::ArgControl | OptMode::ArgDisturbance => h.extremize(z_sub, grad, &ranges, &mut s),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin, ModelParams};

    fn quad4() -> DynamicsModel {
        builtin("quad4", &ModelParams::default()).unwrap()
    }

    #[test]
    fn bang_bang_on_last_pair() {
        let m = quad4();
        let e = hamiltonian_extremize(&m, &[2, 3], &[0.0, 0.7], &[1.0, -2.0], &BTreeMap::new(), OptMode::ArgControl)
            .unwrap();
        assert!((e.value - (0.7 + 2.0)).abs() < 1e-12);
        assert_eq!(e.control, vec![-1.0]);
    }

    #[test]
    fn missing_state_takes_left_endpoint() {
        let m = builtin("quad4", &ModelParams::from_pairs(&[("d_max", 0.1)]).unwrap()).unwrap();
        let mut r = BTreeMap::new();
        r.insert(2, IntervalUnion::single(-2.0, 3.0));
        let e = hamiltonian_extremize(&m, &[0, 1], &[0.3, 1.5], &[1.0, 1.0], &r, OptMode::ArgDisturbance).unwrap();
        assert!((e.value - (1.5 - 2.1)).abs() < 1e-12);
        assert_eq!(e.disturbance, vec![-0.1]);
        assert_eq!(e.missing, vec![(2, -2.0)]);
    }

    #[test]
    fn missing_state_against_negative_costate() {
        let m = quad4();
        let mut r = BTreeMap::new();
        r.insert(2, IntervalUnion::single(-2.0, 3.0));
        let e = hamiltonian_extremize(&m, &[0, 1], &[0.0, 1.5], &[1.0, -1.0], &r, OptMode::ArgDisturbance).unwrap();
        // enumerate both endpoints and both disturbance extremes by hand
        let oracle = [-2.0f64, 3.0]
            .iter()
            .flat_map(|&z3| [-0.25f64, 0.25].map(move |d| 1.5 + d - z3))
            .fold(f64::INFINITY, f64::min);
        assert!((e.value - oracle).abs() < 1e-12);
        assert_eq!(e.missing, vec![(2, 3.0)]);
    }

    #[test]
    fn zero_coefficient_keeps_midpoint() {
        let m = quad4();
        let e = hamiltonian_extremize(&m, &[2, 3], &[0.0, 0.0], &[1.0, 0.0], &BTreeMap::new(), OptMode::ArgControl)
            .unwrap();
        assert_eq!(e.control, vec![0.0]);
    }

    #[test]
    fn absent_range_is_an_error() {
        let m = quad4();
        let r = hamiltonian_extremize(&m, &[0, 1], &[0.0, 0.0], &[1.0, 1.0], &BTreeMap::new(), OptMode::Value);
        assert!(matches!(r, Err(Error::MissingRange(l)) if l == "z3"));
    }

    #[test]
    fn blocks_split_independent_inputs() {
        let m = builtin("bicycle6", &ModelParams::default()).unwrap();
        let h = SubsystemHamiltonian::new(&m, &[3, 4, 5], LatticeConfig::default()).unwrap();
        assert!(h.missing().is_empty());
        // a_x alone, delta shared by the two tire terms
        assert_eq!(h.blocks.len(), 2);
    }
}
