//! Dynamics models with declared state dependencies.
//!
//! A model is a sum of [`FlowTerm`]s. Each term contributes to one state
//! derivative, declares every variable it reads, and lists the variables it
//! is affine in. The term structure is what lets the Hamiltonian extremizer
//! split the min-max into independent blocks and use closed-form endpoint
//! rules for affine inputs.

mod builtin;
mod hamiltonian;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use builtin::{builtin, builtin_keys, builtin_names, builtin_plan, builtin_target, BicycleParams, ModelParams};
pub use hamiltonian::{
    hamiltonian_extremize, Extremum, LatticeConfig, OptMode, Scratch, SubsystemHamiltonian,
};

use crate::error::{Error, Result};
use crate::interval::Interval;

/// A variable a flow term may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    State(usize),
    Control(usize),
    Disturbance(usize),
}

pub type EvalFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
pub type BoundFn = Arc<dyn Fn(&[Interval], &[Interval], &[Interval]) -> Interval + Send + Sync>;

/// One additive piece of a state derivative.
#[derive(Clone)]
pub struct FlowTerm {
    pub component: usize,
    pub reads: Vec<Var>,
    pub affine_in: Vec<Var>,
    eval: EvalFn,
    bound: BoundFn,
}

impl FlowTerm {
    #[inline]
    pub fn eval(&self, z: &[f64], u: &[f64], d: &[f64]) -> f64 {
        (self.eval)(z, u, d)
    }

    /// Enclosure of the term over boxes of states, controls and disturbances.
    pub fn bound(&self, z: &[Interval], u: &[Interval], d: &[Interval]) -> Interval {
        (self.bound)(z, u, d)
    }

    pub fn is_affine_in(&self, v: Var) -> bool {
        self.affine_in.contains(&v)
    }
}

impl fmt::Debug for FlowTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowTerm")
            .field("component", &self.component)
            .field("reads", &self.reads)
            .field("affine_in", &self.affine_in)
            .finish()
    }
}

/// A bounded control or disturbance channel.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

impl InputSpec {
    pub fn interval(&self) -> Interval {
        Interval::new(self.lower, self.upper)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Clone, Debug)]
pub struct DynamicsModel {
    name: String,
    labels: Vec<String>,
    bounds: Vec<(f64, f64)>,
    periodic: Vec<bool>,
    controls: Vec<InputSpec>,
    disturbances: Vec<InputSpec>,
    terms: Vec<FlowTerm>,
    deps: Vec<BTreeSet<usize>>,
}

impl DynamicsModel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Default computation bounds per state.
    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn controls(&self) -> &[InputSpec] {
        &self.controls
    }

    pub fn disturbances(&self) -> &[InputSpec] {
        &self.disturbances
    }

    pub fn terms(&self) -> &[FlowTerm] {
        &self.terms
    }

    /// States read by each derivative component (self-reads included).
    pub fn deps(&self) -> &[BTreeSet<usize>] {
        &self.deps
    }

    pub fn control_mid(&self) -> Vec<f64> {
        self.controls.iter().map(InputSpec::mid).collect()
    }

    pub fn disturbance_mid(&self) -> Vec<f64> {
        self.disturbances.iter().map(InputSpec::mid).collect()
    }

    /// Evaluates the state derivative.
    pub fn eval_flow(&self, z: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        let zdot = self.eval_flow_unchecked(z, u, d);
        if let Some(i) = zdot.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFlow { component: self.labels[i].clone() });
        }
        Ok(zdot)
    }

    pub(crate) fn eval_flow_unchecked(&self, z: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
        let mut zdot = vec![0.0; self.n()];
        for t in &self.terms {
            zdot[t.component] += t.eval(z, u, d);
        }
        zdot
    }

    /// Enclosure of derivative component `i` over a state box, using the full
    /// input bounds.
    pub fn component_bound(&self, i: usize, states: &[Interval]) -> Interval {
        let u: Vec<Interval> = self.controls.iter().map(InputSpec::interval).collect();
        let d: Vec<Interval> = self.disturbances.iter().map(InputSpec::interval).collect();
        self.terms
            .iter()
            .filter(|t| t.component == i)
            .fold(Interval::point(0.0), |acc, t| acc + t.bound(states, &u, &d))
    }
}

/// Incremental construction of a [`DynamicsModel`].
pub struct ModelBuilder {
    name: String,
    labels: Vec<String>,
    bounds: Vec<(f64, f64)>,
    periodic: Vec<bool>,
    controls: Vec<InputSpec>,
    disturbances: Vec<InputSpec>,
    terms: Vec<FlowTerm>,
}

impl ModelBuilder {
    pub fn new(name: &str) -> ModelBuilder {
        ModelBuilder {
            name: name.to_string(),
            labels: Vec::new(),
            bounds: Vec::new(),
            periodic: Vec::new(),
            controls: Vec::new(),
            disturbances: Vec::new(),
            terms: Vec::new(),
        }
    }

    pub fn state(mut self, label: &str, lower: f64, upper: f64) -> ModelBuilder {
        self.labels.push(label.to_string());
        self.bounds.push((lower, upper));
        self.periodic.push(false);
        self
    }

    pub fn periodic_state(mut self, label: &str, lower: f64, upper: f64) -> ModelBuilder {
        self.labels.push(label.to_string());
        self.bounds.push((lower, upper));
        self.periodic.push(true);
        self
    }

    pub fn control(mut self, name: &str, lower: f64, upper: f64) -> ModelBuilder {
        self.controls.push(InputSpec { name: name.to_string(), lower, upper });
        self
    }

    pub fn disturbance(mut self, name: &str, lower: f64, upper: f64) -> ModelBuilder {
        self.disturbances.push(InputSpec { name: name.to_string(), lower, upper });
        self
    }

    /// Adds a term to the derivative of state `component`.
    pub fn term(
        mut self,
        component: usize,
        reads: &[Var],
        affine_in: &[Var],
        eval: impl Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync + 'static,
        bound: impl Fn(&[Interval], &[Interval], &[Interval]) -> Interval + Send + Sync + 'static,
    ) -> ModelBuilder {
        self.terms.push(FlowTerm {
            component,
            reads: reads.to_vec(),
            affine_in: affine_in.to_vec(),
            eval: Arc::new(eval),
            bound: Arc::new(bound),
        });
        self
    }

    pub fn build(self) -> Result<DynamicsModel> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::Invalid(format!("model '{}' has no states", self.name)));
        }
        for (i, l) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(l) {
                return Err(Error::Invalid(format!("duplicate state label '{l}'")));
            }
        }
        for (l, &(lo, hi)) in self.labels.iter().zip(&self.bounds) {
            if !(lo < hi) {
                return Err(Error::Invalid(format!("state '{l}' has empty bounds [{lo}, {hi}]")));
            }
        }
        for inp in self.controls.iter().chain(&self.disturbances) {
            if !(inp.lower <= inp.upper) || !inp.lower.is_finite() || !inp.upper.is_finite() {
                return Err(Error::Invalid(format!(
                    "input '{}' has invalid bounds [{}, {}]",
                    inp.name, inp.lower, inp.upper
                )));
            }
        }
        let mut deps = vec![BTreeSet::new(); n];
        for t in &self.terms {
            if t.component >= n {
                return Err(Error::Invalid(format!("term targets component {}", t.component)));
            }
            for v in t.reads.iter().chain(&t.affine_in) {
                let ok = match *v {
                    Var::State(i) => i < n,
                    Var::Control(i) => i < self.controls.len(),
                    Var::Disturbance(i) => i < self.disturbances.len(),
                };
                if !ok {
                    return Err(Error::Invalid(format!("term reads unknown variable {v:?}")));
                }
            }
            if let Some(v) = t.affine_in.iter().find(|v| !t.reads.contains(v)) {
                return Err(Error::Invalid(format!("term is affine in {v:?} but does not read it")));
            }
            for v in &t.reads {
                if let Var::State(i) = *v {
                    deps[t.component].insert(i);
                }
            }
        }
        Ok(DynamicsModel {
            name: self.name,
            labels: self.labels,
            bounds: self.bounds,
            periodic: self.periodic,
            controls: self.controls,
            disturbances: self.disturbances,
            terms: self.terms,
            deps,
        })
    }
}
