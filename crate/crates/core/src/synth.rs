//! Controllers from value functions, closed-loop simulation, and a sampled
//! game oracle.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decomp::DecomposedResult;
use crate::dynamics::{DynamicsModel, LatticeConfig, SubsystemHamiltonian};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::levelset::SolveResult;
use crate::target::TargetSpec;

/// A time-indexed value function over the full state.
pub trait ValueField: Sync {
    /// Value at `z` using the snapshot nearest to time `s`.
    fn value(&self, z: &[f64], s: f64) -> Result<f64>;
    /// Per-state `(lower, upper, periodic)` of the computation box.
    fn axes(&self) -> Vec<(f64, f64, bool)>;
    /// Smallest grid spacing over all dimensions.
    fn min_spacing(&self) -> f64;
    /// Checkpoint time nearest to `s` and whether it is exact.
    fn nearest_time(&self, s: f64) -> (f64, bool);
}

impl ValueField for SolveResult {
    fn value(&self, z: &[f64], s: f64) -> Result<f64> {
        self.nearest(s).0.interpolate(z)
    }

    fn axes(&self) -> Vec<(f64, f64, bool)> {
        let g = self.last().grid();
        (0..g.dim()).map(|d| (g.lower(d), g.upper(d), g.is_periodic(d))).collect()
    }

    fn min_spacing(&self) -> f64 {
        self.last().grid().min_spacing()
    }

    fn nearest_time(&self, s: f64) -> (f64, bool) {
        let (v, exact) = self.nearest(s);
        (v.time(), exact)
    }
}

impl ValueField for DecomposedResult {
    fn value(&self, z: &[f64], s: f64) -> Result<f64> {
        self.combine_value(z, s)
    }

    fn axes(&self) -> Vec<(f64, f64, bool)> {
        let n = self.plan.subsystems().iter().flatten().max().map_or(0, |m| m + 1);
        let mut out = vec![(0.0, 0.0, false); n];
        for (s, r) in self.plan.subsystems().iter().zip(&self.results) {
            let g = r.last().grid();
            for (d, &i) in s.iter().enumerate() {
                out[i] = (g.lower(d), g.upper(d), g.is_periodic(d));
            }
        }
        out
    }

    fn min_spacing(&self) -> f64 {
        self.results.iter().map(|r| r.last().grid().min_spacing()).fold(f64::INFINITY, f64::min)
    }

    fn nearest_time(&self, s: f64) -> (f64, bool) {
        let (k, exact) = self.nearest(s);
        (self.times()[k], exact)
    }
}

/// Central-difference gradient with step half the smallest spacing,
/// falling back to one-sided differences at non-periodic edges.
pub fn value_gradient(field: &dyn ValueField, z: &[f64], s: f64) -> Result<Vec<f64>> {
    let axes = field.axes();
    if z.len() != axes.len() {
        return Err(Error::Invalid(format!("state has {} coordinates, expected {}", z.len(), axes.len())));
    }
    for (d, &(lo, hi, periodic)) in axes.iter().enumerate() {
        if !periodic && !(lo..=hi).contains(&z[d]) {
            return Err(Error::OutOfBounds(z.to_vec()));
        }
    }
    let h = 0.5 * field.min_spacing();
    let mut p = z.to_vec();
    let mut grad = vec![0.0; z.len()];
    for (d, &(lo, hi, periodic)) in axes.iter().enumerate() {
        let up = if periodic { z[d] + h } else { (z[d] + h).min(hi) };
        let down = if periodic { z[d] - h } else { (z[d] - h).max(lo) };
        p[d] = up;
        let a = field.value(&p, s)?;
        p[d] = down;
        let b = field.value(&p, s)?;
        p[d] = z[d];
        grad[d] = (a - b) / (up - down);
    }
    Ok(grad)
}

/// Input choices from the gradient of a value field.
pub struct Synthesizer<'a> {
    field: &'a dyn ValueField,
    ham: SubsystemHamiltonian,
}

impl<'a> Synthesizer<'a> {
    pub fn new(model: &DynamicsModel, field: &'a dyn ValueField) -> Result<Self> {
        if field.axes().len() != model.n() {
            return Err(Error::Invalid(format!(
                "value field has {} dimensions, model has {} states",
                field.axes().len(),
                model.n()
            )));
        }
        let states: Vec<usize> = (0..model.n()).collect();
        let ham = SubsystemHamiltonian::new(model, &states, LatticeConfig::default())?;
        Ok(Synthesizer { field, ham })
    }

    /// Control maximizing and disturbance minimizing `∇V · f`.
    pub fn inputs(&self, z: &[f64], s: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let grad = value_gradient(self.field, z, s)?;
        let mut scratch = self.ham.scratch();
        let e = self.ham.extremize(z, &grad, &[], &mut scratch);
        Ok((e.control, e.disturbance))
    }

    pub fn optimal_control(&self, z: &[f64], s: f64) -> Result<Vec<f64>> {
        Ok(self.inputs(z, s)?.0)
    }

    pub fn worst_disturbance(&self, z: &[f64], s: f64) -> Result<Vec<f64>> {
        Ok(self.inputs(z, s)?.1)
    }
}

/// Control maximizing `∇Ṽ(z,s) · f(z,u,d)` against the worst disturbance.
pub fn optimal_control(field: &dyn ValueField, model: &DynamicsModel, z: &[f64], s: f64) -> Result<Vec<f64>> {
    Synthesizer::new(model, field)?.optimal_control(z, s)
}

/// Disturbance minimizing the same objective.
pub fn worst_disturbance(field: &dyn ValueField, model: &DynamicsModel, z: &[f64], s: f64) -> Result<Vec<f64>> {
    Synthesizer::new(model, field)?.worst_disturbance(z, s)
}

/// Closed-loop path over `[s0, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub labels: Vec<String>,
    pub control_names: Vec<String>,
    pub disturbance_names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Inputs applied from each recorded state; the last row repeats the
    /// policies' choice at the final state.
    pub controls: Vec<Vec<f64>>,
    pub disturbances: Vec<Vec<f64>>,
    pub l_values: Vec<f64>,
    pub min_l: f64,
    /// The path left the computation box and was cut short.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `time`, states, controls, disturbances, `l`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["time".to_string()];
        header.extend(self.labels.iter().cloned());
        header.extend(self.control_names.iter().cloned());
        header.extend(self.disturbance_names.iter().cloned());
        header.push("l".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.times[k])
                .chain(self.states[k].iter().copied())
                .chain(self.controls[k].iter().copied())
                .chain(self.disturbances[k].iter().copied())
                .chain(std::iter::once(self.l_values[k]))
                .map(|x| format!("{x:.17e}"))
                .collect();
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Settings for [`simulate`].
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub horizon: f64,
    pub dt: f64,
    /// Computation box; non-periodic exits truncate the path.
    pub bounds: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
}

impl SimConfig {
    /// Box and periodicity taken from a grid.
    pub fn on_grid(grid: &Grid, horizon: f64, dt: f64) -> SimConfig {
        SimConfig { horizon, dt, bounds: grid.bounds(), periodic: grid.periodic().to_vec() }
    }
}

fn rk4(model: &DynamicsModel, z: &[f64], u: &[f64], d: &[f64], dt: f64) -> Result<Vec<f64>> {
    let k1 = model.eval_flow(z, u, d)?;
    let at = |k: &[f64], c: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    let k2 = model.eval_flow(&at(&k1, 0.5 * dt), u, d)?;
    let k3 = model.eval_flow(&at(&k2, 0.5 * dt), u, d)?;
    let k4 = model.eval_flow(&at(&k3, dt), u, d)?;
    Ok((0..z.len()).map(|i| z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

fn wrap(z: &mut [f64], cfg: &SimConfig) -> bool {
    let mut inside = true;
    for (i, x) in z.iter_mut().enumerate() {
        let (lo, hi) = cfg.bounds[i];
        if cfg.periodic[i] {
            *x = lo + (*x - lo).rem_euclid(hi - lo);
        } else if !(lo..=hi).contains(x) {
            inside = false;
        }
    }
    inside
}

/// Fixed-step RK4 from `z0` at time `-horizon` to `0`, with both policies
/// held constant over each step.
pub fn simulate<U, D>(
    model: &DynamicsModel,
    target: &TargetSpec,
    z0: &[f64],
    cfg: &SimConfig,
    mut control: U,
    mut disturbance: D,
) -> Result<Trajectory>
where
    U: FnMut(&[f64], f64) -> Result<Vec<f64>>,
    D: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    if !(cfg.dt > 0.0) {
        return Err(Error::Invalid(format!("simulation step must be positive, got {}", cfg.dt)));
    }
    if !(cfg.horizon >= 0.0) {
        return Err(Error::Invalid(format!("horizon must be nonnegative, got {}", cfg.horizon)));
    }
    if z0.len() != model.n() || cfg.bounds.len() != model.n() || cfg.periodic.len() != model.n() {
        return Err(Error::Invalid("state, bounds and model dimensions differ".into()));
    }
    let mut z = z0.to_vec();
    if !wrap(&mut z, cfg) {
        return Err(Error::OutOfBounds(z0.to_vec()));
    }
    let labels = model.labels().to_vec();
    let mut traj = Trajectory {
        labels: labels.clone(),
        control_names: model.controls().iter().map(|c| c.name.clone()).collect(),
        disturbance_names: model.disturbances().iter().map(|c| c.name.clone()).collect(),
        times: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        disturbances: Vec::new(),
        l_values: Vec::new(),
        min_l: f64::INFINITY,
        truncated: false,
    };
    let steps = (cfg.horizon / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut t = -cfg.horizon;
    for k in 0..=steps {
        let u = control(&z, t)?;
        let d = disturbance(&z, t)?;
        let l = target.level(&labels, &z)?;
        traj.min_l = traj.min_l.min(l);
        traj.times.push(t);
        traj.states.push(z.clone());
        traj.controls.push(u.clone());
        traj.disturbances.push(d.clone());
        traj.l_values.push(l);
        if k == steps {
            break;
        }
        let h = cfg.dt.min(-t);
        z = rk4(model, &z, &u, &d, h)?;
        t = if k + 1 == steps { 0.0 } else { t + h };
        if !wrap(&mut z, cfg) {
            traj.truncated = true;
            break;
        }
    }
    Ok(traj)
}

/// Outcome of [`check_safety`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Safety {
    Safe,
    /// First recorded sample inside the target.
    Violation { step: usize, time: f64 },
}

/// Safe when `l > 0` at every recorded state.
pub fn check_safety(traj: &Trajectory, target: &TargetSpec) -> Result<Safety> {
    for (k, z) in traj.states.iter().enumerate() {
        if target.level(&traj.labels, z)? <= 0.0 {
            return Ok(Safety::Violation { step: k, time: traj.times[k] });
        }
    }
    Ok(Safety::Safe)
}

/// Settings for [`brute_force_brt`].
#[derive(Debug, Clone)]
pub struct BruteForceConfig {
    pub horizon: f64,
    pub dt: f64,
    pub n_control_seq: usize,
    pub n_dist_seq: usize,
    /// Switch times are drawn in `[0, switch_span)`; equal spans across
    /// horizons make the sampled sequences prefixes of each other.
    pub switch_span: f64,
    pub max_switches: usize,
    pub seed: u64,
    pub max_points: usize,
    /// Upper bound on flow evaluations.
    pub max_work: f64,
}

impl BruteForceConfig {
    pub fn new(horizon: f64, dt: f64) -> Self {
        BruteForceConfig {
            horizon,
            dt,
            n_control_seq: 16,
            n_dist_seq: 16,
            switch_span: horizon,
            max_switches: 4,
            seed: 0,
            max_points: 10_000,
            max_work: 2e10,
        }
    }
}

/// Piecewise-constant input over time since the start of the path.
#[derive(Debug, Clone, PartialEq)]
struct InputSeq {
    switches: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl InputSeq {
    fn at(&self, t: f64) -> &[f64] {
        &self.values[self.switches.iter().take_while(|&&s| s <= t).count()]
    }
}

/// Constant corner inputs first, then random switching sequences drawing
/// each segment from the box corners or its interior.
fn sample_sequences(bounds: &[(f64, f64)], count: usize, cfg: &BruteForceConfig, rng: &mut ChaCha8Rng) -> Vec<InputSeq> {
    if bounds.is_empty() {
        return vec![InputSeq { switches: Vec::new(), values: vec![Vec::new()] }];
    }
    let corners = 1usize << bounds.len().min(16);
    let corner = |c: usize| -> Vec<f64> {
        bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| if c >> (i % 16) & 1 == 1 { hi } else { lo })
            .collect()
    };
    let mut out: Vec<InputSeq> =
        (0..corners.min(count)).map(|c| InputSeq { switches: Vec::new(), values: vec![corner(c)] }).collect();
    while out.len() < count {
        let k = rng.gen_range(1..=cfg.max_switches.max(1));
        let mut switches: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * cfg.switch_span).collect();
        switches.sort_by(f64::total_cmp);
        let values = (0..=k)
            .map(|_| {
                if rng.gen_bool(0.75) {
                    corner(rng.gen_range(0..corners))
                } else {
                    bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
                }
            })
            .collect();
        out.push(InputSeq { switches, values });
    }
    out
}

/// True when the open-loop pair reaches the target within the horizon.
fn hits(
    model: &DynamicsModel,
    target: &TargetSpec,
    z0: &[f64],
    u: &InputSeq,
    d: &InputSeq,
    cfg: &BruteForceConfig,
) -> Result<bool> {
    let labels = model.labels();
    let mut z = z0.to_vec();
    let mut t = 0.0;
    if target.level(labels, &z)? <= 0.0 {
        return Ok(true);
    }
    while t < cfg.horizon - 1e-12 {
        let h = cfg.dt.min(cfg.horizon - t);
        z = rk4(model, &z, u.at(t), d.at(t), h)?;
        t += h;
        if target.level(labels, &z)? <= 0.0 {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Sampled-game unsafe set: `z` is marked when some sampled disturbance
/// sequence drives every sampled control sequence into the target.
///
/// Sampling weakens both quantifiers, so the result approximates the tube
/// from inside and serves as a one-directional oracle.
pub fn brute_force_brt(
    model: &DynamicsModel,
    grid: &Grid,
    target: &TargetSpec,
    cfg: &BruteForceConfig,
) -> Result<Vec<bool>> {
    if grid.labels() != model.labels() {
        return Err(Error::Invalid("grid labels differ from model states".into()));
    }
    if grid.len() > cfg.max_points {
        return Err(Error::ResourceCap { requested: grid.len(), cap: cfg.max_points });
    }
    if !(cfg.dt > 0.0) || !(cfg.horizon >= 0.0) {
        return Err(Error::Invalid("brute force needs dt > 0 and horizon >= 0".into()));
    }
    let steps = (cfg.horizon / cfg.dt).ceil();
    let work = grid.len() as f64 * cfg.n_control_seq as f64 * cfg.n_dist_seq as f64 * steps * 4.0;
    if work > cfg.max_work {
        return Err(Error::ResourceCap { requested: work as usize, cap: cfg.max_work as usize });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ub: Vec<(f64, f64)> = model.controls().iter().map(|c| (c.lower, c.upper)).collect();
    let db: Vec<(f64, f64)> = model.disturbances().iter().map(|c| (c.lower, c.upper)).collect();
    let useq = sample_sequences(&ub, cfg.n_control_seq.max(1), cfg, &mut rng);
    let dseq = sample_sequences(&db, cfg.n_dist_seq.max(1), cfg, &mut rng);
    (0..grid.len())
        .into_par_iter()
        .map(|flat| {
            let z = grid.point(flat);
            for d in &dseq {
                let mut all = true;
                for u in &useq {
                    if !hits(model, target, &z, u, d, cfg)? {
                        all = false;
                        break;
                    }
                }
                if all {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect()
}

/// Writes one trajectory per file as `<stem>_<k>.csv`.
pub fn write_trajectories(trajs: &[Trajectory], dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    trajs
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let p = dir.join(format!("{stem}_{k}.csv"));
            t.write_csv(&p)?;
            Ok(p)
        })
        .collect()
}

/// Human-readable one-line summary.
pub fn describe(traj: &Trajectory, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{} samples, min_l {:.4}{}",
        traj.len(),
        traj.min_l,
        if traj.truncated { ", truncated at the computation bound" } else { "" }
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin, ModelBuilder, ModelParams};
    use crate::grid::ValueFunction;
    use crate::interval::Interval;
    use crate::levelset::{solve_full_brt, SchemeConfig, SolveOptions};

    fn single(values: ValueFunction) -> SolveResult {
        SolveResult { snapshots: vec![values], dt_history: vec![], alpha_history: vec![] }
    }

    fn quad4_field(f: impl Fn(&[f64]) -> f64) -> SolveResult {
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[5; 4], &[false; 4], m.labels()).unwrap();
        single(ValueFunction::from_fn(g, 0.0, f).unwrap())
    }

    #[test]
    fn bang_bang_control_follows_gradient_sign() {
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let z = [0.0, 1.0, 2.0, 3.0];
        let up = quad4_field(|z| z[3]);
        assert_eq!(optimal_control(&up, &m, &z, 0.0).unwrap(), vec![1.0]);
        let down = quad4_field(|z| -2.0 * z[3]);
        assert_eq!(optimal_control(&down, &m, &z, 0.0).unwrap(), vec![-1.0]);
        let flat = quad4_field(|z| z[0]);
        assert_eq!(optimal_control(&flat, &m, &z, 0.0).unwrap(), vec![0.0]);
        // a positive rescaling leaves the choice unchanged
        let scaled = quad4_field(|z| 7.0 * z[3] + z[1]);
        let base = quad4_field(|z| z[3] + z[1] / 7.0);
        assert_eq!(
            optimal_control(&scaled, &m, &z, 0.0).unwrap(),
            optimal_control(&base, &m, &z, 0.0).unwrap()
        );
    }

    #[test]
    fn disturbance_pushes_value_down() {
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let z = [0.0, 1.0, 2.0, 3.0];
        let f = quad4_field(|z| z[0]);
        let d_max = m.disturbances()[0].upper;
        assert_eq!(worst_disturbance(&f, &m, &z, 0.0).unwrap(), vec![-d_max]);
        let zero = quad4_field(|_| 1.0);
        assert_eq!(worst_disturbance(&zero, &m, &z, 0.0).unwrap(), vec![0.0]);
        let di = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&di.bounds().to_vec(), &[5, 5], &[false, false], di.labels()).unwrap();
        let f = single(ValueFunction::from_fn(g, 0.0, |z| z[0]).unwrap());
        assert!(worst_disturbance(&f, &di, &[0.0, 0.0], 0.0).unwrap().is_empty());
        assert!(matches!(optimal_control(&f, &di, &[9.0, 0.0], 0.0), Err(Error::OutOfBounds(_))));
    }

    #[test]
    fn double_integrator_control_switches_across_the_curve() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[51, 51], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let opts = SolveOptions { horizon: 1.0, checkpoint_dt: Some(0.1), ..SolveOptions::default() };
        let r = solve_full_brt(&m, &g, &t, &SchemeConfig::default(), &opts).unwrap();
        // moving toward the wall the controller brakes, moving away it does not care to
        assert_eq!(optimal_control(&r, &m, &[1.0, -1.0], -1.0).unwrap(), vec![1.0]);
        assert_eq!(optimal_control(&r, &m, &[0.5, -1.5], -1.0).unwrap(), vec![1.0]);
    }

    fn still_model() -> DynamicsModel {
        ModelBuilder::new("still")
            .state("a", -1.0, 1.0)
            .state("b", -1.0, 1.0)
            .term(0, &[], &[], |_, _, _| 0.0, |_, _, _| Interval::point(0.0))
            .build()
            .unwrap()
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let m = still_model();
        let t = TargetSpec::parse(&["a < -0.5"]).unwrap();
        let cfg = SimConfig { horizon: 1.0, dt: 0.1, bounds: m.bounds().to_vec(), periodic: vec![false; 2] };
        let tr = simulate(&m, &t, &[0.3, 0.2], &cfg, |_, _| Ok(vec![]), |_, _| Ok(vec![])).unwrap();
        assert_eq!(tr.len(), 11);
        assert!(tr.states.iter().all(|z| z == &[0.3, 0.2]));
        assert_eq!(*tr.times.last().unwrap(), 0.0);
        assert!((tr.min_l - 0.8).abs() < 1e-12);
        assert_eq!(check_safety(&tr, &t).unwrap(), Safety::Safe);
        let inside = simulate(&m, &t, &[-0.9, 0.0], &cfg, |_, _| Ok(vec![]), |_, _| Ok(vec![])).unwrap();
        assert_eq!(check_safety(&inside, &t).unwrap(), Safety::Violation { step: 0, time: -1.0 });
    }

    #[test]
    fn crossing_step_is_reported_and_exits_truncate() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let cfg = SimConfig { horizon: 1.0, dt: 0.1, bounds: m.bounds().to_vec(), periodic: vec![false; 2] };
        // z1 = 0.25 - 0.5 t falls below zero after step 5
        let tr = simulate(&m, &t, &[0.25, -0.5], &cfg, |_, _| Ok(vec![0.0]), |_, _| Ok(vec![])).unwrap();
        assert_eq!(check_safety(&tr, &t).unwrap(), Safety::Violation { step: 6, time: tr.times[6] });
        let fast = simulate(&m, &t, &[2.9, 1.9], &cfg, |_, _| Ok(vec![1.0]), |_, _| Ok(vec![])).unwrap();
        assert!(fast.truncated && fast.len() < 11);
        let dir = tempdir();
        let p = dir.join("traj.csv");
        tr.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "time,z1,z2,u,l");
        assert_eq!(text.lines().count(), tr.len() + 1);
    }

    fn tempdir() -> std::path::PathBuf {
        let d = std::env::temp_dir().join(format!("chainreach-synth-{}", std::process::id()));
        std::fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn sequences_are_prefix_stable() {
        let cfg = BruteForceConfig::new(1.0, 0.05);
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let s1 = sample_sequences(&[(-1.0, 1.0)], 8, &cfg, &mut a);
        let s2 = sample_sequences(&[(-1.0, 1.0)], 8, &cfg, &mut b);
        assert_eq!(s1, s2);
        assert_eq!(s1[0].values, vec![vec![-1.0]]);
        assert_eq!(s1[1].values, vec![vec![1.0]]);
        assert!(s1[2..].iter().all(|s| s.switches.len() <= 4 && s.values.len() == s.switches.len() + 1));
    }

    #[test]
    fn brute_force_horizon_zero_is_the_target() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[11, 11], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let unsafe_ = brute_force_brt(&m, &g, &t, &BruteForceConfig::new(0.0, 0.1)).unwrap();
        for (flat, &u) in unsafe_.iter().enumerate() {
            assert_eq!(u, g.point(flat)[0] <= 0.0);
        }
        let big = Grid::new(&m.bounds().to_vec(), &[200, 200], &[false, false], m.labels()).unwrap();
        let r = brute_force_brt(&m, &big, &t, &BruteForceConfig::new(1.0, 0.1));
        assert!(matches!(r, Err(Error::ResourceCap { .. })));
    }

    #[test]
    fn brute_force_grows_with_horizon() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[15, 15], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let mut short = BruteForceConfig::new(0.5, 0.05);
        short.switch_span = 1.0;
        let mut long = short.clone();
        long.horizon = 1.0;
        let a = brute_force_brt(&m, &g, &t, &short).unwrap();
        let b = brute_force_brt(&m, &g, &t, &long).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| !x || *y));
        assert!(b.iter().filter(|&&x| x).count() > a.iter().filter(|&&x| x).count());
    }

    #[test]
    fn brute_force_matches_the_braking_parabola() {
        // z2 < 0 and z1 < z2^2/2 cannot stop before z1 = 0 within the horizon
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[21, 21], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let unsafe_ = brute_force_brt(&m, &g, &t, &BruteForceConfig::new(1.0, 0.01)).unwrap();
        for (flat, &u) in unsafe_.iter().enumerate() {
            let z = g.point(flat);
            let (z1, z2) = (z[0], z[1]);
            let analytic = z1 <= 0.0 || (z2 < 0.0 && if -z2 <= 1.0 { z1 < 0.5 * z2 * z2 } else { z1 < -z2 - 0.5 });
            if u {
                assert!(analytic || z1 < 0.5 * z2 * z2 + 0.2, "{z:?} marked unsafe");
            }
        }
    }
}
