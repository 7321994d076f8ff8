//! Coupled solution of chained subsystems.
//!
//! Each subsystem carries a value function on its own low-dimensional grid.
//! States it reads but does not carry are drawn, at every step, from the
//! zero sublevel sets of the subsystems that do carry them, and enter its
//! Hamiltonian as extra minimizing inputs. The maximum over subsystems then
//! over-approximates the full tube.

use rayon::prelude::*;

use crate::dynamics::{DynamicsModel, SubsystemHamiltonian};
use crate::error::{Error, Result};
use crate::depgraph::DecompositionPlan;
use crate::grid::{Grid, ValueFunction};
use crate::interval::{Interval, IntervalUnion};
use crate::levelset::{
    apply_floor, apply_tube_min, cfl_dt, checkpoint_times, global_alphas, lf_step, MissingTable, SchemeConfig, SolveOptions,
    SolveResult, TubeMode,
};
use crate::levelset::solve::{check_cap, step_toward};
use crate::target::{constraint_levelset, Constraint, TargetSpec};

/// Sub-grids of `full` along each subsystem's states.
pub fn subsystem_grids(full: &Grid, plan: &DecompositionPlan) -> Result<Vec<Grid>> {
    plan.subsystems()
        .iter()
        .map(|s| {
            if let Some(&bad) = s.iter().find(|&&d| d >= full.dim()) {
                return Err(Error::Invalid(format!("state index {bad} exceeds the grid dimension")));
            }
            full.restrict_dims(s)
        })
        .collect()
}

/// Counts of range lookups that came back empty and were replaced by the
/// full computation bound.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FallbackCounts {
    pub total: usize,
    /// Fallbacks at shared coordinates where the subsystem's own tube is
    /// nonempty, i.e. where the substitution can actually widen the tube.
    pub in_tube: usize,
    pub per_subsystem: Vec<usize>,
}

impl FallbackCounts {
    pub fn new(m: usize) -> Self {
        FallbackCounts { total: 0, in_tube: 0, per_subsystem: vec![0; m] }
    }

    fn add(&mut self, i: usize, stats: RangeStats) {
        self.total += stats.fallbacks;
        self.in_tube += stats.in_tube;
        self.per_subsystem[i] += stats.fallbacks;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RangeStats {
    pub fallbacks: usize,
    pub in_tube: usize,
}

fn check_grids(model: &DynamicsModel, plan: &DecompositionPlan, grids: &[Grid]) -> Result<()> {
    if grids.len() != plan.len() {
        return Err(Error::Invalid(format!("{} grids for {} subsystems", grids.len(), plan.len())));
    }
    let labels = model.labels();
    for (s, g) in plan.subsystems().iter().zip(grids) {
        let want: Vec<&str> = s.iter().map(|&i| labels[i].as_str()).collect();
        if g.labels() != want.as_slice() {
            return Err(Error::Invalid(format!("grid labels {:?} differ from subsystem {:?}", g.labels(), want)));
        }
    }
    // every state must be gridded identically wherever it appears
    for (a, (sa, ga)) in plan.subsystems().iter().zip(grids).enumerate() {
        for (sb, gb) in plan.subsystems().iter().zip(grids).skip(a + 1) {
            for (da, st) in sa.iter().enumerate() {
                if let Ok(db) = sb.binary_search(st) {
                    if !ga.same_axis(da, gb, db) {
                        return Err(Error::DimMismatch {
                            dim: labels[*st].clone(),
                            reason: "gridded differently in two subsystems".into(),
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Final-time subsystem values: the minimum of the target function over the
/// states each subsystem does not carry.
///
/// Constraints on carried states are kept; each dropped state contributes the
/// minimum of its constraints over its grid axis. For targets made of
/// per-state constraints this is the exact grid projection.
pub fn init_subsystem_values(
    model: &DynamicsModel,
    plan: &DecompositionPlan,
    target: &TargetSpec,
    grids: &[Grid],
) -> Result<Vec<ValueFunction>> {
    check_grids(model, plan, grids)?;
    target.check_labels(model.labels())?;
    let labels = model.labels();
    // axis of every state, taken from any subsystem that carries it
    let mut axis: Vec<Option<Vec<f64>>> = vec![None; model.n()];
    for (s, g) in plan.subsystems().iter().zip(grids) {
        for (d, &st) in s.iter().enumerate() {
            axis[st].get_or_insert_with(|| g.coords(d));
        }
    }
    plan.subsystems()
        .iter()
        .zip(grids)
        .map(|(s, g)| {
            let carried: Vec<&str> = s.iter().map(|&i| labels[i].as_str()).collect();
            let kept = target.restricted_to(&carried);
            let mut floor = f64::NEG_INFINITY;
            let mut dropped: Vec<&str> = target
                .constraints()
                .iter()
                .filter(|c| !carried.contains(&c.label.as_str()))
                .map(|c| c.label.as_str())
                .collect();
            dropped.sort_unstable();
            dropped.dedup();
            for label in dropped {
                let st = model.state_index(label).expect("checked label");
                let xs = axis[st].as_ref().ok_or_else(|| {
                    Error::Plan(format!("target constrains '{label}', which no subsystem carries"))
                })?;
                let cs: Vec<&Constraint> = target.constraints().iter().filter(|c| c.label == label).collect();
                let m = xs
                    .iter()
                    .map(|&x| cs.iter().map(|c| c.level(x)).fold(f64::NEG_INFINITY, f64::max))
                    .fold(f64::INFINITY, f64::min);
                floor = floor.max(m);
            }
            if kept.is_empty() {
                return ValueFunction::new(g.clone(), vec![floor; g.len()], 0.0);
            }
            let v = constraint_levelset(&kept, g)?;
            if floor == f64::NEG_INFINITY {
                return Ok(v);
            }
            let vals = v.values().iter().map(|&x| x.max(floor)).collect();
            ValueFunction::new(g.clone(), vals, 0.0)
        })
        .collect()
}

/// Subsystems whose final values ignore every target constraint.
pub fn degenerate_subsystems(model: &DynamicsModel, plan: &DecompositionPlan, target: &TargetSpec) -> Vec<usize> {
    let labels = model.labels();
    plan.subsystems()
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let carried: Vec<&str> = s.iter().map(|&i| labels[i].as_str()).collect();
            target.restricted_to(&carried).is_empty()
        })
        .map(|(i, _)| i)
        .collect()
}

/// Maximal runs of nonpositive samples along one axis, widened by one
/// spacing on each side. Runs reaching a non-periodic grid edge are further
/// extended past it by `beyond`, since trajectories may leave the grid.
fn runs(vals: impl Iterator<Item = f64>, grid: &Grid, d: usize, beyond: f64) -> IntervalUnion {
    let h = grid.spacing(d);
    let n = grid.count(d);
    let open = if grid.is_periodic(d) { 0.0 } else { beyond };
    let mut parts = Vec::new();
    let mut start: Option<usize> = None;
    let mut close = |a: usize, b: usize| {
        let lo = grid.coord(d, a) - h - if a == 0 { open } else { 0.0 };
        let hi = grid.coord(d, b) + h + if b + 1 == n { open } else { 0.0 };
        parts.push(Interval::new(lo, hi));
    };
    for (j, v) in vals.enumerate() {
        if v <= 0.0 {
            start.get_or_insert(j);
        } else if let Some(a) = start.take() {
            close(a, j - 1);
        }
    }
    if let Some(a) = start {
        close(a, n - 1);
    }
    IntervalUnion::from_intervals(parts)
}

/// Subsystems evolving together, all at the same time.
#[derive(Debug, Clone)]
pub struct CoupledState {
    plan: DecompositionPlan,
    hams: Vec<SubsystemHamiltonian>,
    current: Vec<ValueFunction>,
    initial: Vec<ValueFunction>,
    time: f64,
    horizon: f64,
    floor: Option<f64>,
    // bound on |dz_j/dt| over the computation box, per model state
    reach: Vec<f64>,
}

/// Outcome of one synchronized step.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub dt: f64,
    /// True when the CFL limit, not the request, set `dt`.
    pub cfl_limited: bool,
    pub alphas: Vec<Vec<f64>>,
    pub stats: Vec<RangeStats>,
}

impl CoupledState {
    /// Sets up the final-time values for a run of length `horizon`.
    pub fn new(
        model: &DynamicsModel,
        plan: &DecompositionPlan,
        target: &TargetSpec,
        grids: &[Grid],
        scheme: &SchemeConfig,
        horizon: f64,
    ) -> Result<CoupledState> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::Invalid(format!("horizon must be finite and nonnegative, got {horizon}")));
        }
        scheme.validate()?;
        let initial = init_subsystem_values(model, plan, target, grids)?;
        let hams = plan
            .subsystems()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let h = SubsystemHamiltonian::new(model, s, scheme.lattice)?;
                for &j in h.missing() {
                    if plan.providers(i, j).is_empty() {
                        return Err(Error::Plan(format!(
                            "missing state '{}' of subsystem {} has no provider",
                            model.labels()[j],
                            i + 1
                        )));
                    }
                }
                Ok(h)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut bx: Vec<Interval> = model.bounds().iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect();
        for (s, g) in plan.subsystems().iter().zip(grids) {
            for (d, &st) in s.iter().enumerate() {
                bx[st] = Interval::new(g.lower(d), g.upper(d));
            }
        }
        let reach = (0..model.n()).map(|j| model.component_bound(j, &bx).mag()).collect();
        Ok(CoupledState {
            plan: plan.clone(),
            hams,
            current: initial.clone(),
            initial,
            time: 0.0,
            horizon,
            floor: target.infimum(),
            reach,
        })
    }

    pub fn plan(&self) -> &DecompositionPlan {
        &self.plan
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn values(&self) -> &[ValueFunction] {
        &self.current
    }

    pub fn initial(&self) -> &[ValueFunction] {
        &self.initial
    }

    /// Range tables of every missing state of subsystem `i`, built from the
    /// current provider values, in the order of the subsystem's missing
    /// states.
    pub fn missing_ranges(&self, i: usize) -> Result<(Vec<MissingTable>, RangeStats)> {
        let subs = self.plan.subsystems();
        let si = &subs[i];
        let gi = self.current[i].grid();
        let mut stats = RangeStats::default();
        let mut tables = Vec::with_capacity(self.hams[i].missing().len());
        for &j in self.hams[i].missing() {
            // how far z_j can drift past the grid within the horizon
            let beyond = self.reach[j] * self.horizon;
            // per provider: shared states (ascending) and a table over them
            let mut provided: Vec<(Vec<usize>, Grid, Vec<IntervalUnion>)> = Vec::new();
            let mut bound = None;
            for &k in self.plan.providers(i, j) {
                let sk = &subs[k];
                let wk = &self.current[k];
                let jd = sk.binary_search(&j).expect("provider carries the state");
                let keep: Vec<usize> =
                    (0..sk.len()).filter(|&d| d == jd || si.binary_search(&sk[d]).is_ok()).collect();
                let proj = wk.project_min_dims(&keep)?;
                let pg = proj.grid();
                let jp = keep.iter().position(|&d| d == jd).expect("kept");
                bound.get_or_insert((pg.lower(jp), pg.upper(jp)));
                let shared_dims: Vec<usize> = (0..keep.len()).filter(|&d| d != jp).collect();
                let shared_states: Vec<usize> = shared_dims.iter().map(|&d| sk[keep[d]]).collect();
                let sg = pg.restrict_dims(&shared_dims)?;
                let mut idx = vec![0usize; sg.dim()];
                let mut full = vec![0usize; pg.dim()];
                let vals = proj.values();
                let table = (0..sg.len())
                    .map(|c| {
                        sg.unravel(c, &mut idx);
                        for (t, &d) in shared_dims.iter().enumerate() {
                            full[d] = idx[t];
                        }
                        full[jp] = 0;
                        let base = pg.flat_index(&full);
                        let st = pg.stride(jp);
                        runs((0..pg.count(jp)).map(|q| vals[base + q * st]), pg, jp, beyond)
                    })
                    .collect();
                provided.push((shared_states, sg, table));
            }
            let (lo, hi) = bound.expect("at least one provider");
            // table dims: union of shared states, as positions in subsystem i
            let mut dims: Vec<usize> = provided
                .iter()
                .flat_map(|(ss, _, _)| ss.iter().map(|s| si.binary_search(s).expect("shared")))
                .collect();
            dims.sort_unstable();
            dims.dedup();
            let tg = gi.restrict_dims(&dims)?;
            let own = self.current[i].project_min_dims(&dims)?;
            let mut idx = vec![0usize; tg.dim()];
            let mut sub = Vec::new();
            let ranges = (0..tg.len())
                .map(|c| {
                    tg.unravel(c, &mut idx);
                    let mut acc: Option<IntervalUnion> = None;
                    for (ss, sg, table) in &provided {
                        sub.clear();
                        sub.extend(ss.iter().map(|s| {
                            let d = si.binary_search(s).expect("shared");
                            idx[dims.binary_search(&d).expect("table dim")]
                        }));
                        let r = &table[sg.flat_index(&sub)];
                        acc = Some(match acc {
                            None => r.clone(),
                            Some(a) => a.intersect(r),
                        });
                    }
                    let r = acc.expect("at least one provider");
                    if r.is_empty() {
                        stats.fallbacks += 1;
                        if own.values()[c] <= 0.0 {
                            stats.in_tube += 1;
                        }
                        IntervalUnion::single(lo, hi)
                    } else {
                        r
                    }
                })
                .collect();
            tables.push(MissingTable::new(j, dims, gi, ranges)?);
        }
        Ok((tables, stats))
    }

    /// Advances every subsystem by one shared step of at most `dt_request`.
    ///
    /// All range tables are built from the current values before any
    /// subsystem moves.
    pub fn step_all(&mut self, dt_request: f64, scheme: &SchemeConfig) -> Result<StepInfo> {
        if !(dt_request > 0.0) {
            return Err(Error::Invalid(format!("step request must be positive, got {dt_request}")));
        }
        let built = (0..self.plan.len())
            .into_par_iter()
            .map(|i| self.missing_ranges(i))
            .collect::<Result<Vec<_>>>()?;
        let alphas: Vec<Vec<f64>> = built
            .iter()
            .zip(&self.hams)
            .zip(&self.current)
            .map(|(((tables, _), ham), v)| global_alphas(ham, v.grid(), tables))
            .collect();
        let dt_cfl = alphas
            .iter()
            .zip(&self.current)
            .map(|(a, v)| cfl_dt(a, v.grid(), scheme.cfl))
            .fold(f64::INFINITY, f64::min);
        let (dt, lands) = step_toward(self.time, self.time - dt_request, dt_cfl);
        assert!(dt <= dt_cfl, "step {dt} exceeds the CFL limit {dt_cfl}");
        let next = (0..self.plan.len())
            .into_par_iter()
            .map(|i| {
                let v = &self.current[i];
                let stepped = lf_step(v, &self.hams[i], &built[i].0, &alphas[i], dt, scheme)?;
                let clip = match scheme.tube {
                    TubeMode::RunningMin => v,
                    TubeMode::Target => &self.initial[i],
                };
                Ok(apply_floor(apply_tube_min(&stepped, clip)?, self.floor))
            })
            .collect::<Result<Vec<_>>>()?;
        self.current = next;
        self.time -= dt;
        Ok(StepInfo { dt, cfl_limited: !lands, alphas, stats: built.into_iter().map(|(_, s)| s).collect() })
    }

    fn set_time(&mut self, t: f64) {
        self.time = t;
        self.current = self.current.drain(..).map(|v| v.with_time(t)).collect();
    }

    /// Combined value at a full state from the current subsystem values.
    pub fn combine_value(&self, z: &[f64]) -> Result<f64> {
        combine(&self.plan, self.current.iter(), z)
    }
}

fn combine<'a>(
    plan: &DecompositionPlan,
    values: impl Iterator<Item = &'a ValueFunction>,
    z: &[f64],
) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    let mut zs = Vec::new();
    for (s, v) in plan.subsystems().iter().zip(values) {
        zs.clear();
        for &i in s {
            zs.push(*z.get(i).ok_or_else(|| Error::Invalid(format!("state has {} coordinates", z.len())))?);
        }
        best = best.max(v.interpolate(&zs)?);
    }
    Ok(best)
}

/// Time series of every subsystem together with run bookkeeping.
#[derive(Debug, Clone)]
pub struct DecomposedResult {
    pub plan: DecompositionPlan,
    pub results: Vec<SolveResult>,
    pub dt_history: Vec<f64>,
    pub fallbacks: FallbackCounts,
    pub degenerate: Vec<usize>,
}

impl DecomposedResult {
    /// Checkpoint times shared by all subsystems, from `0` downward.
    pub fn times(&self) -> Vec<f64> {
        self.results[0].snapshots.iter().map(ValueFunction::time).collect()
    }

    /// Index of the checkpoint closest to `s` and whether it matches exactly.
    pub fn nearest(&self, s: f64) -> (usize, bool) {
        let times = self.times();
        let k = (0..times.len())
            .min_by(|&a, &b| (times[a] - s).abs().total_cmp(&(times[b] - s).abs()))
            .expect("at least the initial snapshot");
        (k, (times[k] - s).abs() <= 1e-9)
    }

    /// Subsystem values at checkpoint `k`.
    pub fn snapshot(&self, k: usize) -> impl Iterator<Item = &ValueFunction> {
        self.results.iter().map(move |r| &r.snapshots[k])
    }

    /// Maximum over subsystems at the checkpoint nearest to `s`.
    pub fn combine_value(&self, z: &[f64], s: f64) -> Result<f64> {
        let (k, _) = self.nearest(s);
        combine(&self.plan, self.snapshot(k), z)
    }

    /// Combined value tabulated on a full grid whose axes match the
    /// subsystem grids.
    pub fn materialize_combined(&self, full: &Grid, s: f64, cap: usize) -> Result<ValueFunction> {
        check_cap(full, cap)?;
        let (k, _) = self.nearest(s);
        let subs = self.plan.subsystems();
        // flat-index strides of each full dimension inside each subsystem grid
        let mut strides = Vec::with_capacity(subs.len());
        for (st, v) in subs.iter().zip(self.snapshot(k)) {
            let g = v.grid();
            let mut row = vec![0usize; full.dim()];
            for (d, &i) in st.iter().enumerate() {
                if i >= full.dim() || !g.same_axis(d, full, i) {
                    return Err(Error::DimMismatch {
                        dim: g.label(d).to_string(),
                        reason: "full grid axis differs from the subsystem grid".into(),
                    });
                }
                row[i] = g.stride(d);
            }
            strides.push(row);
        }
        let snaps: Vec<&ValueFunction> = self.snapshot(k).collect();
        let time = snaps[0].time();
        let mut vals = vec![0.0; full.len()];
        vals.par_chunks_mut(4096).enumerate().for_each(|(c, out)| {
            let mut idx = vec![0usize; full.dim()];
            for (o, slot) in out.iter_mut().enumerate() {
                full.unravel(c * 4096 + o, &mut idx);
                *slot = snaps
                    .iter()
                    .zip(&strides)
                    .map(|(v, row)| v.values()[idx.iter().zip(row).map(|(a, b)| a * b).sum::<usize>()])
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        });
        ValueFunction::new(full.clone(), vals, time)
    }
}

/// Solves all subsystems from `0` down to `-horizon`, snapshotting at
/// shared checkpoints.
pub fn run_decomposed(
    model: &DynamicsModel,
    plan: &DecompositionPlan,
    target: &TargetSpec,
    grids: &[Grid],
    scheme: &SchemeConfig,
    opts: &SolveOptions,
) -> Result<DecomposedResult> {
    for g in grids {
        check_cap(g, opts.mem_cap_points)?;
    }
    let times = checkpoint_times(opts.horizon, opts.checkpoint_dt)?;
    let mut state = CoupledState::new(model, plan, target, grids, scheme, opts.horizon)?;
    let m = plan.len();
    let mut results: Vec<SolveResult> = state
        .current
        .iter()
        .map(|v| SolveResult { snapshots: vec![v.clone()], dt_history: Vec::new(), alpha_history: Vec::new() })
        .collect();
    let mut fallbacks = FallbackCounts::new(m);
    let mut dt_history = Vec::new();
    for &cp in &times[1..] {
        while state.time() > cp {
            let info = state.step_all(state.time() - cp, scheme)?;
            if !info.cfl_limited {
                state.set_time(cp);
            }
            for (i, (r, a)) in results.iter_mut().zip(info.alphas).enumerate() {
                r.dt_history.push(info.dt);
                r.alpha_history.push(a);
                fallbacks.add(i, info.stats[i]);
            }
            dt_history.push(info.dt);
        }
        for (r, v) in results.iter_mut().zip(&state.current) {
            r.snapshots.push(v.clone());
        }
    }
    Ok(DecomposedResult {
        plan: plan.clone(),
        results,
        dt_history,
        fallbacks,
        degenerate: degenerate_subsystems(model, plan, target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::build_graph;
    use crate::dynamics::{builtin, ModelParams};
    use crate::levelset::solve_full_brt;
    use crate::target::target_levelset;

    fn quad4(k: usize) -> (DynamicsModel, DecompositionPlan, Grid, TargetSpec) {
        let m = builtin("quad4", &ModelParams::default()).unwrap();
        let g = build_graph(&m);
        let plan = DecompositionPlan::parse(&g, "z1,z2|z2,z3|z3,z4", Some(2)).unwrap();
        let full = Grid::new(&m.bounds().to_vec(), &[k; 4], &[false; 4], m.labels()).unwrap();
        let t = TargetSpec::parse(&["-6 < z1 < 6", "z2 < -4", "z3 < -2"]).unwrap();
        (m, plan, full, t)
    }

    #[test]
    fn runs_are_widened() {
        let g = Grid::new(&[(0.0, 10.0)], &[11], &[false], &["x"]).unwrap();
        let v = [1.0, 0.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let r = runs(v.iter().copied(), &g, 0, 0.0);
        assert_eq!(r.intervals(), &[Interval::new(0.0, 3.0), Interval::new(7.0, 11.0)]);
        let r = runs(v.iter().copied(), &g, 0, 5.0);
        assert_eq!(r.intervals(), &[Interval::new(0.0, 3.0), Interval::new(7.0, 16.0)]);
        assert!(runs([1.0; 11].iter().copied(), &g, 0, 5.0).is_empty());
    }

    #[test]
    fn quad4_initialization_maps_constraints_by_membership() {
        let (m, plan, full, t) = quad4(11);
        let grids = subsystem_grids(&full, &plan).unwrap();
        let w = init_subsystem_values(&m, &plan, &t, &grids).unwrap();
        let l = target_levelset(&t, &full).unwrap();
        // each initial value is the min-projection of l
        for (s, wi) in plan.subsystems().iter().zip(&w) {
            assert_eq!(wi, &l.project_min_dims(s).unwrap());
        }
        // W3 sees only the z3 constraint
        assert_eq!(w[2].interpolate(&[-4.0, 7.0]).unwrap(), -2.0);
        assert!(degenerate_subsystems(&m, &plan, &t).is_empty());
    }

    #[test]
    fn single_state_target_leaves_degenerate_subsystems() {
        let (m, plan, full, _) = quad4(11);
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let grids = subsystem_grids(&full, &plan).unwrap();
        let w = init_subsystem_values(&m, &plan, &t, &grids).unwrap();
        assert!(w[1].values().iter().all(|&v| v == -10.0));
        assert_eq!(degenerate_subsystems(&m, &plan, &t), vec![1, 2]);
    }

    #[test]
    fn ranges_at_final_time() {
        let (m, plan, full, t) = quad4(11);
        let grids = subsystem_grids(&full, &plan).unwrap();
        let c = CoupledState::new(&m, &plan, &t, &grids, &SchemeConfig::default(), 0.0).unwrap();
        let (tables, stats) = c.missing_ranges(0).unwrap();
        assert_eq!(tables.len(), 1);
        assert_eq!((tables[0].state, tables[0].dims.as_slice()), (2, &[1][..]));
        // z2 = -6 lies in W2's tube: z3 in [-10, -2] widened by one cell
        let r = tables[0].at(&[0, 2]);
        assert_eq!(r.intervals(), &[Interval::new(-12.0, 0.0)]);
        // z2 = 0 is outside W2's tube and falls back to the full bound
        assert_eq!(tables[0].at(&[0, 5]).intervals(), &[Interval::new(-10.0, 10.0)]);
        assert_eq!(stats.fallbacks, 7);
        assert_eq!(stats.in_tube, 0);
        // S3 reads nothing it lacks
        assert!(c.missing_ranges(2).unwrap().0.is_empty());
    }

    #[test]
    fn third_subsystem_ignores_its_neighbours() {
        let (m, plan, full, t) = quad4(11);
        let grids = subsystem_grids(&full, &plan).unwrap();
        let opts = SolveOptions { horizon: 0.3, checkpoint_dt: None, ..SolveOptions::default() };
        let scheme = SchemeConfig::default();
        let coupled = run_decomposed(&m, &plan, &t, &grids, &scheme, &opts).unwrap();
        // W3 alone, stepped with the coupled run's dt sequence
        let ham = SubsystemHamiltonian::new(&m, &[2, 3], scheme.lattice).unwrap();
        let mut v = coupled.results[2].snapshots[0].clone();
        for &dt in &coupled.dt_history {
            let a = global_alphas(&ham, v.grid(), &[]);
            let next = lf_step(&v, &ham, &[], &a, dt, &scheme).unwrap();
            v = apply_tube_min(&next, &v).unwrap();
        }
        assert_eq!(v.values(), coupled.results[2].snapshots[1].values());
    }

    #[test]
    fn whole_plan_matches_full_solver_bitwise() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = build_graph(&m);
        let plan = DecompositionPlan::whole(&g);
        let full = Grid::new(&m.bounds().to_vec(), &[21, 21], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let opts = SolveOptions { horizon: 0.5, checkpoint_dt: Some(0.1), ..SolveOptions::default() };
        for scheme in ["o1,euler,llf", "o2,rk2,glf,target"] {
            let scheme = SchemeConfig::parse(scheme).unwrap();
            let a = solve_full_brt(&m, &full, &t, &scheme, &opts).unwrap();
            let b = run_decomposed(&m, &plan, &t, &[full.clone()], &scheme, &opts).unwrap();
            assert_eq!(a.snapshots, b.results[0].snapshots);
            assert_eq!(a.dt_history, b.dt_history);
            let mat = b.materialize_combined(&full, -0.5, 1 << 20).unwrap();
            assert_eq!(&mat, a.last());
        }
    }

    #[test]
    fn ranges_never_shrink_and_combined_tube_grows() {
        let (m, plan, full, t) = quad4(11);
        let grids = subsystem_grids(&full, &plan).unwrap();
        let scheme = SchemeConfig::default();
        let mut c = CoupledState::new(&m, &plan, &t, &grids, &scheme, 1.0).unwrap();
        let mut prev = c.missing_ranges(1).unwrap().0;
        for _ in 0..5 {
            c.step_all(0.05, &scheme).unwrap();
            let next = c.missing_ranges(1).unwrap().0;
            let fallback = IntervalUnion::single(-10.0, 10.0);
            for (a, b) in prev[0].ranges.iter().zip(&next[0].ranges).filter(|(a, _)| **a != fallback) {
                assert!(b.covers(a), "{b:?} lost part of {a:?}");
            }
            prev = next;
        }
        for (w, w0) in c.values().iter().zip(c.initial()) {
            assert!(w.values().iter().zip(w0.values()).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn combined_value_is_the_subsystem_maximum() {
        let (m, plan, full, t) = quad4(11);
        let grids = subsystem_grids(&full, &plan).unwrap();
        let c = CoupledState::new(&m, &plan, &t, &grids, &SchemeConfig::default(), 0.0).unwrap();
        let z = [2.0, -6.0, -4.0, 2.0];
        let v = c.combine_value(&z).unwrap();
        assert_eq!(v, t.level(m.labels(), &z).unwrap());
        assert!(c.combine_value(&[11.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn misaligned_grids_are_rejected() {
        let (m, plan, full, t) = quad4(11);
        let mut grids = subsystem_grids(&full, &plan).unwrap();
        grids[1] = Grid::new(&[(-10.0, 10.0), (-10.0, 10.0)], &[13, 11], &[false, false], &["z2", "z3"]).unwrap();
        let r = CoupledState::new(&m, &plan, &t, &grids, &SchemeConfig::default(), 0.0);
        assert!(matches!(r, Err(Error::DimMismatch { .. })));
    }
}
