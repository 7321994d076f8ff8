use super::{apply_floor, apply_tube_min, cfl_dt, global_alphas, lf_step, SchemeConfig, TubeMode};
use crate::dynamics::{DynamicsModel, SubsystemHamiltonian};
use crate::error::{Error, Result};
use crate::grid::{Grid, ValueFunction};
use crate::target::{target_levelset, TargetSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub horizon: f64,
    /// Spacing of stored snapshots; `None` keeps only the endpoints.
    pub checkpoint_dt: Option<f64>,
    /// Largest grid (in points) a solve may allocate.
    pub mem_cap_points: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { horizon: 1.0, checkpoint_dt: Some(0.1), mem_cap_points: 20_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Values at the checkpoint times, starting at `s = 0`.
    pub snapshots: Vec<ValueFunction>,
    pub dt_history: Vec<f64>,
    /// Global dissipation bounds per dimension, one row per step.
    pub alpha_history: Vec<Vec<f64>>,
}

impl SolveResult {
    pub fn last(&self) -> &ValueFunction {
        self.snapshots.last().expect("at least the initial snapshot")
    }

    /// Snapshot closest in time to `s`, and whether it sits exactly at `s`.
    pub fn nearest(&self, s: f64) -> (&ValueFunction, bool) {
        let v = self
            .snapshots
            .iter()
            .min_by(|a, b| (a.time() - s).abs().total_cmp(&(b.time() - s).abs()))
            .expect("at least the initial snapshot");
        (v, (v.time() - s).abs() <= 1e-9)
    }
}

/// `[0, -c, -2c, ..., -horizon]`, always ending exactly at `-horizon`.
pub fn checkpoint_times(horizon: f64, every: Option<f64>) -> Result<Vec<f64>> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Invalid(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    let mut times = vec![0.0];
    if horizon == 0.0 {
        return Ok(times);
    }
    if let Some(c) = every {
        if !(c > 0.0) {
            return Err(Error::Invalid(format!("checkpoint interval must be positive, got {c}")));
        }
        let mut k = 1;
        while (k as f64) * c < horizon * (1.0 - 1e-9) {
            times.push(-(k as f64) * c);
            k += 1;
        }
    }
    times.push(-horizon);
    Ok(times)
}

pub(crate) fn check_cap(grid: &Grid, cap: usize) -> Result<()> {
    if grid.len() > cap {
        return Err(Error::ResourceCap { requested: grid.len(), cap });
    }
    Ok(())
}

/// Step length toward checkpoint `cp` from time `t`; the flag marks the
/// final step that lands on it.
pub(crate) fn step_toward(t: f64, cp: f64, dt_cfl: f64) -> (f64, bool) {
    let remaining = t - cp;
    if dt_cfl >= remaining {
        (remaining, true)
    } else {
        (dt_cfl, false)
    }
}

/// Ground-truth tube on the full state grid.
pub fn solve_full_brt(
    model: &DynamicsModel,
    grid: &Grid,
    target: &TargetSpec,
    scheme: &SchemeConfig,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    scheme.validate()?;
    if grid.labels() != model.labels() {
        return Err(Error::Invalid(format!(
            "grid labels {:?} differ from model states {:?}",
            grid.labels(),
            model.labels()
        )));
    }
    check_cap(grid, opts.mem_cap_points)?;
    let times = checkpoint_times(opts.horizon, opts.checkpoint_dt)?;
    let l = target_levelset(target, grid)?;
    let states: Vec<usize> = (0..model.n()).collect();
    let ham = SubsystemHamiltonian::new(model, &states, scheme.lattice)?;

    let floor = target.infimum();
    let mut v = l.clone();
    let mut out = SolveResult { snapshots: vec![l.clone()], dt_history: Vec::new(), alpha_history: Vec::new() };
    for &cp in &times[1..] {
        while v.time() > cp {
            let alphas = global_alphas(&ham, grid, &[]);
            let dt_cfl = cfl_dt(&alphas, grid, scheme.cfl);
            let (dt, lands) = step_toward(v.time(), cp, dt_cfl);
            assert!(dt <= dt_cfl, "step {dt} exceeds the CFL limit {dt_cfl}");
            let next = lf_step(&v, &ham, &[], &alphas, dt, scheme)?;
            let clip = match scheme.tube {
                TubeMode::RunningMin => &v,
                TubeMode::Target => &l,
            };
            v = apply_floor(apply_tube_min(&next, clip)?, floor);
            if lands {
                v = v.with_time(cp);
            }
            out.dt_history.push(dt);
            out.alpha_history.push(alphas);
        }
        out.snapshots.push(v.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{builtin, ModelParams};

    #[test]
    fn checkpoints() {
        assert_eq!(checkpoint_times(0.0, Some(0.1)).unwrap(), vec![0.0]);
        assert_eq!(checkpoint_times(1.0, None).unwrap(), vec![0.0, -1.0]);
        let t = checkpoint_times(0.3, Some(0.1)).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), -0.3);
        assert_eq!(checkpoint_times(0.25, Some(0.1)).unwrap().len(), 4);
        assert!(checkpoint_times(-1.0, None).is_err());
    }

    #[test]
    fn zero_horizon_returns_target() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[11, 11], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let opts = SolveOptions { horizon: 0.0, ..SolveOptions::default() };
        let r = solve_full_brt(&m, &g, &t, &SchemeConfig::default(), &opts).unwrap();
        assert_eq!(r.snapshots.len(), 1);
        assert_eq!(r.last(), &target_levelset(&t, &g).unwrap());
    }

    #[test]
    fn memory_cap_refuses() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[11, 11], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let opts = SolveOptions { mem_cap_points: 100, ..SolveOptions::default() };
        let r = solve_full_brt(&m, &g, &t, &SchemeConfig::default(), &opts);
        assert!(matches!(r, Err(Error::ResourceCap { requested: 121, cap: 100 })));
    }

    #[test]
    fn tube_is_monotone_and_below_target() {
        let m = builtin("double_int", &ModelParams::default()).unwrap();
        let g = Grid::new(&m.bounds().to_vec(), &[31, 31], &[false, false], m.labels()).unwrap();
        let t = TargetSpec::parse(&["z1 < 0"]).unwrap();
        let opts = SolveOptions { horizon: 0.5, checkpoint_dt: Some(0.1), ..SolveOptions::default() };
        let r = solve_full_brt(&m, &g, &t, &SchemeConfig::default(), &opts).unwrap();
        assert_eq!(r.snapshots.len(), 6);
        let l = &r.snapshots[0];
        for w in r.snapshots.windows(2) {
            assert!(w[1].time() < w[0].time());
            for (a, b) in w[1].values().iter().zip(w[0].values()) {
                assert!(a <= b);
            }
        }
        for s in &r.snapshots {
            for ((v, lv), flat) in s.values().iter().zip(l.values()).zip(0..) {
                assert!(v <= lv);
                if *lv <= 0.0 {
                    assert!(*v <= 0.0, "target point {flat} left the tube");
                }
            }
        }
        let limit = r.alpha_history.iter().map(|a| cfl_dt(a, &g, 0.5)).fold(f64::INFINITY, f64::min);
        assert!(r.dt_history.iter().all(|&dt| dt <= limit + 1e-15));
    }
}
