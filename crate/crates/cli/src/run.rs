//! Solving, writing and reloading runs.

use std::fs;
use std::path::{Path, PathBuf};

use chainreach::decomp::{run_decomposed, subsystem_grids, DecomposedResult, FallbackCounts};
use chainreach::depgraph::{build_graph, suggest_plans, validate_plan, DecompositionPlan, DependencyGraph};
use chainreach::dynamics::{builtin, DynamicsModel, ModelParams};
use chainreach::grid::{read_value, write_value};
use chainreach::levelset::{solve_full_brt, SolveResult};
use chainreach::manifest::{
    checkpoint_name, Checkpoint, FallbackRecord, GridRecord, RunManifest, Series, SolveMode, MANIFEST_FILE,
    MANIFEST_FORMAT,
};
use chainreach::synth::ValueField;
use chainreach::{Error, Grid, TargetSpec, ValueFunction};
use clap::ValueEnum;

use crate::config::{PlanChoice, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Full,
    Decomposed,
}

impl From<Mode> for SolveMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Full => SolveMode::Full,
            Mode::Decomposed => SolveMode::Decomposed,
        }
    }
}

pub enum Solved {
    Full(SolveResult),
    Decomposed(DecomposedResult),
}

impl Solved {
    pub fn field(&self) -> &dyn ValueField {
        match self {
            Solved::Full(r) => r,
            Solved::Decomposed(r) => r,
        }
    }

    pub fn dt_history(&self) -> &[f64] {
        match self {
            Solved::Full(r) => &r.dt_history,
            Solved::Decomposed(r) => &r.dt_history,
        }
    }
}

/// Everything needed to run or reload one configuration.
pub struct Problem {
    pub model: DynamicsModel,
    pub graph: DependencyGraph,
    pub grid: Grid,
    pub target: TargetSpec,
    pub target_exprs: Vec<String>,
}

impl Problem {
    pub fn from_config(cfg: &RunConfig) -> Result<Problem, CliError> {
        let model = cfg.build_model()?;
        let grid = cfg.build_grid(&model)?;
        let target = cfg.build_target(&model)?;
        let graph = build_graph(&model);
        Ok(Problem { model, graph, grid, target, target_exprs: cfg.target_exprs()? })
    }
}

fn check_plan(plan: &DecompositionPlan, graph: &DependencyGraph) -> Result<(), CliError> {
    let bad = validate_plan(plan, graph);
    if bad.is_empty() {
        return Ok(());
    }
    let text: Vec<String> = bad.iter().map(ToString::to_string).collect();
    Err(Error::Plan(text.join("; ")).into())
}

/// Turns a plan choice into a validated plan; `auto:p` takes the best
/// suggestion.
pub fn resolve_plan(choice: &PlanChoice, graph: &DependencyGraph) -> Result<DecompositionPlan, CliError> {
    match choice {
        PlanChoice::Explicit(text) => {
            let plan = DecompositionPlan::parse(graph, text, None)?;
            check_plan(&plan, graph)?;
            Ok(plan)
        }
        PlanChoice::Auto(p) => {
            let s = suggest_plans(graph, *p)?;
            s.plans.into_iter().next().ok_or_else(|| {
                let why = s.note.unwrap_or_else(|| format!("no valid plan with at most {p} states per subsystem"));
                Error::Plan(why).into()
            })
        }
    }
}

pub fn solve(cfg: &RunConfig, prob: &Problem, mode: Mode) -> Result<Solved, CliError> {
    let opts = cfg.solve_options();
    Ok(match mode {
        Mode::Full => Solved::Full(solve_full_brt(&prob.model, &prob.grid, &prob.target, &cfg.scheme, &opts)?),
        Mode::Decomposed => {
            let choice = cfg
                .plan_choice()
                .ok_or_else(|| CliError::Usage(format!("model {} has no default plan; pass --plan", cfg.model)))?;
            let plan = resolve_plan(&choice, &prob.graph)?;
            let grids = subsystem_grids(&prob.grid, &plan)?;
            Solved::Decomposed(run_decomposed(&prob.model, &plan, &prob.target, &grids, &cfg.scheme, &opts)?)
        }
    })
}

fn write_series(dir: &Path, model: &str, name: &str, r: &SolveResult) -> Result<Series, CliError> {
    let mut checkpoints = Vec::with_capacity(r.snapshots.len());
    for v in &r.snapshots {
        let file = checkpoint_name(model, name, v.time(), v.grid());
        write_value(v, dir.join(&file))?;
        checkpoints.push(Checkpoint { time: v.time(), file });
    }
    Ok(Series { name: name.to_string(), labels: r.last().grid().labels().to_vec(), checkpoints })
}

/// Writes every checkpoint and the manifest; returns the manifest.
pub fn write_run(cfg: &RunConfig, prob: &Problem, solved: &Solved, dir: &Path) -> Result<RunManifest, CliError> {
    fs::create_dir_all(dir)?;
    let (mode, series, plan, fallbacks, degenerate) = match solved {
        Solved::Full(r) => (SolveMode::Full, vec![write_series(dir, &cfg.model, "full", r)?], None, None, Vec::new()),
        Solved::Decomposed(d) => {
            let series = d
                .results
                .iter()
                .enumerate()
                .map(|(i, r)| write_series(dir, &cfg.model, &format!("s{}", i + 1), r))
                .collect::<Result<Vec<_>, _>>()?;
            (
                SolveMode::Decomposed,
                series,
                Some(d.plan.format(&prob.graph)),
                Some(FallbackRecord::from(&d.fallbacks)),
                d.degenerate.clone(),
            )
        }
    };
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        mode,
        model: cfg.model.clone(),
        params: cfg.params_map(),
        grid: GridRecord::of(&prob.grid),
        target: prob.target_exprs.clone(),
        plan,
        horizon: cfg.horizon,
        scheme: cfg.scheme.name(),
        cfl: cfg.scheme.cfl,
        checkpoint_dt: cfg.checkpoint_dt,
        seed: cfg.seed,
        mem_cap_points: cfg.mem_cap_points,
        dt_history: solved.dt_history().to_vec(),
        fallbacks,
        degenerate_subsystems: degenerate,
        series,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// A run read back from disk.
pub struct Loaded {
    pub manifest: RunManifest,
    pub model: DynamicsModel,
    pub grid: Grid,
    pub target: TargetSpec,
    pub solved: Solved,
}

/// Accepts either a run directory or the manifest file itself.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn load_series(dir: &Path, s: &Series) -> Result<SolveResult, CliError> {
    let snapshots = s
        .checkpoints
        .iter()
        .map(|c| read_value(dir.join(&c.file)))
        .collect::<Result<Vec<ValueFunction>, _>>()?;
    if snapshots.is_empty() {
        return Err(CliError::Usage(format!("series {} has no checkpoints", s.name)));
    }
    Ok(SolveResult { snapshots, dt_history: Vec::new(), alpha_history: Vec::new() })
}

pub fn load_run(path: &Path) -> Result<Loaded, CliError> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath)
        .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", mpath.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(CliError::Usage(format!("unsupported manifest format '{}'", manifest.format)));
    }
    let dir = mpath.parent().unwrap_or(Path::new("."));
    manifest.check_files(dir)?;

    let mut params = ModelParams::new();
    for (k, v) in &manifest.params {
        params.set(k, *v)?;
    }
    let model = builtin(&manifest.model, &params)?;
    let grid = manifest.grid.to_grid()?;
    let target = TargetSpec::parse(&manifest.target)?;
    let mut results = manifest
        .series
        .iter()
        .map(|s| load_series(dir, s))
        .collect::<Result<Vec<_>, _>>()?;
    let solved = match manifest.mode {
        SolveMode::Full => {
            if results.len() != 1 {
                return Err(CliError::Usage("a full run holds exactly one series".into()));
            }
            let mut r = results.remove(0);
            r.dt_history = manifest.dt_history.clone();
            Solved::Full(r)
        }
        SolveMode::Decomposed => {
            let text = manifest
                .plan
                .as_deref()
                .ok_or_else(|| CliError::Usage("decomposed manifest without a plan".into()))?;
            let plan = DecompositionPlan::parse(&build_graph(&model), text, None)?;
            if plan.len() != results.len() {
                return Err(CliError::Usage("series count differs from the plan".into()));
            }
            let mut fallbacks = FallbackCounts::new(plan.len());
            if let Some(f) = &manifest.fallbacks {
                fallbacks.total = f.total;
                fallbacks.in_tube = f.in_tube;
                fallbacks.per_subsystem = f.per_subsystem.clone();
            }
            Solved::Decomposed(DecomposedResult {
                plan,
                results,
                dt_history: manifest.dt_history.clone(),
                fallbacks,
                degenerate: manifest.degenerate_subsystems.clone(),
            })
        }
    };
    Ok(Loaded { manifest, model, grid, target, solved })
}

/// Values of a run on `grid` at the checkpoint nearest to `s`, read
/// directly when the axes match and interpolated otherwise.
pub fn values_on(solved: &Solved, grid: &Grid, s: f64, cap: usize) -> Result<(Vec<f64>, f64), CliError> {
    match solved {
        Solved::Full(r) => {
            let (v, _) = r.nearest(s);
            if v.grid() == grid {
                return Ok((v.values().to_vec(), v.time()));
            }
            let vals = (0..grid.len()).map(|f| v.interpolate(&grid.point(f))).collect::<Result<Vec<_>, _>>()?;
            Ok((vals, v.time()))
        }
        Solved::Decomposed(d) => match d.materialize_combined(grid, s, cap) {
            Ok(v) => {
                let t = v.time();
                Ok((v.into_values(), t))
            }
            Err(Error::DimMismatch { .. }) => {
                let (k, _) = d.nearest(s);
                let vals = (0..grid.len()).map(|f| d.combine_value(&grid.point(f), s)).collect::<Result<Vec<_>, _>>()?;
                Ok((vals, d.times()[k]))
            }
            Err(e) => Err(e.into()),
        },
    }
}
