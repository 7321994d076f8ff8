//! Run configuration: command-line flags layered over an optional TOML file
//! layered over defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chainreach::dynamics::{builtin, builtin_plan, builtin_target, DynamicsModel, ModelParams};
use chainreach::levelset::{SchemeConfig, SolveOptions};
use chainreach::{Grid, TargetSpec};
use clap::Args;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_K: usize = 11;
pub const DEFAULT_OUT: &str = "out";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML file with [model], [grid], [target], [plan], [solver] and [run]
    /// sections. Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Model parameter, key=value. Repeatable.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    pub params: Vec<String>,
    /// Points per dimension: one k for all, or a comma list.
    #[arg(long, global = true, value_name = "K|K1,K2,..")]
    pub grid: Option<String>,
    /// Override one dimension's bounds, label=lo:hi. Repeatable.
    #[arg(long = "bounds", global = true, value_name = "DIM=LO:HI")]
    pub bounds: Vec<String>,
    /// Target constraint such as "z2 < -4" or "-6 < z1 < 6". Repeatable.
    #[arg(long = "target", global = true, value_name = "EXPR", allow_hyphen_values = true)]
    pub target: Vec<String>,
    /// auto:p or an explicit plan such as "z1,z2|z2,z3|z3,z4".
    #[arg(long, global = true)]
    pub plan: Option<String>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Comma-separated scheme tokens: o1|o2, euler|rk2, llf|glf, running|target.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    #[arg(long, global = true)]
    pub cfl: Option<f64>,
    /// Checkpoint spacing; 0 keeps only the endpoints.
    #[arg(long = "checkpoint-dt", global = true)]
    pub checkpoint_dt: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "mem-cap-points", global = true)]
    pub mem_cap_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    target: TargetSection,
    #[serde(default)]
    plan: PlanSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    name: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    k: Option<usize>,
    counts: Option<Vec<usize>>,
    /// label = "lo:hi"
    #[serde(default)]
    bounds: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    constraints: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSection {
    plan: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    horizon: Option<f64>,
    scheme: Option<String>,
    cfl: Option<f64>,
    checkpoint_dt: Option<f64>,
    mem_cap_points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    out: Option<PathBuf>,
    threads: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanChoice {
    Auto(usize),
    Explicit(String),
}

impl PlanChoice {
    pub fn parse(s: &str) -> Result<PlanChoice, CliError> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("auto:") {
            let p = p
                .trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad plan budget in '{s}'")))?;
            return Ok(PlanChoice::Auto(p));
        }
        if s.is_empty() {
            return Err(CliError::Usage("empty plan".into()));
        }
        Ok(PlanChoice::Explicit(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub enum GridCounts {
    All(usize),
    Each(Vec<usize>),
}

impl GridCounts {
    pub fn parse(s: &str) -> Result<GridCounts, CliError> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("bad grid count '{t}'"))))
            .collect::<Result<_, _>>()?;
        Ok(if parts.len() == 1 { GridCounts::All(parts[0]) } else { GridCounts::Each(parts) })
    }

    fn expand(&self, n: usize) -> Result<Vec<usize>, CliError> {
        match self {
            GridCounts::All(k) => Ok(vec![*k; n]),
            GridCounts::Each(v) if v.len() == n => Ok(v.clone()),
            GridCounts::Each(v) => Err(CliError::Usage(format!("grid lists {} counts, model has {n} states", v.len()))),
        }
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub params: ModelParams,
    pub grid: GridCounts,
    pub bounds: BTreeMap<String, (f64, f64)>,
    /// Empty means the model's built-in target.
    pub target: Vec<String>,
    pub plan: Option<PlanChoice>,
    pub horizon: f64,
    pub scheme: SchemeConfig,
    pub checkpoint_dt: Option<f64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub seed: u64,
    pub mem_cap_points: usize,
}

fn parse_bound(text: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("expected lo:hi, got '{text}'")))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad bound '{t}'")));
    Ok((num(lo)?, num(hi)?))
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig, CliError> {
        let file = match &args.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let defaults = SolveOptions::default();

        let model = args
            .model
            .clone()
            .or(file.model.name)
            .ok_or_else(|| CliError::Usage("no model given (use --model)".into()))?;

        let mut params = ModelParams::new();
        for (k, v) in &file.model.params {
            params.set(k, *v)?;
        }
        for (k, v) in ModelParams::parse(&args.params)?.iter() {
            params.set(k, v)?;
        }

        let grid = match (&args.grid, file.grid.counts, file.grid.k) {
            (Some(g), _, _) => GridCounts::parse(g)?,
            (None, Some(c), _) => GridCounts::Each(c),
            (None, None, Some(k)) => GridCounts::All(k),
            (None, None, None) => GridCounts::All(DEFAULT_K),
        };

        let mut bounds = BTreeMap::new();
        for (k, v) in &file.grid.bounds {
            bounds.insert(k.clone(), parse_bound(v)?);
        }
        for b in &args.bounds {
            let (dim, range) = b
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected dim=lo:hi, got '{b}'")))?;
            bounds.insert(dim.trim().to_string(), parse_bound(range)?);
        }

        let target = if !args.target.is_empty() {
            args.target.clone()
        } else {
            file.target.constraints.unwrap_or_default()
        };

        let plan = match args.plan.as_deref().or(file.plan.plan.as_deref()) {
            Some(p) => Some(PlanChoice::parse(p)?),
            None => None,
        };

        let mut scheme = match args.scheme.as_deref().or(file.solver.scheme.as_deref()) {
            Some(s) => SchemeConfig::parse(s)?,
            None => SchemeConfig::default(),
        };
        if let Some(c) = args.cfl.or(file.solver.cfl) {
            scheme.cfl = c;
        }
        scheme.validate()?;

        let checkpoint_dt = match args.checkpoint_dt.or(file.solver.checkpoint_dt) {
            Some(c) if c == 0.0 => None,
            Some(c) => Some(c),
            None => defaults.checkpoint_dt,
        };

        Ok(RunConfig {
            model,
            params,
            grid,
            bounds,
            target,
            plan,
            horizon: args.horizon.or(file.solver.horizon).unwrap_or(defaults.horizon),
            scheme,
            checkpoint_dt,
            out: args.out.clone().or(file.run.out).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            threads: args.threads.or(file.run.threads),
            seed: args.seed.or(file.run.seed).unwrap_or(0),
            mem_cap_points: args.mem_cap_points.or(file.solver.mem_cap_points).unwrap_or(defaults.mem_cap_points),
        })
    }

    pub fn build_model(&self) -> Result<DynamicsModel, CliError> {
        Ok(builtin(&self.model, &self.params)?)
    }

    pub fn build_grid(&self, model: &DynamicsModel) -> Result<Grid, CliError> {
        let counts = self.grid.expand(model.n())?;
        let mut bounds = model.bounds().to_vec();
        for (label, &b) in &self.bounds {
            let d = model
                .state_index(label)
                .ok_or_else(|| CliError::Usage(format!("--bounds names unknown state '{label}'")))?;
            bounds[d] = b;
        }
        Ok(Grid::new(&bounds, &counts, model.periodic(), model.labels())?)
    }

    pub fn target_exprs(&self) -> Result<Vec<String>, CliError> {
        if !self.target.is_empty() {
            return Ok(self.target.clone());
        }
        builtin_target(&self.model)
            .map(|t| t.iter().map(|s| s.to_string()).collect())
            .ok_or_else(|| CliError::Usage(format!("model {} has no default target; pass --target", self.model)))
    }

    pub fn build_target(&self, model: &DynamicsModel) -> Result<TargetSpec, CliError> {
        let t = TargetSpec::parse(&self.target_exprs()?)?;
        t.check_labels(model.labels())?;
        Ok(t)
    }

    /// The configured plan, or the model's built-in plan.
    pub fn plan_choice(&self) -> Option<PlanChoice> {
        self.plan
            .clone()
            .or_else(|| builtin_plan(&self.model).map(|p| PlanChoice::Explicit(p.to_string())))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { horizon: self.horizon, checkpoint_dt: self.checkpoint_dt, mem_cap_points: self.mem_cap_points }
    }

    pub fn params_map(&self) -> BTreeMap<String, f64> {
        self.params.iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
