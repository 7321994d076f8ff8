use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chainreach::depgraph::{predict_complexity, suggest_plans, DecompositionPlan};
use chainreach::grid::{read_value, write_csv, write_value};
use chainreach::synth::{check_safety, simulate, write_trajectories, Safety, SimConfig, Synthesizer, Trajectory};
use chainreach::SliceSpec;
use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{GridCounts, PlanChoice, RunConfig};
use crate::run::{load_run, resolve_plan, solve, values_on, write_run, Mode, Problem, Solved};
use crate::CliError;

pub fn graph(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let g = chainreach::depgraph::build_graph(&model);
    let labels = g.labels();
    println!("model {}: {} states, {} edges (a -> b: da/dt reads b)", cfg.model, g.n(), g.edges().len());
    for &(i, j) in g.edges() {
        println!("{} -> {}", labels[i], labels[j]);
    }
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("graph.json");
    let doc = json!({
        "model": cfg.model,
        "labels": labels,
        "edges": g.edges().iter().map(|&(i, j)| [&labels[i], &labels[j]]).collect::<Vec<_>>(),
    });
    fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn plan_row(rank: usize, plan: &DecompositionPlan, text: &str) {
    let (space, time) = predict_complexity(plan);
    println!("{rank:>4}  {:>10}  {:>5}  {:>4}  {text}", plan.len(), space, time);
}

pub fn plan(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.build_model()?;
    let g = chainreach::depgraph::build_graph(&model);
    let choice = cfg
        .plan_choice()
        .ok_or_else(|| CliError::Usage(format!("model {} has no default plan; pass --plan", cfg.model)))?;
    println!("rank  subsystems  space  time  plan (exponents of k)");
    match choice {
        PlanChoice::Auto(p) => {
            let s = suggest_plans(&g, p)?;
            for (r, plan) in s.plans.iter().enumerate() {
                plan_row(r + 1, plan, &plan.format(&g));
            }
            if let Some(note) = s.note {
                println!("note: {note}");
            }
            if s.plans.is_empty() {
                return Err(chainreach::Error::Plan(format!("no valid plan with at most {p} states per subsystem")).into());
            }
        }
        PlanChoice::Explicit(_) => {
            let plan = resolve_plan(&choice, &g)?;
            plan_row(1, &plan, &plan.format(&g));
            for (i, sub) in plan.subsystems().iter().enumerate() {
                let names: Vec<&str> = sub.iter().map(|&s| g.labels()[s].as_str()).collect();
                let missing: Vec<String> = plan
                    .missing(i)
                    .iter()
                    .map(|&j| {
                        let from: Vec<String> = plan.providers(i, j).iter().map(|k| format!("S{}", k + 1)).collect();
                        format!("{} from {}", g.labels()[j], from.join(","))
                    })
                    .collect();
                let missing = if missing.is_empty() { "none".to_string() } else { missing.join("; ") };
                println!("  S{} {{{}}} missing: {missing}", i + 1, names.join(","));
            }
        }
    }
    Ok(())
}

pub fn solve_cmd(cfg: &RunConfig, mode: Mode) -> Result<(), CliError> {
    let prob = Problem::from_config(cfg)?;
    let start = Instant::now();
    let solved = solve(cfg, &prob, mode)?;
    let elapsed = start.elapsed().as_secs_f64();
    let m = write_run(cfg, &prob, &solved, &cfg.out)?;
    println!(
        "{} {} on {}: {} steps to s = {}, {:.3} s",
        cfg.model,
        if mode == Mode::Full { "full" } else { "decomposed" },
        prob.grid.signature(),
        m.dt_history.len(),
        0.0 - cfg.horizon,
        elapsed
    );
    match &solved {
        Solved::Full(r) => println!("BRT points: {}", r.last().sublevel_count()),
        Solved::Decomposed(d) => {
            println!("plan: {}", m.plan.as_deref().unwrap_or(""));
            for (i, r) in d.results.iter().enumerate() {
                println!("  S{} BRT points: {} of {}", i + 1, r.last().sublevel_count(), r.last().grid().len());
            }
            println!("range fallbacks: {} (inside a tube: {})", d.fallbacks.total, d.fallbacks.in_tube);
            if !d.degenerate.is_empty() {
                let idx: Vec<String> = d.degenerate.iter().map(|i| format!("S{}", i + 1)).collect();
                println!("subsystems with no target constraint: {}", idx.join(","));
            }
        }
    }
    println!("wrote {} files and manifest to {}", m.files().len(), cfg.out.display());
    Ok(())
}

pub fn compare(full: &Path, approx: &Path, time: Option<f64>, eps: f64) -> Result<(), CliError> {
    let a = load_run(full)?;
    let b = load_run(approx)?;
    let s = time.unwrap_or(-a.manifest.horizon);
    let cap = a.manifest.mem_cap_points.max(b.manifest.mem_cap_points);
    let (v, tv) = values_on(&a.solved, &a.grid, s, cap)?;
    let (w, tw) = values_on(&b.solved, &a.grid, s, cap)?;
    let mut max_diff = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let mut set_violations = 0usize;
    let (mut vol_v, mut vol_w) = (0usize, 0usize);
    for (x, y) in v.iter().zip(&w) {
        max_diff = max_diff.max(y - x);
        if *y > x + eps {
            violations += 1;
        }
        if *x <= 0.0 && *y > 0.0 {
            set_violations += 1;
        }
        vol_v += usize::from(*x <= 0.0);
        vol_w += usize::from(*y <= 0.0);
    }
    println!("grid {} ({} points), reference s = {tv}, compared s = {tw}", a.grid.signature(), a.grid.len());
    println!("max(V_approx - V_ref) = {max_diff:.6e}");
    println!("violations (V_approx > V_ref + {eps:e}): {violations}");
    println!("set violations (in reference BRT, outside approximation): {set_violations}");
    println!("BRT points: reference {vol_v}, approximation {vol_w}");
    if vol_v > 0 {
        println!("volume ratio: {:.4}", vol_w as f64 / vol_v as f64);
    } else {
        println!("volume ratio: undefined (empty reference BRT)");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DisturbanceChoice {
    /// Minimizes the value's rate of change: the strongest adversary.
    Worst,
    /// Midpoint of each disturbance interval.
    Mid,
}

pub struct SimulateArgs {
    pub from: Option<PathBuf>,
    pub mode: Mode,
    pub z0: Vec<String>,
    pub samples: Option<usize>,
    pub sim_dt: f64,
    pub disturbance: DisturbanceChoice,
}

fn parse_point(text: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let z: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad coordinate '{t}'"))))
        .collect::<Result<_, _>>()?;
    if z.len() != n {
        return Err(CliError::Usage(format!("start '{text}' has {} coordinates, model has {n}", z.len())));
    }
    Ok(z)
}

const MAX_SAMPLE_TRIES: usize = 100_000;

pub fn simulate_cmd(cfg: &RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    let (model, target, grid, solved, horizon) = match &args.from {
        Some(dir) => {
            let l = load_run(dir)?;
            let h = l.manifest.horizon;
            (l.model, l.target, l.grid, l.solved, h)
        }
        None => {
            let prob = Problem::from_config(cfg)?;
            let solved = solve(cfg, &prob, args.mode)?;
            (prob.model, prob.target, prob.grid, solved, cfg.horizon)
        }
    };
    let field = solved.field();
    let synth = Synthesizer::new(&model, field)?;
    let n = model.n();

    let mut starts: Vec<Vec<f64>> = args.z0.iter().map(|t| parse_point(t, n)).collect::<Result<_, _>>()?;
    let samples = args.samples.unwrap_or(if starts.is_empty() { 10 } else { 0 });
    if samples > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bounds = grid.bounds();
        let mut tries = 0;
        let mut found = 0;
        while found < samples {
            tries += 1;
            if tries > MAX_SAMPLE_TRIES {
                return Err(CliError::Usage(format!("found only {found} of {samples} starts outside the tube")));
            }
            let z: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect();
            if field.value(&z, -horizon)? > 0.0 {
                starts.push(z);
                found += 1;
            }
        }
    }

    let sim = SimConfig::on_grid(&grid, horizon, args.sim_dt);
    let mut trajs: Vec<Trajectory> = Vec::with_capacity(starts.len());
    for z0 in &starts {
        let dist = |z: &[f64], t: f64| match args.disturbance {
            DisturbanceChoice::Worst => synth.worst_disturbance(z, t),
            DisturbanceChoice::Mid => Ok(model.disturbance_mid()),
        };
        trajs.push(simulate(&model, &target, z0, &sim, |z, t| synth.optimal_control(z, t), dist)?);
    }

    fs::create_dir_all(&cfg.out)?;
    let files = write_trajectories(&trajs, &cfg.out, "traj")?;
    let mut rows = Vec::with_capacity(trajs.len());
    let (mut safe, mut truncated) = (0, 0);
    println!("start  V(z0)        min l        truncated  outcome");
    for (k, (tr, z0)) in trajs.iter().zip(&starts).enumerate() {
        let v0 = field.value(z0, -horizon)?;
        let outcome = check_safety(tr, &target)?;
        let text = match outcome {
            Safety::Safe => {
                safe += 1;
                "safe".to_string()
            }
            Safety::Violation { time, .. } => format!("entered target at s = {time:.4}"),
        };
        truncated += usize::from(tr.truncated);
        println!("{k:>5}  {v0:>11.4e}  {:>11.4e}  {:>9}  {text}", tr.min_l, tr.truncated);
        rows.push(json!({
            "start": z0,
            "value": v0,
            "min_l": tr.min_l,
            "truncated": tr.truncated,
            "safe": outcome == Safety::Safe,
            "file": files[k].file_name().map(|f| f.to_string_lossy().into_owned()),
        }));
    }
    println!("{safe} of {} safe, {truncated} left the computation box early", trajs.len());
    let summary = json!({ "horizon": horizon, "sim_dt": args.sim_dt, "trajectories": rows });
    fs::write(cfg.out.join("simulate.json"), format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    Ok(())
}

pub fn slice_cmd(file: &Path, fix: &[String], csv: Option<&Path>, rdv: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let v = read_value(file)?;
    let mut spec = SliceSpec::new();
    for f in fix {
        let (label, x) = f
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected label=value, got '{f}'")))?;
        let x: f64 = x.trim().parse().map_err(|_| CliError::Usage(format!("bad value in '{f}'")))?;
        spec = spec.fix(label.trim(), x);
    }
    let s = v.extract_slice(&spec)?;
    for snap in &s.snaps {
        println!("{} = {} snapped to {} (moved {:.3e})", snap.label, snap.requested, snap.snapped, snap.distance);
    }
    let g = s.value.grid();
    println!(
        "slice over {} on {}: min {:.4e}, max {:.4e}, {} points <= 0",
        g.labels().join(","),
        g.signature(),
        s.value.min_value(),
        s.value.max_value(),
        s.value.sublevel_count()
    );
    let csv = match (csv, rdv) {
        (None, None) => {
            fs::create_dir_all(out)?;
            Some(out.join("slice.csv"))
        }
        (c, _) => c.map(Path::to_path_buf),
    };
    if let Some(p) = csv {
        write_csv(&s.value, &p)?;
        println!("wrote {}", p.display());
    }
    if let Some(p) = rdv {
        write_value(&s.value, p)?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

pub fn bench(cfg: &RunConfig, ks: &str, mode: Mode) -> Result<(), CliError> {
    let ks: Vec<usize> = ks
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("bad k '{t}'"))))
        .collect::<Result<_, _>>()?;
    if ks.is_empty() {
        return Err(CliError::Usage("no grid sizes given".into()));
    }
    println!("{:>5}  {:>12}  {:>6}  {:>10}", "k", "full points", "steps", "seconds");
    let mut times = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut c = cfg.clone();
        c.grid = GridCounts::All(k);
        c.checkpoint_dt = None;
        let prob = Problem::from_config(&c)?;
        let start = Instant::now();
        let solved = solve(&c, &prob, mode)?;
        let secs = start.elapsed().as_secs_f64();
        println!("{k:>5}  {:>12}  {:>6}  {secs:>10.4}", prob.grid.len(), solved.dt_history().len());
        times.push(secs);
    }
    let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    match loglog_slope(&xs, &times) {
        Some(m) => println!("log-log slope: {m:.3}"),
        None => println!("log-log slope: n/a (need two distinct k)"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [10.0, 20.0, 40.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(3)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&[5.0], &[1.0]), None);
        assert_eq!(loglog_slope(&[5.0, 5.0], &[1.0, 2.0]), None);
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("1, -2.5", 2).unwrap(), vec![1.0, -2.5]);
        assert!(parse_point("1,2,3", 2).is_err());
        assert!(parse_point("1,x", 2).is_err());
    }
}
