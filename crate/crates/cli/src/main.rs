use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sparse_dynfilt::experiment::{
    convergence_profile, run_sweep, run_trials, steady_state, verify_theorem, ExperimentSpec,
};
use sparse_dynfilt::metrics::{summarize, TrialResult, DEFAULT_BINS};
use sparse_dynfilt::theory::SmallInstanceConfig;

#[derive(Parser)]
#[command(name = "dynfilt", version, about = "Sparse dynamic filtering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run independent trials and write per-frame rMSE.
    Trial(RunArgs),
    /// Run trials at every value of the configured sweep.
    Sweep(RunArgs),
    /// Record per-frame EM iteration counts.
    Convergence(RunArgs),
    /// Check the BPDN-DF error bound on small instances.
    VerifyTheorem(TheoremArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named parameter set: fig3a, fig3b-sweep or fig3c-sweep.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Frames per trial.
    #[arg(long)]
    frames: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct TheoremArgs {
    /// Instance JSON file; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed of the first instance.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of instances, with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_spec(args: &RunArgs, default_preset: &str) -> Result<ExperimentSpec> {
    let mut spec = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentSpec::from_json(&text)?
        }
        (None, Some(name)) => ExperimentSpec::preset(name)?,
        (None, None) => ExperimentSpec::preset(default_preset)?,
    };
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.num_trials = trials;
    }
    if let Some(frames) = args.frames {
        spec.scenario.num_frames = frames;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
struct FrameRow<'a> {
    trial: usize,
    frame: usize,
    algorithm: &'a str,
    rmse: f64,
    em_iters: usize,
}

fn write_frames(dir: &Path, name: &str, trials: &[Vec<TrialResult>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for (t, results) in trials.iter().enumerate() {
        for r in results {
            for (frame, (&rmse, &em_iters)) in r.per_frame_rmse.iter().zip(&r.em_iterations).enumerate() {
                w.serialize(FrameRow {
                    trial: t,
                    frame,
                    algorithm: &r.algorithm_id,
                    rmse,
                    em_iters,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(path)
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_trial(args: &RunArgs) -> Result<()> {
    let spec = load_spec(args, "fig3a")?;
    prepare(&args.out)?;
    let trials = run_trials(&spec, args.workers)?;
    let flat: Vec<TrialResult> = trials.iter().flatten().cloned().collect();
    let ss = steady_state(&trials, spec.burn_in)?;
    let summary = serde_json::json!({
        "spec": spec,
        "steady_state_mean": ss.mean,
        "steady_state_per_trial": ss.per_trial,
        "per_frame": summarize(&flat, DEFAULT_BINS)?,
    });
    let csv = write_frames(&args.out, "rmse.csv", &trials)?;
    let json = write_json(&args.out, "summary.json", &summary)?;
    for (alg, m) in &ss.mean {
        println!("{alg:>10}  steady-state rMSE {m:.6}");
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs) -> Result<()> {
    let spec = load_spec(args, "fig3b-sweep")?;
    if spec.sweep.is_none() {
        bail!("the experiment has no sweep; use a sweep preset or add a \"sweep\" entry");
    }
    prepare(&args.out)?;
    let summary = run_sweep(&spec, args.workers)?;
    let path = args.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["value", "algorithm", "steady_state_rmse"])?;
    for point in &summary.points {
        for (alg, m) in &point.steady_state.mean {
            w.write_record([point.value.to_string(), alg.clone(), m.to_string()])?;
            println!("{:>6}  {alg:>10}  {m:.6}", point.value);
        }
    }
    w.flush()?;
    let json = write_json(&args.out, "sweep.json", &summary)?;
    println!("wrote {} and {}", path.display(), json.display());
    Ok(())
}

fn cmd_convergence(args: &RunArgs) -> Result<()> {
    let spec = load_spec(args, "fig3a")?;
    prepare(&args.out)?;
    let trials = run_trials(&spec, args.workers)?;
    let profile = convergence_profile(&trials);
    let csv = write_frames(&args.out, "convergence.csv", &trials)?;
    let json = write_json(&args.out, "convergence.json", &profile)?;
    for (alg, m) in &profile.median {
        println!("{alg:>10}  median EM iterations {m}  mean {:.3}", profile.mean[alg]);
    }
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn cmd_verify(args: &TheoremArgs) -> Result<()> {
    let base: SmallInstanceConfig = match &args.config {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )?,
        None => SmallInstanceConfig::default(),
    };
    let first = args.seed.unwrap_or(base.seed);
    prepare(&args.out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers).build()?;
    let runs = pool.install(|| {
        use rayon::prelude::*;
        (0..args.trials as u64)
            .into_par_iter()
            .map(|i| {
                verify_theorem(&SmallInstanceConfig {
                    seed: first + i,
                    ..base.clone()
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    for run in &runs {
        let r = &run.report;
        let status = match r.bound_holds {
            Some(true) => "bound holds",
            Some(false) => "BOUND VIOLATED",
            None => "conditions unmet",
        };
        println!(
            "seed {:>4}  delta {:.3}  beta {:.3}  min margin {}  {status}",
            run.instance.seed,
            run.rip.delta_unit,
            r.constants.beta,
            r.min_margin.map_or("-".into(), |m| format!("{m:.4}")),
        );
    }
    let json = write_json(&args.out, "theorem.json", &runs)?;
    println!("wrote {}", json.display());
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Trial(a) => cmd_trial(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Convergence(a) => cmd_convergence(&a),
        Command::VerifyTheorem(a) => cmd_verify(&a),
    }
}
