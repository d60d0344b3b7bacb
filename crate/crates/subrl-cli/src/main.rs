//! Command-line front end: train policies, evaluate checkpoints, and run
//! exact-oracle checks, all driven by a single JSON experiment config.
//!
//! Exit codes: 0 on success (and passing checks), 1 on errors and failing
//! checks, 2 when an exact oracle refuses an instance as too large.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use subrl::config::{load_config, parse_estimator_flag, Experiment, LoadedConfig};
use subrl::error::{Error, Result};
use subrl::oracle::{
    brute_force_opt, check_monotone, check_submodular, curvature, dr_check,
    markovian_optimality_check, BanditPoint, Verdict,
};
use subrl::policy::Policy;
use subrl::rng::{stream, StreamTag};
use subrl::trainer::{evaluate_policy, train};

#[derive(Parser)]
#[command(
    name = "subrl",
    about = "Train and verify policies that maximize submodular trajectory rewards."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per seed and write curves, checkpoints, and a summary.
    Train(TrainArgs),
    /// Run an exact or randomized verification check and print its verdict.
    Oracle(OracleArgs),
    /// Evaluate a checkpoint with fresh rollouts and print a summary.
    Eval(EvalArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Run exactly this seed (overrides the config's seed list).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Run seeds 0..N (overrides the config's seed list).
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gradient estimator: `subpo` or `modpo`.
    #[arg(long)]
    estimator: Option<String>,
    /// Policy family: `tabular`, `mlp`, or `history:k`.
    #[arg(long)]
    policy: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    /// Which check to run: submodularity, monotonicity, brute-force,
    /// dr-check, curvature, or markovian.
    check: String,
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Seed for randomized checks (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the verdict JSON into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Policy checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Experiment config file (environment and reward must match training).
    #[arg(long)]
    config: PathBuf,
    /// Number of fresh rollouts (default: the config's `eval.episodes`).
    #[arg(long)]
    episodes: Option<usize>,
    /// Evaluation seed (default: the config's first seed).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() {
    // Clap reserves exit code 2 for usage errors, but this tool pins 2 to
    // "instance too large", so usage errors are remapped onto 1.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let LoadedConfig { mut config, hash, base_dir } = load_config(&args.config)?;
    if let Some(flag) = &args.estimator {
        config.train.estimator = Some(parse_estimator_flag(flag)?);
    }
    if let Some(flag) = &args.policy {
        config.policy = config.policy.with_flag(flag)?;
    }
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(n) = args.seeds {
        if n == 0 {
            return Err(Error::Input("--seeds must be at least 1".into()));
        }
        config.seeds = (0..n).collect();
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }

    let experiment = config.build(&base_dir)?;
    fs::create_dir_all(&config.output_dir)?;

    let episodes = config.eval.episodes;
    let results: Vec<(u64, f64, f64)> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<(u64, f64, f64)> {
            let mut policy = config.make_policy(&experiment.smdp, seed)?;
            let train_config = config.train_config(seed)?;
            let curve = train(&experiment.smdp, &experiment.reward, &mut policy, &train_config)?;

            let seed_dir = config.output_dir.join(format!("seed_{seed}"));
            fs::create_dir_all(&seed_dir)?;
            curve.write_csv(&seed_dir.join("curve.csv"))?;
            policy.save(&seed_dir.join("checkpoint.bin"))?;

            let (mean, std) =
                evaluate_policy(&experiment.smdp, &experiment.reward, &policy, episodes, seed)?;
            let eval = json!({
                "seed": seed,
                "mean_J": mean,
                "std_J": std,
                "episodes": episodes,
            });
            fs::write(seed_dir.join("eval.json"), pretty(&eval)?)?;
            eprintln!("seed {seed}: final eval J = {mean:.6}");
            Ok((seed, mean, std))
        })
        .collect::<Result<Vec<_>>>()?;

    let means: Vec<f64> = results.iter().map(|&(_, mean, _)| mean).collect();
    let n = means.len() as f64;
    let final_mean = means.iter().sum::<f64>() / n;
    let final_std =
        (means.iter().map(|m| (m - final_mean).powi(2)).sum::<f64>() / n).sqrt();

    let mut summary = json!({
        "config_hash": hash,
        "seeds": config.seeds,
        "final_mean_J": final_mean,
        "final_std_J": final_std,
    });
    attach_opt(&mut summary, &experiment, final_mean);
    let text = pretty(&summary)?;
    fs::write(config.output_dir.join("summary.json"), &text)?;
    println!("{text}");
    Ok(0)
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    let LoadedConfig { config, hash, base_dir } = load_config(&args.config)?;
    let experiment = config.build(&base_dir)?;

    let policy = Policy::load(&args.checkpoint)?;
    let spec = policy.spec();
    if spec.num_states != experiment.smdp.num_states()
        || spec.horizon != experiment.smdp.horizon()
        || policy.num_actions() != experiment.smdp.num_actions()
    {
        return Err(Error::Input(format!(
            "checkpoint shape ({} states, horizon {}, {} actions) does not match the \
             environment ({} states, horizon {}, {} actions)",
            spec.num_states,
            spec.horizon,
            policy.num_actions(),
            experiment.smdp.num_states(),
            experiment.smdp.horizon(),
            experiment.smdp.num_actions(),
        )));
    }

    let episodes = args.episodes.unwrap_or(config.eval.episodes);
    let seed = args.seed.unwrap_or(config.seeds[0]);
    let (mean, std) =
        evaluate_policy(&experiment.smdp, &experiment.reward, &policy, episodes, seed)?;

    let mut summary = json!({
        "config_hash": hash,
        "seeds": [seed],
        "final_mean_J": mean,
        "final_std_J": std,
    });
    attach_opt(&mut summary, &experiment, mean);
    println!("{}", pretty(&summary)?);
    Ok(0)
}

fn cmd_oracle(args: OracleArgs) -> Result<i32> {
    let LoadedConfig { config, hash: _, base_dir } = load_config(&args.config)?;
    let experiment = config.build(&base_dir)?;
    let seed = args.seed.unwrap_or(0);
    let ground = experiment.reward.ground_set(experiment.smdp.horizon());

    let (value, pass) = match args.check.as_str() {
        "submodularity" => {
            let verdict = check_submodular(
                &experiment.reward,
                &ground,
                10_000,
                1e-9,
                &mut stream(seed, StreamTag::Check, 0, 0),
            )?;
            let pass = verdict.pass;
            (serde_json::to_value(&verdict)?, pass)
        }
        "monotonicity" => {
            let verdict = check_monotone(
                &experiment.reward,
                &ground,
                10_000,
                1e-9,
                &mut stream(seed, StreamTag::Check, 0, 1),
            )?;
            let pass = verdict.pass;
            (serde_json::to_value(&verdict)?, pass)
        }
        "brute-force" => {
            let result = brute_force_opt(&experiment.smdp, &experiment.reward)?;
            let value = json!({
                "check": "brute_force",
                "value": result.value,
                "argmax": result.argmax,
                "enumeration_count": result.enumeration_count,
            });
            (value, true)
        }
        "dr-check" => {
            let verdict = run_dr_check(&experiment, seed)?;
            let pass = verdict.pass;
            (serde_json::to_value(&verdict)?, pass)
        }
        "curvature" => {
            let c = curvature(&experiment.reward, &ground)?;
            (json!({ "check": "curvature", "value": c }), true)
        }
        "markovian" => {
            let verdict = markovian_optimality_check(
                &experiment.smdp,
                &experiment.reward,
                100,
                &mut stream(seed, StreamTag::Check, 0, 3),
            )?;
            let pass = verdict.pass;
            (serde_json::to_value(&verdict)?, pass)
        }
        other => {
            return Err(Error::Input(format!(
                "unknown oracle check `{other}`; expected submodularity, monotonicity, \
                 brute-force, dr-check, curvature, or markovian"
            )))
        }
    };

    let text = pretty(&value)?;
    println!("{text}");
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        fs::write(out.join(format!("{}.json", args.check.replace('-', "_"))), text)?;
    }
    Ok(if pass { 0 } else { 1 })
}

/// Verifies first and cross-second partials of the exact objective at the
/// uniform interior point plus ten random interior points.
fn run_dr_check(experiment: &Experiment, seed: u64) -> Result<Verdict> {
    let smdp = &experiment.smdp;
    let n = smdp.num_states();
    let horizon = smdp.horizon();
    let mut rng = stream(seed, StreamTag::Check, 0, 2);

    let mut points = vec![BanditPoint::uniform(n, horizon, 1.0 / (n as f64 + 1.0))];
    for _ in 0..10 {
        points.push(BanditPoint::random_interior(n, horizon, 0.05, &mut rng));
    }

    let mut pass = true;
    let mut max_violation = f64::NEG_INFINITY;
    let mut witness = None;
    for point in &points {
        let verdict = dr_check(smdp, &experiment.reward, point, 1e-3, 1e-6)?;
        max_violation = max_violation.max(verdict.max_violation);
        if !verdict.pass && witness.is_none() {
            witness = verdict.witness;
        }
        pass &= verdict.pass;
    }
    Ok(Verdict { check: "dr_submodularity".into(), pass, witness, max_violation })
}

/// Tries the exact optimum and, when feasible, records `opt` and the
/// OPT-normalized ratio of `mean` on the summary.
fn attach_opt(summary: &mut serde_json::Value, experiment: &Experiment, mean: f64) {
    if let Ok(result) = brute_force_opt(&experiment.smdp, &experiment.reward) {
        summary["opt"] = json!(result.value);
        if result.value > 0.0 {
            summary["ratio"] = json!(mean / result.value);
        }
    }
}

fn pretty(value: &serde_json::Value) -> Result<String> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}
