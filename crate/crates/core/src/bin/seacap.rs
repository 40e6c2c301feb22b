use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use seacap::harness::{
    parse_config, run_experiment, summary_csv, with_binding_cap, ExperimentSpec, Preset,
    WORKERS_ENV,
};
use seacap::learner::{grad_check, random_batch, LossCoefs, PPOHyper};
use seacap::nn::Layout;
use seacap::oracle::{dynamics_cases, gini_cases, OracleCase};
use seacap::policy::{init_policy, HIDDEN, LOW_ACTIONS};
use seacap::trainer::{low_input_len, PolicyKind};
use seacap::{Error, Result};

#[derive(Parser)]
#[command(
    name = "seacap",
    version,
    about = "Emission-capped, fairness-aware maritime MARL"
)]
struct Cli {
    /// Worker threads for parallel seeds.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a preset or a configured experiment and write metric files.
    Run(RunArgs),
    /// Compare analytic and finite-difference policy gradients.
    Gradcheck(GradArgs),
    /// Check the enumerated dynamics and Gini cases.
    OracleCheck,
}

#[derive(Args)]
struct RunArgs {
    /// One of A, B, C, D.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Experiment JSON document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario JSON; the built-in desk-scale scenario when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Replace the cap with a fraction of a freshly trained base run's
    /// final emissions.
    #[arg(long)]
    binding_cap: bool,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 10)]
    batches: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    /// Parameters probed per batch.
    #[arg(long, default_value_t = 50)]
    params: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Multiplies the analytic gradient; use 2.0 to inject a fault.
    #[arg(long, default_value_t = 1.0)]
    fault_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(args: RunArgs) -> Result<()> {
    let (mut spec, scenario) = match (&args.config, &args.preset) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(p)) => {
            let spec = ExperimentSpec::from_preset(Preset::parse(p)?);
            let scenario = spec.load_scenario()?;
            (spec, scenario)
        }
        (None, None) => {
            return Err(Error::Contract(
                "either --preset or --config is required".into(),
            ))
        }
    };
    if let Some(path) = args.scenario {
        spec.scenario = Some(path);
    }
    let scenario = if spec.scenario.is_some() {
        spec.load_scenario()?
    } else {
        scenario
    };
    if let Some(seeds) = args.seeds {
        spec.run.seeds = seeds;
    }
    if let Some(n) = args.episodes {
        spec.run.episodes = n;
    }
    if let Some(t) = args.horizon {
        spec.run.horizon = t;
    }
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    if args.binding_cap {
        let reference = ExperimentSpec {
            run_id: "A".into(),
            preset: Some(Preset::A),
            output_dir: spec.output_dir.join("reference_A"),
            run: seacap::trainer::RunConfig {
                seeds: spec.run.seeds.clone(),
                episodes: spec.run.episodes,
                horizon: spec.run.horizon,
                ..Preset::A.config()
            },
            ..spec.clone()
        };
        let base = run_experiment(&reference, &scenario)?;
        spec.run = with_binding_cap(&spec.run, base.summary.emissions.mean)?;
        eprintln!("binding cap c_max = {}", spec.run.c_max);
    }
    let result = run_experiment(&spec, &scenario)?;
    print!("{}", summary_csv(std::slice::from_ref(&result.summary)));
    eprintln!("outputs written to {}", spec.output_dir.display());
    Ok(())
}

fn gradcheck(args: GradArgs) -> Result<bool> {
    let n_agents = 5;
    let layout = Layout::new(
        low_input_len(PolicyKind::Hierarchical, n_agents),
        HIDDEN,
        vec![LOW_ACTIONS],
    )?;
    let coefs = LossCoefs::from(&PPOHyper::default());
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst: f64 = 0.0;
    for b in 0..args.batches {
        let net = init_policy(layout.clone(), args.seed.wrapping_add(b as u64));
        let batch = random_batch(&net, args.batch_size, &mut rng)?;
        let r = grad_check(
            &net,
            &batch,
            &coefs,
            args.step,
            args.params,
            args.fault_scale,
            &mut rng,
        )?;
        println!(
            "batch {b}: max relative error {:.3e} over {} parameters",
            r.max_rel_error, r.checked
        );
        worst = worst.max(r.max_rel_error);
    }
    let ok = worst <= 1e-4;
    println!(
        "max relative error {worst:.3e}: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(ok)
}

fn report(cases: &[OracleCase]) -> bool {
    let mut all = true;
    for c in cases {
        let ok = c.passes();
        all &= ok;
        println!(
            "{} {:<45} max error {:.3e}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            c.max_abs_error()
        );
    }
    all
}

fn oracle_check() -> Result<bool> {
    let dynamics = report(&dynamics_cases()?);
    let gini = report(&gini_cases()?);
    Ok(dynamics && gini)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        std::env::set_var(WORKERS_ENV, n.to_string());
    }
    let outcome = match cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::Gradcheck(args) => gradcheck(args),
        Command::OracleCheck => oracle_check(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
