//! Experiment plumbing: strict configuration parsing, the four standard
//! runs, parallel seed execution and deterministic metric files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::ScenarioConfig;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_curves, window_mean, CurvePoint, KPIRecord, Stat};
use crate::policy::save_checkpoint;
use crate::trainer::{train, Audit, RunConfig, TrainOutput};

/// Environment variable holding the worker-thread count for seed fan-out.
pub const WORKERS_ENV: &str = "SEACAP_WORKERS";
/// Default agent-step budget for one experiment.
pub const DEFAULT_BUDGET: u64 = 10_000_000;
/// Episodes averaged for final-iteration summaries.
pub const FINAL_WINDOW: usize = 50;
/// Binding cap as a fraction of the unconstrained run's emissions.
pub const BINDING_CAP_FRACTION: f64 = 0.85;

pub const CSV_HEADER: &str =
    "run,seed,episode,reward_mean,reward_base,emissions,fuel,gini,throughput,queue_hours,steps_over,episode_over,lambda";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::A, Preset::B, Preset::C, Preset::D];

    pub fn id(self) -> &'static str {
        match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::D => "D",
        }
    }

    pub fn parse(s: &str) -> Result<Preset> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}`, expected A, B, C or D"),
            )),
        }
    }

    /// Run configuration for this preset with default length and seeds.
    pub fn config(self) -> RunConfig {
        let base = RunConfig::default();
        match self {
            Preset::A => base,
            Preset::B => RunConfig {
                cap_enabled: true,
                ..base
            },
            Preset::C => RunConfig {
                fairness_enabled: true,
                storms_enabled: true,
                mask_fraction: 0.5,
                ..base
            },
            Preset::D => RunConfig {
                cap_enabled: true,
                fairness_enabled: true,
                storms_enabled: true,
                ..base
            },
        }
    }
}

/// The four standard runs: base, cap, fairness with storms and partial
/// observability, and everything with full observability.
pub fn predefined_runs() -> [(Preset, RunConfig); 4] {
    Preset::ALL.map(|p| (p, p.config()))
}

/// Copy of `run` whose cap is [`BINDING_CAP_FRACTION`] of a reference
/// emission level (normally the base run's final-window mean).
pub fn with_binding_cap(run: &RunConfig, reference_emissions: f64) -> Result<RunConfig> {
    if !(reference_emissions.is_finite() && reference_emissions > 0.0) {
        return Err(Error::Domain(format!(
            "reference emissions {reference_emissions} must be positive"
        )));
    }
    Ok(RunConfig {
        c_max: BINDING_CAP_FRACTION * reference_emissions,
        ..run.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Label written into every output row.
    pub run_id: String,
    /// Preset the `run` section is layered on.
    pub preset: Option<Preset>,
    /// Scenario file; the built-in desk-scale scenario when absent.
    pub scenario: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Upper bound on episodes x horizon x seeds x vessels.
    pub budget_agent_steps: u64,
    pub run: RunConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            run_id: "custom".into(),
            preset: None,
            scenario: None,
            output_dir: PathBuf::from("out"),
            budget_agent_steps: DEFAULT_BUDGET,
            run: RunConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_preset(preset: Preset) -> Self {
        ExperimentSpec {
            run_id: preset.id().into(),
            preset: Some(preset),
            run: preset.config(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate().map_err(|e| match e {
            Error::Config { key, message } => Error::config(format!("run.{key}"), message),
            other => other,
        })
    }

    pub fn load_scenario(&self) -> Result<ScenarioConfig> {
        match &self.scenario {
            Some(path) => ScenarioConfig::load(path),
            None => Ok(ScenarioConfig::desk_scale()),
        }
    }

    pub fn required_agent_steps(&self, n_vessels: usize) -> u64 {
        (self.run.episodes as u64)
            .saturating_mul(self.run.horizon as u64)
            .saturating_mul(self.run.seeds.len() as u64)
            .saturating_mul(n_vessels as u64)
    }

    pub fn check_budget(&self, n_vessels: usize) -> Result<()> {
        let required = self.required_agent_steps(n_vessels);
        if required > self.budget_agent_steps {
            return Err(Error::Budget {
                required,
                limit: self.budget_agent_steps,
            });
        }
        Ok(())
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Tagged variants are replaced whole so stale fields of
                    // the previous variant do not linger.
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses an experiment document. The `run` section is layered over the
/// named preset (or the defaults); unknown keys anywhere are rejected with
/// their path.
pub fn parse_config_str(text: &str) -> Result<ExperimentSpec> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::config("$", e.to_string()))?;
    let Value::Object(mut top) = doc else {
        return Err(Error::config("$", "expected a JSON object"));
    };
    let preset = match top.get("preset") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(Preset::parse(s)?),
        Some(_) => return Err(Error::config("preset", "expected a string")),
    };
    if let Some(p) = preset {
        top.insert("preset".into(), Value::String(p.id().into()));
    }
    let mut run = serde_json::to_value(preset.map(Preset::config).unwrap_or_default())?;
    if let Some(overlay) = top.remove("run") {
        if !overlay.is_object() && !overlay.is_null() {
            return Err(Error::config("run", "expected an object"));
        }
        if overlay.is_object() {
            merge(&mut run, overlay);
        }
    }
    top.insert("run".into(), run);
    if let (Some(p), false) = (preset, top.contains_key("run_id")) {
        top.insert("run_id".into(), Value::String(p.id().into()));
    }
    let spec: ExperimentSpec = serde_path_to_error::deserialize(Value::Object(top))
        .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<(ExperimentSpec, ScenarioConfig)> {
    let path = path.as_ref();
    let mut spec = parse_config_str(&fs::read_to_string(path)?)?;
    if let (Some(rel), Some(dir)) = (spec.scenario.as_ref(), path.parent()) {
        if rel.is_relative() {
            spec.scenario = Some(dir.join(rel));
        }
    }
    let scenario = spec.load_scenario()?;
    Ok((spec, scenario))
}

/// Thread pool sized by [`WORKERS_ENV`], or rayon's default.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config(WORKERS_ENV, format!("`{v}` is not a worker count")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::config(WORKERS_ENV, e.to_string()))
}

/// Trains every `(run, seed)` job in parallel; results keep job order.
pub fn train_jobs(
    jobs: &[(RunConfig, u64)],
    scenario: &ScenarioConfig,
) -> Result<Vec<TrainOutput>> {
    let pool = worker_pool()?;
    pool.install(|| {
        jobs.par_iter()
            .map(|(run, seed)| train(run, scenario, *seed))
            .collect()
    })
}

/// Final-iteration summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run: String,
    pub seeds: usize,
    pub window: usize,
    pub reward: Stat,
    pub reward_base: Stat,
    pub emissions: Stat,
    pub gini: Stat,
    pub fuel_variance: Stat,
    pub throughput: Stat,
    pub violation_rate: Stat,
    pub lambda: Stat,
}

pub fn summarize(run: &str, by_seed: &[Vec<KPIRecord>], window: usize) -> Result<Summary> {
    let stat = |f: fn(&KPIRecord) -> f64| -> Result<Stat> {
        let v = by_seed
            .iter()
            .map(|r| window_mean(r, window, f))
            .collect::<Result<Vec<_>>>()?;
        Stat::of(&v)
    };
    let used = by_seed.first().map_or(0, |r| r.len().min(window));
    Ok(Summary {
        run: run.into(),
        seeds: by_seed.len(),
        window: used,
        reward: stat(|r| r.reward_mean)?,
        reward_base: stat(|r| r.reward_base)?,
        emissions: stat(|r| r.emissions)?,
        gini: stat(|r| r.gini)?,
        fuel_variance: stat(|r| r.fuel_variance)?,
        throughput: stat(|r| r.throughput as f64)?,
        violation_rate: stat(|r| if r.episode_over { 1.0 } else { 0.0 })?,
        lambda: stat(|r| r.lambda)?,
    })
}

/// Outputs of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub seeds: Vec<u64>,
    pub records: Vec<Vec<KPIRecord>>,
    pub audits: Vec<Audit>,
    pub lambda_min: f64,
    pub curves: Vec<CurvePoint>,
    pub summary: Summary,
}

#[derive(Serialize)]
struct JsonRow<'a> {
    run: &'a str,
    seed: u64,
    #[serde(flatten)]
    kpi: &'a KPIRecord,
}

pub fn metrics_csv(run: &str, seeds: &[u64], records: &[Vec<KPIRecord>]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (seed, recs) in seeds.iter().zip(records) {
        for r in recs {
            let _ = writeln!(
                out,
                "{run},{seed},{},{},{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.reward_mean,
                r.reward_base,
                r.emissions,
                r.fuel,
                r.gini,
                r.throughput,
                r.queue_hours,
                r.steps_over,
                r.episode_over as u8,
                r.lambda
            );
        }
    }
    out
}

pub fn metrics_jsonl(run: &str, seeds: &[u64], records: &[Vec<KPIRecord>]) -> Result<String> {
    let mut out = String::new();
    for (seed, recs) in seeds.iter().zip(records) {
        for kpi in recs {
            out.push_str(&serde_json::to_string(&JsonRow {
                run,
                seed: *seed,
                kpi,
            })?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn aggregate_csv(run: &str, curves: &[CurvePoint]) -> String {
    const FIELDS: [&str; 11] = [
        "reward_mean",
        "reward_base",
        "emissions",
        "fuel",
        "gini",
        "fuel_variance",
        "throughput",
        "queue_hours",
        "steps_over",
        "episode_over",
        "lambda",
    ];
    let mut out = String::from("run,episode,seeds");
    for f in FIELDS {
        let _ = write!(out, ",{f}_mean,{f}_std");
    }
    out.push('\n');
    for p in curves {
        let _ = write!(out, "{run},{},{}", p.episode, p.seeds);
        for s in [
            p.reward_mean,
            p.reward_base,
            p.emissions,
            p.fuel,
            p.gini,
            p.fuel_variance,
            p.throughput,
            p.queue_hours,
            p.steps_over,
            p.episode_over,
            p.lambda,
        ] {
            let _ = write!(out, ",{},{}", s.mean, s.std);
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[Summary]) -> String {
    let mut out = String::from(
        "run,seeds,window,reward,reward_std,emissions,emissions_std,gini,fuel_variance,throughput,violation_rate,lambda\n",
    );
    for s in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.run,
            s.seeds,
            s.window,
            s.reward.mean,
            s.reward.std,
            s.emissions.mean,
            s.emissions.std,
            s.gini.mean,
            s.fuel_variance.mean,
            s.throughput.mean,
            s.violation_rate.mean,
            s.lambda.mean
        );
    }
    out
}

/// Writes every output file for already-trained seeds.
pub fn write_outputs(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
    outputs: &[TrainOutput],
) -> Result<ExperimentResult> {
    let dir = &spec.output_dir;
    fs::create_dir_all(dir.join("checkpoints"))?;
    let seeds: Vec<u64> = outputs.iter().map(|o| o.seed).collect();
    let records: Vec<Vec<KPIRecord>> = outputs.iter().map(|o| o.records.clone()).collect();
    let curves = aggregate_curves(&records)?;
    let summary = summarize(&spec.run_id, &records, FINAL_WINDOW)?;
    let run = spec.run_id.as_str();
    fs::write(dir.join("metrics.csv"), metrics_csv(run, &seeds, &records))?;
    fs::write(
        dir.join("metrics.jsonl"),
        metrics_jsonl(run, &seeds, &records)?,
    )?;
    fs::write(dir.join("aggregate.csv"), aggregate_csv(run, &curves))?;
    fs::write(
        dir.join("summary.csv"),
        summary_csv(std::slice::from_ref(&summary)),
    )?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(spec)? + "\n",
    )?;
    fs::write(
        dir.join("scenario.json"),
        serde_json::to_string_pretty(scenario)? + "\n",
    )?;
    for o in outputs {
        let step = o.records.len() as u64;
        save_checkpoint(
            dir.join(format!("checkpoints/seed{}_low.ckpt", o.seed)),
            &o.agents.low,
            o.seed,
            step,
        )?;
        if let Some(high) = &o.agents.high {
            save_checkpoint(
                dir.join(format!("checkpoints/seed{}_high.ckpt", o.seed)),
                high,
                o.seed,
                step,
            )?;
        }
    }
    Ok(ExperimentResult {
        spec: spec.clone(),
        seeds,
        records,
        audits: outputs.iter().map(|o| o.audit).collect(),
        lambda_min: outputs
            .iter()
            .map(|o| o.lambda_min)
            .fold(f64::INFINITY, f64::min),
        curves,
        summary,
    })
}

/// Validates, checks the budget, trains every seed and writes the outputs.
pub fn run_experiment(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
) -> Result<ExperimentResult> {
    spec.validate()?;
    scenario.validate()?;
    spec.check_budget(scenario.vessels.len())?;
    let jobs: Vec<(RunConfig, u64)> = spec
        .run
        .seeds
        .iter()
        .map(|&s| (spec.run.clone(), s))
        .collect();
    let outputs = train_jobs(&jobs, scenario)?;
    write_outputs(spec, scenario, &outputs)
}
