//! Run configuration, scenario scheduling, transcript persistence,
//! resumability, and reporting.
//!
//! A run is a set of work units (one per scenario, or one per scenario and
//! option order for the choose-to-reflect-or-debate strategy). Units execute
//! on a bounded worker pool; completed traces are appended to the transcript
//! in canonical unit order. Re-invoking with the same output directory
//! executes only units not yet present in the transcript.

pub mod config;
pub mod report;
pub mod transcript;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;

use crate::client::{ClientError, ModelClient, ModelEndpoint};
use crate::dataset::{self, DatasetError, ScenarioRecord};
use crate::metrics::MetricsError;
use crate::prompts::{self, OptionOrder};
use crate::seeded::derive_rng;
use crate::strategies::{
    run_debate, run_label_only, run_self_reflection, run_selfreflect_debate, run_single,
    AdjudicationPolicy, StrategyError,
};

use config::{ConfigError, PolicyName, RunConfig, StrategyName};
use transcript::{
    read_transcript_for_resume, FailureNote, OrderedTranscriptWriter, TranscriptError,
    TranscriptLine,
};

pub const MANIFEST_SCHEMA: &str = "manifest.v1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory holds a different run: {what}")]
    ConfigMismatch { what: String },
    #[error("transcript contains scenario '{scenario_id}' not in this run's selection")]
    StaleTranscript { scenario_id: String },
    #[error("scenario filter selected nothing")]
    NoScenarios,
    #[error("worker task panicked: {0}")]
    WorkerPanic(String),
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioStatus {
    Pending,
    Done,
    Failed,
}

/// Snapshot tying a run's outputs to its exact inputs: config, dataset, and
/// prompt-template checksums, plus per-scenario completion status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub seed: u64,
    pub strategy: String,
    pub canonical_order: OptionOrder,
    pub config_checksum: String,
    pub dataset_checksum: String,
    pub group_map_checksum: String,
    pub template_checksums: BTreeMap<String, String>,
    pub started_at_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_unix: Option<u64>,
    pub selected: Vec<String>,
    pub status: BTreeMap<String, ScenarioStatus>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| RunError::ConfigMismatch {
            what: format!("manifest {} unreadable: {e}", path.display()),
        })
    }

    fn store(&self, path: &Path) -> Result<(), RunError> {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Paths inside a run's output directory.
pub struct RunPaths {
    pub out_dir: PathBuf,
    pub transcript: PathBuf,
    pub manifest: PathBuf,
    pub report_dir: PathBuf,
}

impl RunPaths {
    pub fn new(out_dir: &Path) -> Self {
        RunPaths {
            out_dir: out_dir.to_path_buf(),
            transcript: out_dir.join("transcript.jsonl"),
            manifest: out_dir.join("manifest.json"),
            report_dir: out_dir.join("report"),
        }
    }
}

/// One schedulable piece of work.
#[derive(Debug, Clone)]
struct Unit {
    seq: u64,
    scenario: ScenarioRecord,
    order: Option<OptionOrder>,
}

/// Deterministic scenario selection: country/id filters, then an optional
/// seeded sample, returned in dataset order.
pub fn select_scenarios(
    records: Vec<ScenarioRecord>,
    filter: &config::FilterConfig,
    seed: u64,
) -> Vec<ScenarioRecord> {
    let countries: BTreeSet<&str> = filter.countries.iter().map(String::as_str).collect();
    let ids: BTreeSet<&str> = filter.ids.iter().map(String::as_str).collect();
    let mut kept: Vec<ScenarioRecord> = records
        .into_iter()
        .filter(|r| countries.is_empty() || countries.contains(r.country.as_str()))
        .filter(|r| ids.is_empty() || ids.contains(r.id.as_str()))
        .collect();
    if filter.sample > 0 && filter.sample < kept.len() {
        let mut indices: Vec<usize> = (0..kept.len()).collect();
        indices.shuffle(&mut derive_rng(seed, &["scenario-sample"]));
        let mut chosen: BTreeSet<usize> = indices.into_iter().take(filter.sample).collect();
        let mut i = 0usize;
        kept.retain(|_| {
            let keep = chosen.remove(&i);
            i += 1;
            keep
        });
    }
    kept
}

fn units_for(strategy: StrategyName, selected: &[ScenarioRecord]) -> Vec<Unit> {
    let mut units = Vec::new();
    if strategy == StrategyName::SelfreflectDebate {
        for (i, s) in selected.iter().enumerate() {
            units.push(Unit {
                seq: (2 * i) as u64,
                scenario: s.clone(),
                order: Some(OptionOrder::ReflectFirst),
            });
            units.push(Unit {
                seq: (2 * i + 1) as u64,
                scenario: s.clone(),
                order: Some(OptionOrder::DebateFirst),
            });
        }
    } else {
        for (i, s) in selected.iter().enumerate() {
            units.push(Unit {
                seq: i as u64,
                scenario: s.clone(),
                order: None,
            });
        }
    }
    units
}

struct ResolvedRun {
    client: Arc<ModelClient>,
    agents: Vec<Arc<ModelEndpoint>>,
    policy: Arc<AdjudicationPolicy>,
    strategy: StrategyName,
    rounds: u32,
    iterations: u32,
    fixed_label: Option<crate::dataset::TernaryLabel>,
}

async fn run_unit(run: Arc<ResolvedRun>, unit: Unit) -> TranscriptLine {
    let scenario = &unit.scenario;
    let result = match run.strategy {
        StrategyName::LabelOnly => Ok(run_label_only(
            scenario,
            run.fixed_label.expect("validated"),
        )),
        StrategyName::SingleNoRot => {
            run_single(&run.client, &run.agents[0], scenario, false).await
        }
        StrategyName::Single => run_single(&run.client, &run.agents[0], scenario, true).await,
        StrategyName::SelfReflection => {
            run_self_reflection(&run.client, &run.agents[0], scenario, run.iterations).await
        }
        StrategyName::DebateOnly => {
            run_debate(
                &run.client,
                &run.agents[0],
                &run.agents[1],
                scenario,
                run.rounds,
                &run.policy,
            )
            .await
        }
        StrategyName::SelfreflectDebate => {
            let order = unit.order.expect("sd units carry an order");
            run_selfreflect_debate(
                &run.client,
                &run.agents[0],
                &run.agents[1],
                scenario,
                &run.policy,
                (order, order),
            )
            .await
        }
    };
    match result {
        Ok(trace) => TranscriptLine::trace(trace),
        Err(err) => {
            let stage = match &err {
                StrategyError::Client { source, .. } => client_error_stage(source),
                _ => None,
            };
            log::warn!("scenario {} failed: {err}", scenario.id);
            TranscriptLine::failure(
                &scenario.id,
                FailureNote {
                    stage,
                    error: err.to_string(),
                    option_order: unit.order,
                },
            )
        }
    }
}

fn client_error_stage(err: &ClientError) -> Option<String> {
    match err {
        ClientError::Timeout { stage, .. }
        | ClientError::Endpoint { stage, .. }
        | ClientError::RetriesExhausted { stage, .. }
        | ClientError::MalformedResponse { stage, .. } => Some(stage.clone()),
        _ => None,
    }
}

/// Outcome summary of an [`execute_run`] invocation.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub total_units: usize,
    pub resumed_units: usize,
    pub new_traces: usize,
    pub new_failures: usize,
    pub manifest: RunManifest,
}

/// Execute (or resume) a run: every selected scenario yields exactly one
/// trace (or recorded failure) per work unit, appended to the transcript;
/// metric reports are then computed from the persisted transcript alone.
pub async fn execute_run(config: &RunConfig) -> Result<RunSummary, RunError> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    std::fs::create_dir_all(&paths.out_dir).map_err(|e| io_err(&paths.out_dir, e))?;

    let dataset_bytes =
        std::fs::read(&config.dataset.path).map_err(|e| io_err(&config.dataset.path, e))?;
    let map_bytes =
        std::fs::read(&config.dataset.group_map).map_err(|e| io_err(&config.dataset.group_map, e))?;
    let records = dataset::load_dataset(&config.dataset.path, &config.dataset.group_map)?;
    let selected = select_scenarios(records, &config.filter, config.seed);
    if selected.is_empty() {
        return Err(RunError::NoScenarios);
    }
    let units = units_for(config.strategy.kind, &selected);

    let config_checksum = sha256_hex(config.canonical_toml().as_bytes());
    let dataset_checksum = sha256_hex(&dataset_bytes);
    let group_map_checksum = sha256_hex(&map_bytes);

    // resume bookkeeping: the transcript is the source of truth for what ran
    let mut done_keys: BTreeSet<(String, Option<OptionOrder>)> = BTreeSet::new();
    let mut prior_lines: Vec<TranscriptLine> = Vec::new();
    let mut started_at = now_unix();
    if paths.manifest.exists() {
        let prev = RunManifest::load(&paths.manifest)?;
        for (label, ours, theirs) in [
            ("config", &config_checksum, &prev.config_checksum),
            ("dataset", &dataset_checksum, &prev.dataset_checksum),
            ("group map", &group_map_checksum, &prev.group_map_checksum),
        ] {
            if ours != theirs {
                return Err(RunError::ConfigMismatch {
                    what: format!("{label} checksum changed since the run started"),
                });
            }
        }
        started_at = prev.started_at_unix;
        if paths.transcript.exists() {
            prior_lines = read_transcript_for_resume(&paths.transcript)?;
            let selected_ids: BTreeSet<&str> = selected.iter().map(|s| s.id.as_str()).collect();
            for line in &prior_lines {
                if !selected_ids.contains(line.scenario_id.as_str()) {
                    return Err(RunError::StaleTranscript {
                        scenario_id: line.scenario_id.clone(),
                    });
                }
                done_keys.insert(line.unit_key());
            }
        }
    } else if paths.transcript.exists() {
        return Err(RunError::ConfigMismatch {
            what: "transcript exists without a manifest".to_string(),
        });
    }

    let todo: Vec<Unit> = units
        .iter()
        .filter(|u| !done_keys.contains(&(u.scenario.id.clone(), u.order)))
        .cloned()
        .collect();
    let resumed_units = units.len() - todo.len();

    let mut manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        seed: config.seed,
        strategy: config.strategy.kind.id().to_string(),
        canonical_order: config.strategy.canonical_order,
        config_checksum,
        dataset_checksum,
        group_map_checksum,
        template_checksums: prompts::template_checksums(),
        started_at_unix: started_at,
        finished_at_unix: None,
        selected: selected.iter().map(|s| s.id.clone()).collect(),
        status: selected
            .iter()
            .map(|s| (s.id.clone(), ScenarioStatus::Pending))
            .collect(),
    };
    manifest.store(&paths.manifest)?;

    // resolve endpoints once; tasks share them
    let agents: Vec<Arc<ModelEndpoint>> = config
        .agents
        .iter()
        .map(|name| {
            let e = config
                .endpoints
                .iter()
                .find(|e| &e.name == name)
                .expect("validated");
            e.to_endpoint(config.strategy.kind).map(Arc::new)
        })
        .collect::<Result<_, _>>()?;
    let policy = match config.policy.kind {
        PolicyName::Oracle => AdjudicationPolicy::Oracle,
        PolicyName::Random => AdjudicationPolicy::Random(config.seed),
        PolicyName::Judge => {
            if let Some(name) = &config.judge {
                let e = config
                    .endpoints
                    .iter()
                    .find(|e| &e.name == name)
                    .expect("validated");
                AdjudicationPolicy::JudgeModel(e.to_endpoint(config.strategy.kind)?)
            } else {
                // single-agent strategies never adjudicate
                AdjudicationPolicy::Oracle
            }
        }
    };
    let run = Arc::new(ResolvedRun {
        client: Arc::new(ModelClient::new()),
        agents,
        policy: Arc::new(policy),
        strategy: config.strategy.kind,
        rounds: config.strategy.rounds,
        iterations: config.strategy.iterations,
        fixed_label: config.strategy.fixed_label,
    });

    let mut writer = OrderedTranscriptWriter::open(
        &paths.transcript,
        todo.iter().map(|u| u.seq).collect(),
    )?;
    let semaphore = Arc::new(Semaphore::new(config.concurrency));
    let mut tasks: JoinSet<(u64, TranscriptLine)> = JoinSet::new();
    for unit in todo.iter().cloned() {
        let run = Arc::clone(&run);
        let semaphore = Arc::clone(&semaphore);
        tasks.spawn(async move {
            let _permit = semaphore.acquire_owned().await.expect("semaphore open");
            let line = run_unit(run, unit.clone()).await;
            (unit.seq, line)
        });
    }

    let mut new_lines: Vec<TranscriptLine> = Vec::with_capacity(todo.len());
    while let Some(joined) = tasks.join_next().await {
        let (seq, line) = joined.map_err(|e| RunError::WorkerPanic(e.to_string()))?;
        new_lines.push(line.clone());
        writer.push(seq, line)?;
    }
    writer.finish()?;

    let new_traces = new_lines.iter().filter(|l| l.trace.is_some()).count();
    let new_failures = new_lines.len() - new_traces;

    // final per-scenario status from everything persisted
    let mut failed_ids: BTreeSet<String> = BTreeSet::new();
    let mut trace_counts: BTreeMap<String, usize> = BTreeMap::new();
    for line in prior_lines.iter().chain(new_lines.iter()) {
        if line.trace.is_some() {
            *trace_counts.entry(line.scenario_id.clone()).or_insert(0) += 1;
        } else {
            failed_ids.insert(line.scenario_id.clone());
        }
    }
    let runs_per_scenario = if config.strategy.kind == StrategyName::SelfreflectDebate {
        2
    } else {
        1
    };
    for scenario in &selected {
        let status = if failed_ids.contains(&scenario.id) {
            ScenarioStatus::Failed
        } else if trace_counts.get(&scenario.id).copied().unwrap_or(0) == runs_per_scenario {
            ScenarioStatus::Done
        } else {
            ScenarioStatus::Pending
        };
        manifest.status.insert(scenario.id.clone(), status);
    }
    manifest.finished_at_unix = Some(now_unix());
    manifest.store(&paths.manifest)?;

    // reports come from the persisted transcript, never from memory; a run
    // whose every scenario failed has no log to report on, which is not an
    // execution error
    match report::report_from_dir(&paths.out_dir) {
        Ok(bundle) => bundle.write_files(&paths.report_dir)?,
        Err(RunError::Metrics(MetricsError::EmptyLog)) => {
            log::warn!("no completed traces; skipping report generation");
        }
        Err(e) => return Err(e),
    }

    Ok(RunSummary {
        out_dir: paths.out_dir,
        total_units: units.len(),
        resumed_units,
        new_traces,
        new_failures,
        manifest,
    })
}
