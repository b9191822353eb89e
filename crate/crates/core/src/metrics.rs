//! Accuracy, cultural-group parity, decision-dynamics flow classification,
//! and per-label/per-group/choice breakdowns over prediction logs.
//!
//! Everything here is a pure function of an immutable log; logs are built
//! from persisted traces, never from in-memory shortcuts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CulturalGroup, TernaryLabel};
use crate::prompts::{ChoiceKind, OptionOrder};
use crate::strategies::{StrategyKind, Trace};

/// One scored scenario: gold label, per-agent initial and final labels, and
/// the label the run is scored on (the agreed label when no judge ran).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub scenario_id: String,
    pub gold: TernaryLabel,
    pub country: Option<String>,
    pub group: Option<CulturalGroup>,
    pub strategy: String,
    pub initial: BTreeMap<String, TernaryLabel>,
    pub finals: BTreeMap<String, TernaryLabel>,
    pub adjudicated_final: TernaryLabel,
    pub judge_turn: bool,
}

impl From<&Trace> for LogEntry {
    fn from(trace: &Trace) -> Self {
        LogEntry {
            scenario_id: trace.scenario_id.clone(),
            gold: trace.gold,
            country: Some(trace.country.clone()),
            group: Some(trace.group),
            strategy: trace.strategy.id().to_string(),
            initial: trace
                .initial
                .iter()
                .map(|(k, d)| (k.clone(), d.label))
                .collect(),
            finals: trace
                .finals
                .iter()
                .map(|(k, d)| (k.clone(), d.label))
                .collect(),
            adjudicated_final: trace.final_label(),
            judge_turn: trace.judge_turns() > 0,
        }
    }
}

/// An immutable, scenario-unique collection of log entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLog {
    pub entries: Vec<LogEntry>,
}

impl PredictionLog {
    pub fn new(entries: Vec<LogEntry>) -> Result<Self, MetricsError> {
        let mut seen = BTreeMap::new();
        for e in &entries {
            if seen.insert(e.scenario_id.clone(), ()).is_some() {
                return Err(MetricsError::DuplicateScenario {
                    scenario_id: e.scenario_id.clone(),
                });
            }
        }
        Ok(PredictionLog { entries })
    }

    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Result<Self, MetricsError> {
        Self::new(traces.into_iter().map(LogEntry::from).collect())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction log is empty")]
    EmptyLog,
    #[error("no entry carries an agent named '{0}'")]
    UnknownAgent(String),
    #[error("duplicate scenario id '{scenario_id}' in log")]
    DuplicateScenario { scenario_id: String },
    #[error("scenario {scenario_id}: no cultural group attached")]
    MissingGroup { scenario_id: String },
    #[error("scenario {scenario_id}: no country attached")]
    MissingCountry { scenario_id: String },
    #[error("baseline group accuracy is zero; parity is undefined")]
    ZeroAccuracyBaseline,
    #[error("group {group} has zero accuracy; parity premiums would not be positive")]
    ZeroAccuracyGroup { group: String },
    #[error("scenario {scenario_id}: missing {phase} decisions for dynamics")]
    MissingPhase {
        scenario_id: String,
        phase: &'static str,
    },
    #[error("scenario {scenario_id}: expected one run per option order")]
    MissingCompanionRun { scenario_id: String },
}

/// Which label stream to score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    /// One agent's final decision.
    Agent(String),
    /// The aggregated decision (agreed label or adjudicated pick).
    Adjudicated,
}

/// Mean of `[selected label == gold]`. Unparseable never equals gold.
pub fn accuracy(log: &PredictionLog, selector: &Selector) -> Result<f64, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut hits = 0usize;
    for entry in &log.entries {
        let label = match selector {
            Selector::Adjudicated => entry.adjudicated_final,
            Selector::Agent(name) => *entry
                .finals
                .get(name)
                .ok_or_else(|| MetricsError::UnknownAgent(name.clone()))?,
        };
        if label == entry.gold {
            hits += 1;
        }
    }
    Ok(hits as f64 / log.len() as f64)
}

/// Baseline group choice for the parity report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Highest mean accuracy; ties break by group-name order and are recorded.
    AutoMax,
    Fixed(CulturalGroup),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParity {
    pub n: usize,
    pub accuracy: f64,
    pub parity: f64,
}

/// Per-group accuracies and parity premiums relative to the baseline group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub baseline: CulturalGroup,
    pub tie_broken: bool,
    pub per_group: BTreeMap<CulturalGroup, GroupParity>,
    pub average_parity: f64,
}

impl ParityReport {
    /// `group<TAB>n<TAB>accuracy<TAB>parity` rows plus an average row,
    /// parity printed to three decimals as in the tables this feeds.
    pub fn render_table(&self) -> String {
        let mut out = String::from("group\tn\taccuracy\tparity\n");
        for (group, row) in &self.per_group {
            out.push_str(&format!(
                "{group}\t{}\t{:.4}\t{:.3}\n",
                row.n, row.accuracy, row.parity
            ));
        }
        out.push_str(&format!(
            "average\t{}\t-\t{:.3}\n",
            self.per_group.values().map(|r| r.n).sum::<usize>(),
            self.average_parity
        ));
        out.push_str(&format!(
            "baseline\t{}{}\n",
            self.baseline,
            if self.tie_broken { "\t(tie broken by name order)" } else { "" }
        ));
        out
    }
}

/// Parity(g) = Acc_g / Acc_b over adjudicated decisions.
pub fn parity(log: &PredictionLog, baseline: Baseline) -> Result<ParityReport, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut per_group: BTreeMap<CulturalGroup, (usize, usize)> = BTreeMap::new();
    for entry in &log.entries {
        let group = entry.group.ok_or_else(|| MetricsError::MissingGroup {
            scenario_id: entry.scenario_id.clone(),
        })?;
        let slot = per_group.entry(group).or_insert((0, 0));
        slot.0 += 1;
        if entry.adjudicated_final == entry.gold {
            slot.1 += 1;
        }
    }
    let acc = |(n, hits): (usize, usize)| hits as f64 / n as f64;
    let (baseline_group, tie_broken) = match baseline {
        Baseline::Fixed(g) => {
            if !per_group.contains_key(&g) {
                return Err(MetricsError::MissingGroup {
                    scenario_id: format!("<fixed baseline {g}>"),
                });
            }
            (g, false)
        }
        Baseline::AutoMax => {
            // BTreeMap iterates in name order, so strict > keeps the first
            // (lexicographically smallest) of any tied maximum
            let mut best: Option<(CulturalGroup, f64)> = None;
            let mut tied = false;
            for (g, counts) in &per_group {
                let a = acc(*counts);
                match best {
                    None => best = Some((*g, a)),
                    Some((_, best_a)) if a > best_a => {
                        best = Some((*g, a));
                        tied = false;
                    }
                    Some((_, best_a)) if (a - best_a).abs() < f64::EPSILON => tied = true,
                    _ => {}
                }
            }
            let (g, _) = best.expect("nonempty log has at least one group");
            (g, tied)
        }
    };
    let base_acc = acc(per_group[&baseline_group]);
    if base_acc == 0.0 {
        return Err(MetricsError::ZeroAccuracyBaseline);
    }
    // every group accuracy must be positive so premiums stay positive
    for (group, counts) in &per_group {
        if counts.1 == 0 {
            return Err(MetricsError::ZeroAccuracyGroup {
                group: group.to_string(),
            });
        }
    }
    let rows: BTreeMap<CulturalGroup, GroupParity> = per_group
        .iter()
        .map(|(g, counts)| {
            let a = acc(*counts);
            (
                *g,
                GroupParity {
                    n: counts.0,
                    accuracy: a,
                    parity: a / base_acc,
                },
            )
        })
        .collect();
    let average_parity = rows.values().map(|r| r.parity).sum::<f64>() / rows.len() as f64;
    Ok(ParityReport {
        baseline: baseline_group,
        tie_broken,
        per_group: rows,
        average_parity,
    })
}

/// Collective state of the agents' decisions at one phase: both correct, both
/// on the same wrong label, or differing decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseState {
    Correct,
    Incorrect,
    Mixed,
}

impl PhaseState {
    pub fn id(self) -> &'static str {
        match self {
            PhaseState::Correct => "correct",
            PhaseState::Incorrect => "incorrect",
            PhaseState::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeState {
    Correct,
    Incorrect,
}

impl JudgeState {
    pub fn id(self) -> &'static str {
        match self {
            JudgeState::Correct => "correct",
            JudgeState::Incorrect => "incorrect",
        }
    }
}

/// Per-scenario three-phase classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub initial_state: PhaseState,
    pub final_state: PhaseState,
    /// Absent for single-agent strategies, which have no judge phase. For
    /// agreed finals it is the correctness of the agreed-upon answer.
    pub judge_state: Option<JudgeState>,
}

/// Marginal counts at each phase plus transition counts between them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlowMatrix {
    pub total: usize,
    pub initial: BTreeMap<PhaseState, usize>,
    pub final_: BTreeMap<PhaseState, usize>,
    pub judge: BTreeMap<JudgeState, usize>,
    pub initial_to_final: BTreeMap<(PhaseState, PhaseState), usize>,
    pub final_to_judge: BTreeMap<(PhaseState, JudgeState), usize>,
    /// True when any entry carried a judge phase.
    pub has_judge_phase: bool,
}

impl FlowMatrix {
    /// Marginals at every populated phase sum to the log size.
    pub fn conserves(&self) -> bool {
        let init: usize = self.initial.values().sum();
        let fin: usize = self.final_.values().sum();
        let judge: usize = self.judge.values().sum();
        init == self.total && fin == self.total && (!self.has_judge_phase || judge == self.total)
    }

    pub fn rate(&self, phase: &BTreeMap<PhaseState, usize>, state: PhaseState) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *phase.get(&state).unwrap_or(&0) as f64 / self.total as f64
    }

    /// `(phase, state, count)` triples for external flow plotting, phases in
    /// process order.
    pub fn sankey_rows(&self) -> Vec<(String, String, usize)> {
        let mut rows = Vec::new();
        for (state, n) in &self.initial {
            rows.push(("initial".to_string(), state.id().to_string(), *n));
        }
        for (state, n) in &self.final_ {
            rows.push(("final".to_string(), state.id().to_string(), *n));
        }
        for (state, n) in &self.judge {
            rows.push(("judge".to_string(), state.id().to_string(), *n));
        }
        rows
    }

    /// `from_phase:state -> to_phase:state` transition counts as rows.
    pub fn render_table(&self) -> String {
        let mut out = String::from("from_phase\tfrom_state\tto_phase\tto_state\tcount\n");
        for ((a, b), n) in &self.initial_to_final {
            out.push_str(&format!("initial\t{}\tfinal\t{}\t{}\n", a.id(), b.id(), n));
        }
        for ((a, b), n) in &self.final_to_judge {
            out.push_str(&format!("final\t{}\tjudge\t{}\t{}\n", a.id(), b.id(), n));
        }
        out
    }
}

fn phase_state(
    labels: &BTreeMap<String, TernaryLabel>,
    gold: TernaryLabel,
    scenario_id: &str,
    phase: &'static str,
) -> Result<PhaseState, MetricsError> {
    let values: Vec<TernaryLabel> = labels.values().copied().collect();
    match values.as_slice() {
        [] => Err(MetricsError::MissingPhase {
            scenario_id: scenario_id.to_string(),
            phase,
        }),
        [one] => Ok(if *one == gold {
            PhaseState::Correct
        } else {
            PhaseState::Incorrect
        }),
        [a, b] => Ok(if a != b {
            PhaseState::Mixed
        } else if *a == gold {
            PhaseState::Correct
        } else {
            PhaseState::Incorrect
        }),
        _ => Err(MetricsError::MissingPhase {
            scenario_id: scenario_id.to_string(),
            phase,
        }),
    }
}

/// Classify every entry's initial -> final (-> judge) transition and count
/// the flow. Two-agent entries get a judge phase; single-agent entries stop
/// at final correctness.
pub fn classify_dynamics(
    log: &PredictionLog,
) -> Result<(Vec<DynamicsRecord>, FlowMatrix), MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut records = Vec::with_capacity(log.len());
    let mut flow = FlowMatrix {
        total: log.len(),
        ..FlowMatrix::default()
    };
    for entry in &log.entries {
        let initial_state = phase_state(&entry.initial, entry.gold, &entry.scenario_id, "initial")?;
        let final_state = phase_state(&entry.finals, entry.gold, &entry.scenario_id, "final")?;
        let judge_state = if entry.finals.len() == 2 {
            Some(if entry.adjudicated_final == entry.gold {
                JudgeState::Correct
            } else {
                JudgeState::Incorrect
            })
        } else {
            None
        };
        *flow.initial.entry(initial_state).or_insert(0) += 1;
        *flow.final_.entry(final_state).or_insert(0) += 1;
        *flow
            .initial_to_final
            .entry((initial_state, final_state))
            .or_insert(0) += 1;
        if let Some(j) = judge_state {
            flow.has_judge_phase = true;
            *flow.judge.entry(j).or_insert(0) += 1;
            *flow.final_to_judge.entry((final_state, j)).or_insert(0) += 1;
        }
        records.push(DynamicsRecord {
            initial_state,
            final_state,
            judge_state,
        });
    }
    Ok((records, flow))
}

/// Bucketing key for per-slice accuracy tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreakdownBy {
    GoldLabel,
    Group,
    Country,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub key: String,
    pub n: usize,
    pub accuracy: f64,
    pub initial: BTreeMap<PhaseState, usize>,
    pub final_: BTreeMap<PhaseState, usize>,
    pub judge: BTreeMap<JudgeState, usize>,
}

/// Per-bucket adjudicated accuracies and dynamics-state counts; buckets
/// partition the log.
pub fn breakdowns(log: &PredictionLog, by: BreakdownBy) -> Result<Vec<BucketRow>, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut buckets: BTreeMap<String, Vec<&LogEntry>> = BTreeMap::new();
    for entry in &log.entries {
        let key = match by {
            BreakdownBy::GoldLabel => entry.gold.to_string(),
            BreakdownBy::Group => entry
                .group
                .ok_or_else(|| MetricsError::MissingGroup {
                    scenario_id: entry.scenario_id.clone(),
                })?
                .to_string(),
            BreakdownBy::Country => entry
                .country
                .clone()
                .ok_or_else(|| MetricsError::MissingCountry {
                    scenario_id: entry.scenario_id.clone(),
                })?,
        };
        buckets.entry(key).or_default().push(entry);
    }
    let mut rows = Vec::with_capacity(buckets.len());
    for (key, entries) in buckets {
        let n = entries.len();
        let hits = entries
            .iter()
            .filter(|e| e.adjudicated_final == e.gold)
            .count();
        let mut initial = BTreeMap::new();
        let mut final_ = BTreeMap::new();
        let mut judge = BTreeMap::new();
        for e in &entries {
            if let Ok(s) = phase_state(&e.initial, e.gold, &e.scenario_id, "initial") {
                *initial.entry(s).or_insert(0) += 1;
            }
            if let Ok(s) = phase_state(&e.finals, e.gold, &e.scenario_id, "final") {
                *final_.entry(s).or_insert(0) += 1;
            }
            if e.finals.len() == 2 {
                let j = if e.adjudicated_final == e.gold {
                    JudgeState::Correct
                } else {
                    JudgeState::Incorrect
                };
                *judge.entry(j).or_insert(0) += 1;
            }
        }
        rows.push(BucketRow {
            key,
            n,
            accuracy: hits as f64 / n as f64,
            initial,
            final_,
            judge,
        });
    }
    Ok(rows)
}

pub fn render_breakdown_table(rows: &[BucketRow]) -> String {
    let mut out = String::from(
        "key\tn\taccuracy\tinit_correct\tinit_incorrect\tinit_mixed\tfinal_correct\tfinal_incorrect\tfinal_mixed\tjudge_correct\tjudge_incorrect\n",
    );
    let get = |m: &BTreeMap<PhaseState, usize>, s: PhaseState| *m.get(&s).unwrap_or(&0);
    for row in rows {
        out.push_str(&format!(
            "{}\t{}\t{:.4}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            row.key,
            row.n,
            row.accuracy,
            get(&row.initial, PhaseState::Correct),
            get(&row.initial, PhaseState::Incorrect),
            get(&row.initial, PhaseState::Mixed),
            get(&row.final_, PhaseState::Correct),
            get(&row.final_, PhaseState::Incorrect),
            get(&row.final_, PhaseState::Mixed),
            row.judge.get(&JudgeState::Correct).unwrap_or(&0),
            row.judge.get(&JudgeState::Incorrect).unwrap_or(&0),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceAverages {
    /// Averaged across the two option-order runs.
    pub reflect: f64,
    pub debate: f64,
    /// Runs where the model produced no readable (A)/(B), averaged likewise.
    pub defaulted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceCountReport {
    pub scenarios: usize,
    pub per_agent: BTreeMap<String, ChoiceAverages>,
}

impl ChoiceCountReport {
    pub fn render_table(&self) -> String {
        let mut out = String::from("agent\treflect\tdebate\tdefaulted\tscenarios\n");
        for (agent, row) in &self.per_agent {
            out.push_str(&format!(
                "{agent}\t{:.1}\t{:.1}\t{:.1}\t{}\n",
                row.reflect, row.debate, row.defaulted, self.scenarios
            ));
        }
        out
    }
}

/// Per-agent reflect/debate counts averaged across the two option-order runs.
/// Every scenario must appear once per order; per agent and run,
/// reflect + debate equals the scenario count.
pub fn choice_counts(traces: &[Trace]) -> Result<ChoiceCountReport, MetricsError> {
    let sd: Vec<&Trace> = traces
        .iter()
        .filter(|t| matches!(t.strategy, StrategyKind::SelfReflectDebate))
        .collect();
    if sd.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut by_scenario: BTreeMap<&str, BTreeMap<OptionOrder, &Trace>> = BTreeMap::new();
    for t in &sd {
        let order = t.option_order.ok_or_else(|| MetricsError::MissingCompanionRun {
            scenario_id: t.scenario_id.clone(),
        })?;
        by_scenario
            .entry(t.scenario_id.as_str())
            .or_default()
            .insert(order, t);
    }
    let mut per_agent: BTreeMap<String, [(usize, usize, usize); 2]> = BTreeMap::new();
    for (scenario_id, runs) in &by_scenario {
        if runs.len() != 2 {
            return Err(MetricsError::MissingCompanionRun {
                scenario_id: scenario_id.to_string(),
            });
        }
        for (run_idx, order) in [OptionOrder::ReflectFirst, OptionOrder::DebateFirst]
            .into_iter()
            .enumerate()
        {
            for (agent, outcome) in &runs[&order].choices {
                let slot = &mut per_agent.entry(agent.clone()).or_default()[run_idx];
                match outcome.chosen {
                    ChoiceKind::Reflect => slot.0 += 1,
                    ChoiceKind::Debate => slot.1 += 1,
                }
                if outcome.defaulted {
                    slot.2 += 1;
                }
            }
        }
    }
    let scenarios = by_scenario.len();
    let per_agent = per_agent
        .into_iter()
        .map(|(agent, [run1, run2])| {
            debug_assert_eq!(run1.0 + run1.1, scenarios);
            debug_assert_eq!(run2.0 + run2.1, scenarios);
            (
                agent,
                ChoiceAverages {
                    reflect: (run1.0 + run2.0) as f64 / 2.0,
                    debate: (run1.1 + run2.1) as f64 / 2.0,
                    defaulted: (run1.2 + run2.2) as f64 / 2.0,
                },
            )
        })
        .collect();
    Ok(ChoiceCountReport {
        scenarios,
        per_agent,
    })
}

/// Fractions reported to one decimal place as percentages.
pub fn percent1(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}
