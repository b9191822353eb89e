//! Report emission: accuracy, parity, decision-dynamics flow, per-bucket
//! breakdowns, and choice counts, all recomputed from the transcript file.

use std::path::Path;

use crate::metrics::{
    accuracy, breakdowns, choice_counts, classify_dynamics, parity, percent1, render_breakdown_table,
    Baseline, BreakdownBy, ChoiceCountReport, FlowMatrix, MetricsError, ParityReport,
    PredictionLog, Selector,
};
use crate::prompts::OptionOrder;
use crate::strategies::{StrategyKind, Trace};

use super::transcript::{read_transcript, TranscriptLine};
use super::{RunError, RunManifest, RunPaths};

/// Everything `report` produces, plus the canonical log it was computed from.
pub struct ReportBundle {
    pub strategy: String,
    pub n_traces: usize,
    pub n_failures: usize,
    pub canonical_order: OptionOrder,
    pub log: PredictionLog,
    pub accuracy_rows: Vec<AccuracyRow>,
    pub parity: Result<ParityReport, String>,
    pub dynamics: Option<FlowMatrix>,
    pub breakdown_label: String,
    pub breakdown_group: String,
    pub breakdown_country: String,
    pub choices: Option<Result<ChoiceCountReport, String>>,
}

pub struct AccuracyRow {
    pub selector: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Build the full report bundle for a run directory. Purely a function of
/// the transcript file (the manifest only supplies the canonical option
/// order for replicated runs).
pub fn report_from_dir(out_dir: &Path) -> Result<ReportBundle, RunError> {
    let paths = RunPaths::new(out_dir);
    let canonical_order = if paths.manifest.exists() {
        RunManifest::load(&paths.manifest)?.canonical_order
    } else {
        OptionOrder::ReflectFirst
    };
    let lines = read_transcript(&paths.transcript)?;
    build_report(&lines, canonical_order)
}

pub fn build_report(
    lines: &[TranscriptLine],
    canonical_order: OptionOrder,
) -> Result<ReportBundle, RunError> {
    let traces: Vec<&Trace> = lines
        .iter()
        .filter_map(|l| l.trace.as_deref())
        .collect();
    let n_failures = lines.iter().filter(|l| l.failure.is_some()).count();

    // one scored run per scenario: replicated runs keep only the canonical order
    let canonical: Vec<&Trace> = traces
        .iter()
        .copied()
        .filter(|t| match t.strategy {
            StrategyKind::SelfReflectDebate => t.option_order == Some(canonical_order),
            _ => true,
        })
        .collect();
    if canonical.is_empty() {
        return Err(MetricsError::EmptyLog.into());
    }
    let strategy = canonical[0].strategy.id().to_string();
    let log = PredictionLog::from_traces(canonical.iter().copied())?;

    let mut agent_names: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for entry in &log.entries {
        agent_names.extend(entry.finals.keys().cloned());
    }
    let mut accuracy_rows = Vec::new();
    for name in &agent_names {
        let acc = accuracy(&log, &Selector::Agent(name.clone()))?;
        accuracy_rows.push(AccuracyRow {
            selector: format!("agent:{name}"),
            n: log.len(),
            correct: (acc * log.len() as f64).round() as usize,
            accuracy: acc,
        });
    }
    let adjudicated = accuracy(&log, &Selector::Adjudicated)?;
    accuracy_rows.push(AccuracyRow {
        selector: "adjudicated".to_string(),
        n: log.len(),
        correct: (adjudicated * log.len() as f64).round() as usize,
        accuracy: adjudicated,
    });

    let parity_result = parity(&log, Baseline::AutoMax).map_err(|e| e.to_string());
    let dynamics = classify_dynamics(&log).ok().map(|(_, flow)| flow);
    let breakdown_label = render_breakdown_table(&breakdowns(&log, BreakdownBy::GoldLabel)?);
    let breakdown_group = render_breakdown_table(&breakdowns(&log, BreakdownBy::Group)?);
    let breakdown_country = render_breakdown_table(&breakdowns(&log, BreakdownBy::Country)?);

    let has_sd = traces
        .iter()
        .any(|t| matches!(t.strategy, StrategyKind::SelfReflectDebate));
    let choices = if has_sd {
        let owned: Vec<Trace> = traces.iter().map(|t| (*t).clone()).collect();
        Some(choice_counts(&owned).map_err(|e| e.to_string()))
    } else {
        None
    };

    Ok(ReportBundle {
        strategy,
        n_traces: traces.len(),
        n_failures,
        canonical_order,
        log,
        accuracy_rows,
        parity: parity_result,
        dynamics,
        breakdown_label,
        breakdown_group,
        breakdown_country,
        choices,
    })
}

impl ReportBundle {
    pub fn accuracy_table(&self) -> String {
        let mut out = String::from("selector\tn\tcorrect\taccuracy\tpercent\n");
        for row in &self.accuracy_rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\t{}\n",
                row.selector,
                row.n,
                row.correct,
                row.accuracy,
                percent1(row.accuracy)
            ));
        }
        out.push_str(&format!("failures\t{}\t-\t-\t-\n", self.n_failures));
        out
    }

    pub fn parity_table(&self) -> String {
        match &self.parity {
            Ok(report) => report.render_table(),
            Err(note) => format!("parity unavailable\t{note}\n"),
        }
    }

    pub fn sankey_table(&self) -> String {
        let mut out = String::from("phase\tstate\tcount\n");
        if let Some(flow) = &self.dynamics {
            for (phase, state, count) in flow.sankey_rows() {
                out.push_str(&format!("{phase}\t{state}\t{count}\n"));
            }
        }
        out
    }

    pub fn dynamics_table(&self) -> String {
        match &self.dynamics {
            Some(flow) => flow.render_table(),
            None => "dynamics unavailable\tno initial decisions recorded\n".to_string(),
        }
    }

    pub fn choices_table(&self) -> Option<String> {
        self.choices.as_ref().map(|result| match result {
            Ok(report) => report.render_table(),
            Err(note) => format!("choice counts unavailable\t{note}\n"),
        })
    }

    /// Write every table under `report_dir`, one TSV per topic. Output is a
    /// deterministic function of the transcript.
    pub fn write_files(&self, report_dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(report_dir).map_err(|e| super::io_err(report_dir, e))?;
        let write = |name: &str, content: &str| -> Result<(), RunError> {
            let path = report_dir.join(name);
            std::fs::write(&path, content).map_err(|e| super::io_err(&path, e))
        };
        write("accuracy.tsv", &self.accuracy_table())?;
        write("parity.tsv", &self.parity_table())?;
        write("dynamics_flow.tsv", &self.dynamics_table())?;
        write("sankey.tsv", &self.sankey_table())?;
        write("breakdown_label.tsv", &self.breakdown_label)?;
        write("breakdown_group.tsv", &self.breakdown_group)?;
        write("breakdown_country.tsv", &self.breakdown_country)?;
        if let Some(table) = self.choices_table() {
            write("choices.tsv", &table)?;
        }
        Ok(())
    }

    /// Short human-readable summary for the CLI.
    pub fn render_summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "strategy {} | {} trace(s), {} failure(s)\n",
            self.strategy,
            self.n_traces,
            self.n_failures
        ));
        for row in &self.accuracy_rows {
            out.push_str(&format!(
                "  {:<18} {}% ({}/{})\n",
                row.selector,
                percent1(row.accuracy),
                row.correct,
                row.n
            ));
        }
        if let Ok(parity) = &self.parity {
            out.push_str(&format!(
                "  parity baseline {} | average parity {:.3}\n",
                parity.baseline, parity.average_parity
            ));
        }
        if let Some(flow) = &self.dynamics {
            if flow.has_judge_phase {
                let judged: usize = flow
                    .final_
                    .get(&crate::metrics::PhaseState::Mixed)
                    .copied()
                    .unwrap_or(0);
                out.push_str(&format!(
                    "  {} of {} finals disagreed and were adjudicated\n",
                    judged, flow.total
                ));
            }
        }
        out
    }
}
