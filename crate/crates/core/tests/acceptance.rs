//! Acceptance gate: one test per criterion, each printing a pass line with
//! the measured values (run with `--nocapture` to see them).
//!
//! Criteria that need model endpoints run against deterministic mocks; the
//! final end-to-end criterion is conditional on real endpoints being
//! configured via `MOOT_E2E_CONFIG`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use moot::client::{MockBehavior, MockSpec, ModelClient, ModelEndpoint};
use moot::dataset::{
    label_only_baseline, load_dataset, CulturalGroup, DatasetStats, ScenarioRecord, TernaryLabel,
};
use moot::metrics::{
    accuracy, classify_dynamics, parity, percent1, Baseline, JudgeState, LogEntry, PhaseState,
    PredictionLog, Selector,
};
use moot::prompts::OptionOrder;
use moot::runner::config::{
    DatasetConfig, EndpointConfig, EndpointKind, FilterConfig, MockBehaviorName, PolicyConfig,
    PolicyName, RunConfig, StrategyConfig, StrategyName,
};
use moot::seeded::derive_rng;
use moot::strategies::{
    oracle_select, run_debate, run_self_reflection, run_selfreflect_debate, run_single,
    AdjudicationPolicy, Trace,
};
use rand::Rng;

mod common;
use common::{golden_artifacts, golden_dir, workspace_data_dir};

fn pass(criterion: &str, detail: impl AsRef<str>) {
    println!("[PASS] {criterion}: {}", detail.as_ref());
}

fn bundled_dataset() -> Vec<ScenarioRecord> {
    let data = workspace_data_dir();
    load_dataset(&data.join("normad-eti.tsv"), &data.join("group_map.tsv"))
        .expect("bundled dataset loads")
}

// ---------------------------------------------------------------- criterion 1

#[test]
fn criterion_01_dataset_statistics() {
    let started = Instant::now();
    let records = bundled_dataset();
    let stats = DatasetStats::compute(&records);
    assert_eq!(stats.n_total, 2633);
    assert_eq!(stats.n_per_country.len(), 75);
    assert_eq!(stats.n_per_label[&TernaryLabel::Yes], 943);
    assert_eq!(stats.n_per_label[&TernaryLabel::No], 875);
    assert_eq!(stats.n_per_label[&TernaryLabel::Neither], 815);
    assert_eq!(stats.n_per_group.len(), 8);
    assert!(stats.is_consistent());

    // brute-force recount with an independent, dumb parser
    let data_dir = workspace_data_dir();
    let raw = std::fs::read_to_string(data_dir.join("normad-eti.tsv")).unwrap();
    let map_raw = std::fs::read_to_string(data_dir.join("group_map.tsv")).unwrap();
    let mut naive_group_of: BTreeMap<&str, &str> = BTreeMap::new();
    for line in map_raw.lines().filter(|l| !l.trim().is_empty()) {
        let (country, group) = line.split_once('\t').unwrap();
        naive_group_of.insert(country, group);
    }
    let mut naive_labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut naive_groups: BTreeMap<&str, usize> = BTreeMap::new();
    let mut naive_total = 0usize;
    for line in raw.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 5, "fixture rows are plain five-column TSV");
        naive_total += 1;
        *naive_labels.entry(cols[4]).or_insert(0) += 1;
        *naive_groups.entry(naive_group_of[cols[1]]).or_insert(0) += 1;
    }
    assert_eq!(naive_total, stats.n_total);
    for (label, n) in &stats.n_per_label {
        assert_eq!(naive_labels[label.as_str()], *n);
    }
    for (group, n) in &stats.n_per_group {
        assert_eq!(naive_groups[group.name()], *n, "group {group}");
    }

    // the loaded partition equals the bundled stats fixture byte for byte
    let fixture = std::fs::read_to_string(data_dir.join("normad-eti.stats.tsv")).unwrap();
    assert_eq!(stats.render_table(), fixture);

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(
        "criterion 1 (dataset statistics)",
        format!(
            "2633 records, 75 countries, Yes=943 No=875 Neither=815, 8 groups, in {elapsed:?}"
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_02_label_only_baselines() {
    let started = Instant::now();
    let records = bundled_dataset();
    let expected = [
        (TernaryLabel::Yes, 35.8),
        (TernaryLabel::No, 33.2),
        (TernaryLabel::Neither, 31.0),
    ];
    let mut measured = Vec::new();
    for (label, want_pct) in expected {
        let frac = label_only_baseline(&records, label).unwrap();
        let got_pct = frac * 100.0;
        assert!(
            (got_pct - want_pct).abs() <= 0.05,
            "{label}: {got_pct:.4} vs {want_pct} exceeds 0.05pp"
        );
        // printed to one decimal they match the frozen table values
        assert_eq!(percent1(frac), format!("{want_pct:.1}"));
        measured.push(format!("{label}={got_pct:.2}%"));
    }
    let total: f64 = expected
        .iter()
        .map(|(l, _)| label_only_baseline(&records, *l).unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(
        "criterion 2 (label-only baselines)",
        format!("{} in {elapsed:?}", measured.join(" ")),
    );
}

#[tokio::test]
async fn criterion_02b_fixed_label_mock_strategy_over_full_dataset() {
    // the same rate must fall out of the single-model strategy when the
    // agent is a constant-answer mock
    let started = Instant::now();
    let records = bundled_dataset();
    let client = ModelClient::new();
    let endpoint = ModelEndpoint::mock("M1", MockSpec::fixed(TernaryLabel::Yes));
    let mut traces = Vec::with_capacity(records.len());
    for scenario in &records {
        traces.push(run_single(&client, &endpoint, scenario, true).await.unwrap());
    }
    let log = PredictionLog::from_traces(traces.iter()).unwrap();
    let acc = accuracy(&log, &Selector::Adjudicated).unwrap();
    assert!((acc * 100.0 - 35.8).abs() <= 0.05, "{:.4}%", acc * 100.0);
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    pass(
        "criterion 2 (fixed-label mock strategy)",
        format!(
            "always-Yes agent over all 2633 scenarios scores {} in {elapsed:?}",
            percent1(acc)
        ),
    );
}

// ---------------------------------------------------------------- criterion 3

fn synthetic_scenario(i: usize, gold: TernaryLabel) -> ScenarioRecord {
    ScenarioRecord {
        id: format!("syn{i:05}"),
        country: "Ruritania".into(),
        rule_of_thumb: "Greet elders first.".into(),
        story: format!("Synthetic scenario {i}. Is the action acceptable?"),
        gold,
        group: CulturalGroup::Confucian,
    }
}

#[tokio::test]
async fn criterion_03_judge_gating_over_1000_mock_debates() {
    let client = ModelClient::new();
    let m1 = ModelEndpoint::mock(
        "M1",
        MockSpec {
            seed: 101,
            script: Vec::new(),
            default_behavior: MockBehavior::SeededRandomLabel,
            delay_ms: 0,
        },
    );
    let m2 = ModelEndpoint::mock(
        "M2",
        MockSpec {
            seed: 202,
            script: Vec::new(),
            default_behavior: MockBehavior::SeededRandomLabel,
            delay_ms: 0,
        },
    );
    let judge = ModelEndpoint::mock("judge", MockSpec::echo_gold());
    let policy = AdjudicationPolicy::JudgeModel(judge);
    let golds = TernaryLabel::ANSWERS;
    let mut judge_turns = 0usize;
    let mut disagreements = 0usize;
    let mut agreements = 0usize;
    for i in 0..1000 {
        let s = synthetic_scenario(i, golds[i % 3]);
        let trace = run_debate(&client, &m1, &m2, &s, 1, &policy).await.unwrap();
        let (a, b) = trace.final_pair().unwrap();
        if a == b {
            agreements += 1;
            assert_eq!(trace.judge_turns(), 0, "agreed trace {i} called the judge");
        } else {
            disagreements += 1;
            assert_eq!(trace.judge_turns(), 1, "disagreeing trace {i} skipped the judge");
        }
        judge_turns += trace.judge_turns();
    }
    assert_eq!(judge_turns, disagreements);
    assert!(agreements > 0 && disagreements > 0, "mix degenerated");
    pass(
        "criterion 3 (judge gating)",
        format!("1000 debates: {disagreements} disagreements = {judge_turns} judge turns, {agreements} agreements = 0 judge turns"),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_04_oracle_properties_on_synthetic_logs() {
    let mut rng = derive_rng(4242, &["oracle-acceptance"]);
    let n = 10_000usize;
    let pool = [
        TernaryLabel::Yes,
        TernaryLabel::No,
        TernaryLabel::Neither,
        TernaryLabel::Unparseable,
    ];
    let mut oracle_hits = 0usize;
    let mut ind1_hits = 0usize;
    let mut ind2_hits = 0usize;
    let mut union_hits = 0usize;
    let mut debate_hits = 0usize;
    let mut agree_correct = 0usize;
    let mut disagree_any_correct = 0usize;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
        // real labels 90% of the time, unparseable output for the rest
        let roll = rng.gen_range(0..10usize);
        pool[if roll < 9 { roll % 3 } else { 3 }]
    };
    for _ in 0..n {
        let p1 = draw(&mut rng);
        let p2 = draw(&mut rng);
        let gold = TernaryLabel::ANSWERS[rng.gen_range(0..3)];
        if oracle_select(p1, p2, gold) == gold {
            oracle_hits += 1;
        }
        if p1 == gold {
            ind1_hits += 1;
        }
        if p2 == gold {
            ind2_hits += 1;
        }
        if p1 == gold || p2 == gold {
            union_hits += 1;
        }
        // oracle-adjudicated debate: agreement stands, disagreement goes to it
        let final_label = if p1 == p2 { p1 } else { oracle_select(p1, p2, gold) };
        if final_label == gold {
            debate_hits += 1;
        }
        if p1 == p2 && p1 == gold {
            agree_correct += 1;
        }
        if p1 != p2 && (p1 == gold || p2 == gold) {
            disagree_any_correct += 1;
        }
    }
    assert_eq!(oracle_hits, union_hits, "selection must equal the union count");
    assert!(oracle_hits >= ind1_hits && oracle_hits >= ind2_hits);
    assert_eq!(debate_hits, agree_correct + disagree_any_correct);
    pass(
        "criterion 4 (oracle properties)",
        format!(
            "10000 entries: oracle {oracle_hits} = union {union_hits} >= individuals ({ind1_hits}, {ind2_hits}); adjudicated {debate_hits} = {agree_correct} agree-correct + {disagree_any_correct} disagree-with-correct"
        ),
    );
}

// ---------------------------------------------------------------- criterion 5

fn parity_fixture_log(parities_x1000: [usize; 8]) -> PredictionLog {
    // per group: 2000 entries with parity*1000 correct; the baseline group
    // sits at accuracy 0.5 so each group's accuracy is parity/2 exactly
    let mut entries = Vec::new();
    for (g_idx, group) in CulturalGroup::ALL.into_iter().enumerate() {
        let correct = parities_x1000[g_idx];
        for i in 0..2000usize {
            let ok = i < correct;
            entries.push(LogEntry {
                scenario_id: format!("{group}-{i}"),
                gold: TernaryLabel::Yes,
                country: Some("any".into()),
                group: Some(group),
                strategy: "debate_only".into(),
                initial: BTreeMap::new(),
                finals: [("agent".to_string(), if ok { TernaryLabel::Yes } else { TernaryLabel::No })]
                    .into(),
                adjudicated_final: if ok { TernaryLabel::Yes } else { TernaryLabel::No },
                judge_turn: false,
            });
        }
    }
    PredictionLog::new(entries).unwrap()
}

#[test]
fn criterion_05_parity_reconstruction_matches_reported_averages() {
    // per-group parity premiums for the adjudicated-debate and the
    // single-with-rule columns, in group name order
    let debate = [952usize, 956, 972, 1000, 970, 950, 976, 998];
    let single_with_rule = [937usize, 934, 973, 1000, 943, 931, 968, 996];
    for (name, column, want_avg) in [
        ("debate", debate, 0.972),
        ("single-with-rule", single_with_rule, 0.960),
    ] {
        let log = parity_fixture_log(column);
        let report = parity(&log, Baseline::AutoMax).unwrap();
        assert_eq!(report.baseline, CulturalGroup::EnglishSpeaking);
        assert!(!report.tie_broken);
        for (g_idx, group) in CulturalGroup::ALL.into_iter().enumerate() {
            let got = report.per_group[&group].parity;
            let want = column[g_idx] as f64 / 1000.0;
            assert!((got - want).abs() < 1e-12, "{name}/{group}: {got} vs {want}");
        }
        assert!(
            (report.average_parity - want_avg).abs() <= 0.001,
            "{name}: average {:.5} vs {want_avg}",
            report.average_parity
        );
        let baseline_row = format!("{}\t2000\t0.5000\t1.000", report.baseline);
        assert!(
            report.render_table().contains(&baseline_row),
            "baseline row must print parity 1.000"
        );
    }
    pass(
        "criterion 5 (parity math)",
        "reconstructed per-group logs: debate average 0.97175~0.972, single-with-rule 0.96025~0.960, baseline prints 1.000",
    );
}

// ---------------------------------------------------------------- criterion 6

fn dynamics_fixture_log() -> PredictionLog {
    // aggregate three-phase counts for the adjudicated-debate setting:
    // initial correct/incorrect/mixed, final correct/incorrect/mixed, and
    // judge-correct totals, over 21 agent pairs x 2633 scenarios
    const TOTAL: usize = 55_293;
    const INIT_C: usize = 16_314;
    const INIT_I: usize = 8_011;
    const FINAL_C: usize = 35_212;
    const FINAL_I: usize = 9_690;
    const FINAL_M: usize = 10_391;
    const MIXED_JUDGE_C: usize = 6_974;
    assert_eq!(INIT_C + INIT_I + 30_968, TOTAL);
    assert_eq!(FINAL_C + FINAL_I + FINAL_M, TOTAL);

    let gold = TernaryLabel::Yes;
    let pair_for = |state: PhaseState| -> (TernaryLabel, TernaryLabel) {
        match state {
            PhaseState::Correct => (TernaryLabel::Yes, TernaryLabel::Yes),
            PhaseState::Incorrect => (TernaryLabel::No, TernaryLabel::No),
            PhaseState::Mixed => (TernaryLabel::Yes, TernaryLabel::No),
        }
    };
    let mut entries = Vec::with_capacity(TOTAL);
    for i in 0..TOTAL {
        let initial_state = if i < INIT_C {
            PhaseState::Correct
        } else if i < INIT_C + INIT_I {
            PhaseState::Incorrect
        } else {
            PhaseState::Mixed
        };
        let (final_state, judged_correct) = if i < FINAL_C {
            (PhaseState::Correct, true)
        } else if i < FINAL_C + FINAL_I {
            (PhaseState::Incorrect, false)
        } else {
            let mixed_index = i - FINAL_C - FINAL_I;
            (PhaseState::Mixed, mixed_index < MIXED_JUDGE_C)
        };
        let (i1, i2) = pair_for(initial_state);
        let (f1, f2) = pair_for(final_state);
        entries.push(LogEntry {
            scenario_id: format!("d{i}"),
            gold,
            country: Some("any".into()),
            group: Some(CulturalGroup::Confucian),
            strategy: "debate_only".into(),
            initial: [("M1".to_string(), i1), ("M2".to_string(), i2)].into(),
            finals: [("M1".to_string(), f1), ("M2".to_string(), f2)].into(),
            adjudicated_final: if judged_correct { gold } else { TernaryLabel::No },
            judge_turn: final_state == PhaseState::Mixed,
        });
    }
    PredictionLog::new(entries).unwrap()
}

#[test]
fn criterion_06_dynamics_conservation_and_accuracy_decomposition() {
    let log = dynamics_fixture_log();
    let (records, flow) = classify_dynamics(&log).unwrap();
    assert_eq!(records.len(), log.len());
    assert!(flow.conserves(), "phase marginals must sum to |log|");

    let initial_correct = flow.rate(&flow.initial, PhaseState::Correct) * 100.0;
    let final_correct = flow.rate(&flow.final_, PhaseState::Correct) * 100.0;
    let adjudicated = accuracy(&log, &Selector::Adjudicated).unwrap() * 100.0;
    assert!((initial_correct - 29.5).abs() <= 0.1, "initial {initial_correct:.3}");
    assert!((final_correct - 63.7).abs() <= 0.1, "final {final_correct:.3}");
    assert!((adjudicated - 76.3).abs() <= 0.1, "adjudicated {adjudicated:.3}");

    // decomposition holds exactly at the count level:
    // adjudicated = final-correct + (final-mixed and judge-correct)
    let final_c = *flow.final_.get(&PhaseState::Correct).unwrap();
    let mixed_judge_c = *flow
        .final_to_judge
        .get(&(PhaseState::Mixed, JudgeState::Correct))
        .unwrap();
    let adjudicated_hits = log
        .entries
        .iter()
        .filter(|e| e.adjudicated_final == e.gold)
        .count();
    assert_eq!(adjudicated_hits, final_c + mixed_judge_c);

    // judge-gating consistency on this log
    let judged = log.entries.iter().filter(|e| e.judge_turn).count();
    assert_eq!(judged, *flow.final_.get(&PhaseState::Mixed).unwrap());

    pass(
        "criterion 6 (dynamics conservation)",
        format!(
            "marginals conserve at {}; {initial_correct:.2}% -> {final_correct:.2}% -> {adjudicated:.2}% reproduces 29.5 -> 63.7 -> 76.3 within 0.1pp",
            log.len()
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_07_prompt_fidelity_against_goldens() {
    let artifacts = golden_artifacts();
    assert_eq!(artifacts.len(), 17);
    let dir = golden_dir();
    for (name, rendered) in &artifacts {
        let golden = std::fs::read_to_string(dir.join(format!("{name}.txt")))
            .unwrap_or_else(|e| panic!("missing golden {name}: {e}"));
        assert_eq!(&golden, rendered, "golden mismatch for {name}");
    }
    // the option-order swap keeps the frame and trades the descriptions
    let reflect_first = &artifacts
        .iter()
        .find(|(n, _)| n == "sd_choice")
        .unwrap()
        .1;
    let debate_first = &artifacts
        .iter()
        .find(|(n, _)| n == "sd_choice_debate_first")
        .unwrap()
        .1;
    assert!(reflect_first.contains("(A) reflect on your response"));
    assert!(debate_first.contains("(A) respond to the discussant by providing any relevant feedback"));
    assert_eq!(reflect_first.len(), debate_first.len());
    pass(
        "criterion 7 (prompt fidelity)",
        "17 rendered forms byte-match their goldens; choice-order swap verified",
    );
}

// ---------------------------------------------------------------- criterion 8

fn crash_config(dir: &Path, out: &Path) -> RunConfig {
    let data = workspace_data_dir();
    let mock = |name: &str, seed: u64, behavior: MockBehaviorName| EndpointConfig {
        name: name.into(),
        kind: EndpointKind::Mock,
        model_id: None,
        base_url: None,
        api_key_env: None,
        seed: Some(seed),
        default_behavior: Some(behavior),
        fixed_label: None,
        script: Vec::new(),
        temperature: None,
        max_tokens: None,
        retry_limit: None,
        timeout_secs: None,
        backoff_base_ms: None,
        backoff_factor: None,
        jitter: None,
        max_in_flight: None,
        delay_ms: Some(40),
    };
    let _ = dir;
    RunConfig {
        seed: 99,
        concurrency: 1,
        out_dir: out.to_path_buf(),
        dataset: DatasetConfig {
            path: data.join("normad-eti.tsv"),
            group_map: data.join("group_map.tsv"),
        },
        strategy: StrategyConfig {
            kind: StrategyName::DebateOnly,
            rounds: 1,
            iterations: 1,
            fixed_label: None,
            canonical_order: OptionOrder::ReflectFirst,
        },
        policy: PolicyConfig {
            kind: PolicyName::Judge,
        },
        agents: vec!["M1".into(), "M2".into()],
        judge: Some("judge".into()),
        endpoints: vec![
            mock("M1", 5, MockBehaviorName::SeededRandomLabel),
            mock("M2", 6, MockBehaviorName::SeededRandomLabel),
            mock("judge", 7, MockBehaviorName::EchoGold),
        ],
        filter: FilterConfig {
            countries: Vec::new(),
            ids: Vec::new(),
            sample: 20,
        },
    }
}

fn run_cli(config_path: &Path, out: &Path) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_moot"))
        .args([
            "run",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .expect("cli runs")
}

#[test]
fn criterion_08_determinism_and_crash_resume() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    // the config file carries a placeholder out_dir; every invocation pins
    // its own with --out
    let template = crash_config(dir.path(), &dir.path().join("placeholder"));
    std::fs::write(&config_path, template.canonical_toml()).unwrap();

    // two uninterrupted runs: byte-identical transcripts
    let ref_a = dir.path().join("ref_a");
    let ref_b = dir.path().join("ref_b");
    for out in [&ref_a, &ref_b] {
        let output = run_cli(&config_path, out);
        assert!(output.status.success(), "cli failed: {output:?}");
    }
    let transcript = |out: &Path| std::fs::read(out.join("transcript.jsonl")).unwrap();
    assert_eq!(transcript(&ref_a), transcript(&ref_b), "repeat runs must be byte-identical");

    // crash-injected run: SIGKILL mid-flight, then resume. Under heavy test
    // parallelism the poll loop can get starved past the child's lifetime,
    // so retry with a fresh directory until the kill lands mid-run.
    let mut landed = None;
    for attempt in 0..3 {
        let crash_out = dir.path().join(format!("crashed{attempt}"));
        let mut child = std::process::Command::new(env!("CARGO_BIN_EXE_moot"))
            .args([
                "run",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                crash_out.to_str().unwrap(),
            ])
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .spawn()
            .expect("cli spawns");
        let transcript_path = crash_out.join("transcript.jsonl");
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            if Instant::now() > deadline {
                let _ = child.kill();
                panic!("run never produced transcript lines");
            }
            std::thread::sleep(Duration::from_millis(5));
            let count = std::fs::read_to_string(&transcript_path)
                .map(|t| t.lines().count())
                .unwrap_or(0);
            let exited = matches!(child.try_wait(), Ok(Some(_)));
            if count >= 4 || exited {
                child.kill().ok();
                child.wait().unwrap();
                break;
            }
        }
        let after_kill = std::fs::read_to_string(&transcript_path)
            .map(|t| t.lines().count())
            .unwrap_or(0);
        if after_kill < 20 {
            landed = Some((crash_out, transcript_path, after_kill));
            break;
        }
    }
    let Some((crash_out, transcript_path, partial_lines)) = landed else {
        panic!("kill never landed mid-run after three attempts");
    };

    let output = run_cli(&config_path, &crash_out);
    assert!(output.status.success(), "resume failed: {output:?}");
    assert_eq!(
        transcript(&crash_out),
        transcript(&ref_a),
        "resumed transcript must equal the uninterrupted run"
    );
    let text = std::fs::read_to_string(&transcript_path).unwrap();
    let mut ids: Vec<String> = text
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            v["scenario_id"].as_str().unwrap().to_string()
        })
        .collect();
    assert_eq!(ids.len(), 20);
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 20, "no duplicate traces after resume");

    pass(
        "criterion 8 (determinism & resumability)",
        format!("repeat runs byte-identical; killed at {partial_lines} of 20 traces, resumed to an identical transcript with no duplicates"),
    );
}

// ---------------------------------------------------------------- criterion 9

fn count_stages(trace: &Trace, stages: &[moot::prompts::PromptStage]) -> usize {
    trace
        .turns
        .iter()
        .filter(|t| stages.contains(&t.stage))
        .count()
}

#[tokio::test]
async fn criterion_09_stage_schedule_counts() {
    use moot::prompts::PromptStage as S;
    let client = ModelClient::new();
    let echo = ModelEndpoint::mock("M1", MockSpec::echo_gold());
    let other = ModelEndpoint::mock("M2", MockSpec::fixed(TernaryLabel::No));
    let judge = ModelEndpoint::mock("judge", MockSpec::echo_gold());
    let mut details = Vec::new();

    let s = synthetic_scenario(0, TernaryLabel::Yes);
    let single = run_single(&client, &echo, &s, true).await.unwrap();
    assert_eq!(single.turns.len(), 1);
    details.push("single=1".to_string());

    for n in 1..=3u32 {
        let trace = run_self_reflection(&client, &echo, &s, n).await.unwrap();
        assert_eq!(trace.turns.len(), (1 + 2 * n) as usize, "self-reflection N={n}");
        details.push(format!("sr(N={n})={}", trace.turns.len()));
    }

    let policy = AdjudicationPolicy::JudgeModel(judge.clone());
    for r in 1..=3u32 {
        // agreeing pair: no judge turn
        let agree_partner = ModelEndpoint::mock("M2", MockSpec::echo_gold());
        let agreed = run_debate(&client, &echo, &agree_partner, &s, r, &policy)
            .await
            .unwrap();
        assert_eq!(agreed.turns.len(), (2 + 2 * r + 2) as usize, "debate R={r} agreed");
        assert_eq!(agreed.judge_turns(), 0);
        // disagreeing pair: exactly one judge turn on top
        let disputed = run_debate(&client, &echo, &other, &s, r, &policy)
            .await
            .unwrap();
        assert_eq!(
            disputed.turns.len(),
            (2 + 2 * r + 2 + 1) as usize,
            "debate R={r} disputed"
        );
        assert_eq!(disputed.judge_turns(), 1);
        details.push(format!("debate(R={r})={}(+1)", agreed.turns.len()));
    }

    // choose-to-reflect-or-debate: 2 initial + 2 final + 2 branch texts is
    // the 2+2+2 decision schedule; each agent also issues one choice
    // elicitation, and disagreement adds the judge turn
    let disputed = run_selfreflect_debate(
        &client,
        &echo,
        &other,
        &s,
        &policy,
        (OptionOrder::ReflectFirst, OptionOrder::ReflectFirst),
    )
    .await
    .unwrap();
    let decision_turns = count_stages(
        &disputed,
        &[S::SdInitial, S::SdReflectBranch, S::SdDebateBranch, S::SdFinal],
    );
    let choice_turns = count_stages(&disputed, &[S::SdChoice]);
    assert_eq!(decision_turns, 6, "2 initial + 2 branch + 2 final");
    assert_eq!(choice_turns, 2);
    assert_eq!(disputed.judge_turns(), 1);
    assert_eq!(disputed.turns.len(), 9); // 6 + 2 choices + judge
    let agree_partner = ModelEndpoint::mock("M2", MockSpec::echo_gold());
    let agreed = run_selfreflect_debate(
        &client,
        &echo,
        &agree_partner,
        &s,
        &policy,
        (OptionOrder::ReflectFirst, OptionOrder::ReflectFirst),
    )
    .await
    .unwrap();
    assert_eq!(agreed.turns.len(), 8);
    assert_eq!(agreed.judge_turns(), 0);
    details.push("sd=2+2+2 decisions (+2 choice elicitations)(+1 judge)".to_string());

    pass("criterion 9 (stage schedules)", details.join(", "));
}

// --------------------------------------------------------------- criterion 10

#[tokio::test]
async fn criterion_10_conditional_end_to_end_run() {
    let Some(config_path) = std::env::var_os("MOOT_E2E_CONFIG") else {
        pass(
            "criterion 10 (conditional end-to-end)",
            "SKIP: no real endpoints configured (set MOOT_E2E_CONFIG to a run config)",
        );
        return;
    };
    let mut config = RunConfig::load(Path::new(&config_path)).expect("e2e config loads");
    config.filter.sample = 50;
    let tmp = tempfile::tempdir().unwrap();
    config.out_dir = tmp.path().join("e2e");
    let summary = moot::runner::execute_run(&config).await.expect("e2e run");
    assert_eq!(summary.new_failures, 0, "protocol errors during e2e run");
    let bundle = moot::runner::report::report_from_dir(&config.out_dir).expect("reports build");
    let report_dir = config.out_dir.join("report");
    for table in ["accuracy.tsv", "parity.tsv", "sankey.tsv"] {
        assert!(report_dir.join(table).exists(), "missing report {table}");
    }
    pass(
        "criterion 10 (conditional end-to-end)",
        format!(
            "50-scenario debate completed with 0 protocol errors; adjudicated accuracy {}%",
            percent1(
                bundle
                    .accuracy_rows
                    .iter()
                    .find(|r| r.selector == "adjudicated")
                    .map(|r| r.accuracy)
                    .unwrap_or_default()
            )
        ),
    );
}
