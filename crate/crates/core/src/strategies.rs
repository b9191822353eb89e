//! The four strategy engines, answer/choice parsing, adjudication policies,
//! and oracle model selection.
//!
//! A strategy run issues a strictly sequential series of completions for one
//! scenario and returns a [`Trace`] capturing every request verbatim. Two-agent
//! strategies call a judge only when the agents' final labels differ; an agreed
//! label is used as the aggregated decision regardless of its correctness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{CallContext, ChatMessage, ClientError, ModelClient, ModelEndpoint};
use crate::dataset::{ScenarioRecord, TernaryLabel};
use crate::prompts::{
    self, bindings, discussant_choice_description, own_choice_description, Bindings, ChoiceKind,
    OptionOrder, PromptError, PromptStage,
};
use crate::seeded::derive_rng;

/// One parsed model answer. `label` is always `parse_label(raw_text)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub label: TernaryLabel,
    pub raw_text: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage: Option<PromptStage>,
    pub endpoint: String,
}

impl Decision {
    pub fn from_response(raw: impl Into<String>, stage: PromptStage, endpoint: &str) -> Self {
        let raw_text = raw.into();
        Decision {
            label: parse_label(&raw_text),
            raw_text,
            stage: Some(stage),
            endpoint: endpoint.to_string(),
        }
    }
}

/// Outcome of a choose-to-reflect-or-debate turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub chosen: ChoiceKind,
    pub raw_text: String,
    pub option_order: OptionOrder,
    /// True when no `(A)`/`(B)` could be read and the debate default applied.
    pub defaulted: bool,
}

/// How two disagreeing final decisions become one.
#[derive(Debug, Clone, PartialEq)]
pub enum AdjudicationPolicy {
    /// Ask a third model to synthesize the debate history into a label.
    JudgeModel(ModelEndpoint),
    /// Pick whichever final matches the gold label; neither correct falls
    /// back to agent 1, which is incorrect by construction.
    Oracle,
    /// Uniform seeded pick between the two finals.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjudicatorKind {
    Judge,
    Oracle,
    Random,
}

/// Either the agents agreed, or a policy resolved the disagreement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Adjudication {
    Agreed,
    Decided {
        via: AdjudicatorKind,
        decision: Decision,
    },
}

/// What a turn's response parses to, given its stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParsedArtifact {
    Decision { label: TernaryLabel },
    Choice { chosen: ChoiceKind },
    FreeText,
}

/// One request/response exchange, recorded verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub stage: PromptStage,
    pub endpoint: String,
    pub prompt: String,
    pub response: String,
    pub artifact: ParsedArtifact,
    pub latency_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum StrategyKind {
    LabelOnly { fixed: TernaryLabel },
    SingleNoRot,
    Single,
    SelfReflection,
    DebateOnly,
    SelfReflectDebate,
}

impl StrategyKind {
    pub fn id(self) -> &'static str {
        match self {
            StrategyKind::LabelOnly { .. } => "label_only",
            StrategyKind::SingleNoRot => "single_no_rot",
            StrategyKind::Single => "single",
            StrategyKind::SelfReflection => "self_reflection",
            StrategyKind::DebateOnly => "debate_only",
            StrategyKind::SelfReflectDebate => "selfreflect_debate",
        }
    }

    pub fn is_two_agent(self) -> bool {
        matches!(
            self,
            StrategyKind::DebateOnly | StrategyKind::SelfReflectDebate
        )
    }
}

/// Full typed transcript of one strategy run on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub scenario_id: String,
    pub strategy: StrategyKind,
    pub gold: TernaryLabel,
    pub country: String,
    pub group: crate::dataset::CulturalGroup,
    pub rounds: u32,
    pub iterations: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub option_order: Option<OptionOrder>,
    pub turns: Vec<Turn>,
    pub initial: BTreeMap<String, Decision>,
    pub feedbacks: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub choices: BTreeMap<String, ChoiceOutcome>,
    pub finals: BTreeMap<String, Decision>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub adjudicated: Option<Adjudication>,
}

impl Trace {
    fn new(scenario: &ScenarioRecord, strategy: StrategyKind) -> Self {
        Trace {
            scenario_id: scenario.id.clone(),
            strategy,
            gold: scenario.gold,
            country: scenario.country.clone(),
            group: scenario.group,
            rounds: 0,
            iterations: 0,
            option_order: None,
            turns: Vec::new(),
            initial: BTreeMap::new(),
            feedbacks: BTreeMap::new(),
            choices: BTreeMap::new(),
            finals: BTreeMap::new(),
            adjudicated: None,
        }
    }

    /// The label this run is scored on: the adjudicated decision when one
    /// exists, the agreed label otherwise, or the lone agent's final.
    pub fn final_label(&self) -> TernaryLabel {
        match &self.adjudicated {
            Some(Adjudication::Decided { decision, .. }) => decision.label,
            _ => self
                .finals
                .values()
                .next()
                .map(|d| d.label)
                .unwrap_or(TernaryLabel::Unparseable),
        }
    }

    /// Count of judge-stage completions issued (0 or 1).
    pub fn judge_turns(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| matches!(t.stage, PromptStage::DJudge | PromptStage::SdJudge))
            .count()
    }

    /// Final labels of the two debaters, in endpoint-name order.
    pub fn final_pair(&self) -> Option<(TernaryLabel, TernaryLabel)> {
        if self.finals.len() != 2 {
            return None;
        }
        let mut it = self.finals.values();
        Some((it.next().unwrap().label, it.next().unwrap().label))
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("scenario {scenario_id}: {source}")]
    Client {
        scenario_id: String,
        #[source]
        source: ClientError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
}

/// Extract the first standalone `yes` / `no` / `neither` word token,
/// case-insensitively. Word tokens are maximal alphabetic runs, so `not`,
/// `know`, or `normally` never match, and `Neither` can never lex as `No`.
pub fn parse_label(text: &str) -> TernaryLabel {
    let mut token = String::new();
    let chars = text.chars().chain(std::iter::once(' '));
    for c in chars {
        if c.is_alphabetic() {
            token.extend(c.to_lowercase());
            continue;
        }
        match token.as_str() {
            "yes" => return TernaryLabel::Yes,
            "neither" => return TernaryLabel::Neither,
            "no" => return TernaryLabel::No,
            _ => token.clear(),
        }
    }
    TernaryLabel::Unparseable
}

/// Read an `(A)`/`(B)` choice (or a bare leading letter) and map it to the
/// behavior that letter denotes under the given option order. No readable
/// choice defaults to debate, flagged as defaulted.
pub fn parse_choice(text: &str, option_order: OptionOrder) -> ChoiceOutcome {
    let letter = first_choice_letter(text);
    match letter {
        Some(l) => ChoiceOutcome {
            chosen: option_order.meaning_of(l),
            raw_text: text.to_string(),
            option_order,
            defaulted: false,
        },
        None => ChoiceOutcome {
            chosen: ChoiceKind::Debate,
            raw_text: text.to_string(),
            option_order,
            defaulted: true,
        },
    }
}

fn first_choice_letter(text: &str) -> Option<char> {
    let lower = text.to_lowercase();
    let a = lower.find("(a)");
    let b = lower.find("(b)");
    match (a, b) {
        (Some(pa), Some(pb)) => Some(if pa < pb { 'A' } else { 'B' }),
        (Some(_), None) => Some('A'),
        (None, Some(_)) => Some('B'),
        (None, None) => {
            let trimmed = text.trim_start();
            let mut chars = trimmed.chars();
            let first = chars.next()?;
            let boundary = chars.next().is_none_or(|c| !c.is_alphanumeric());
            match (first.to_ascii_uppercase(), boundary) {
                ('A', true) => Some('A'),
                ('B', true) => Some('B'),
                _ => None,
            }
        }
    }
}

/// Upper-bound selection between two predictions using the gold label: any
/// prediction matching gold wins; otherwise the first prediction stands and
/// is incorrect by construction.
pub fn oracle_select(
    pred1: TernaryLabel,
    pred2: TernaryLabel,
    gold: TernaryLabel,
) -> TernaryLabel {
    if pred1 == gold || pred2 == gold {
        gold
    } else {
        pred1
    }
}

fn scenario_bindings(scenario: &ScenarioRecord, with_rot: bool) -> Bindings {
    let mut b = bindings(&[
        ("country", &scenario.country),
        ("story", &scenario.story),
    ]);
    if with_rot {
        b.insert("rule_of_thumb".into(), scenario.rule_of_thumb.clone());
    }
    b
}

async fn issue(
    client: &ModelClient,
    endpoint: &ModelEndpoint,
    scenario: &ScenarioRecord,
    stage: PromptStage,
    prompt: String,
    trace: &mut Trace,
) -> Result<String, StrategyError> {
    let ctx = CallContext {
        scenario_id: &scenario.id,
        gold: scenario.gold,
        stage,
        turn_index: trace.turns.len() as u32,
    };
    let completion = client
        .complete(endpoint, ctx, &[ChatMessage::user(prompt.clone())])
        .await
        .map_err(|source| StrategyError::Client {
            scenario_id: scenario.id.clone(),
            source,
        })?;
    let artifact = match stage {
        PromptStage::SingleNoRot
        | PromptStage::SingleWithRot
        | PromptStage::SrInitial
        | PromptStage::SrFinal
        | PromptStage::DInitial
        | PromptStage::DFinal
        | PromptStage::DJudge
        | PromptStage::SdInitial
        | PromptStage::SdFinal
        | PromptStage::SdJudge => ParsedArtifact::Decision {
            label: parse_label(&completion.text),
        },
        PromptStage::SdChoice => ParsedArtifact::Choice {
            // provisional; callers re-parse with the real option order
            chosen: ChoiceKind::Debate,
        },
        PromptStage::SrReflect
        | PromptStage::DFeedback
        | PromptStage::SdReflectBranch
        | PromptStage::SdDebateBranch => ParsedArtifact::FreeText,
    };
    trace.turns.push(Turn {
        stage,
        endpoint: endpoint.name.clone(),
        prompt,
        response: completion.text.clone(),
        artifact,
        latency_ms: completion.latency_ms,
        attempts: completion.attempts,
    });
    Ok(completion.text)
}

/// Build a trace for the no-model constant-answer baseline.
pub fn run_label_only(scenario: &ScenarioRecord, fixed: TernaryLabel) -> Trace {
    let mut trace = Trace::new(scenario, StrategyKind::LabelOnly { fixed });
    trace.finals.insert(
        "label-only".to_string(),
        Decision {
            label: fixed,
            raw_text: fixed.as_str().to_string(),
            stage: None,
            endpoint: "label-only".to_string(),
        },
    );
    trace
}

/// One completion on the with- or without-rule template; no feedback, no
/// adjudication.
pub async fn run_single(
    client: &ModelClient,
    endpoint: &ModelEndpoint,
    scenario: &ScenarioRecord,
    with_rot: bool,
) -> Result<Trace, StrategyError> {
    let (stage, strategy) = if with_rot {
        (PromptStage::SingleWithRot, StrategyKind::Single)
    } else {
        (PromptStage::SingleNoRot, StrategyKind::SingleNoRot)
    };
    let mut trace = Trace::new(scenario, strategy);
    let prompt = prompts::render(stage, &scenario_bindings(scenario, with_rot))?;
    let raw = issue(client, endpoint, scenario, stage, prompt, &mut trace).await?;
    trace
        .finals
        .insert(endpoint.name.clone(), Decision::from_response(raw, stage, &endpoint.name));
    Ok(trace)
}

/// Initial decision, then `iterations` critique-and-redecide passes. Each pass
/// sees the latest answer plus the numbered history of all prior reflections;
/// the final decision is the last pass's answer.
pub async fn run_self_reflection(
    client: &ModelClient,
    endpoint: &ModelEndpoint,
    scenario: &ScenarioRecord,
    iterations: u32,
) -> Result<Trace, StrategyError> {
    if iterations == 0 {
        return Err(StrategyError::InvalidArguments(
            "self-reflection needs at least one iteration".into(),
        ));
    }
    let mut trace = Trace::new(scenario, StrategyKind::SelfReflection);
    trace.iterations = iterations;

    let base = scenario_bindings(scenario, true);
    let initial_prompt = prompts::render(PromptStage::SrInitial, &base)?;
    let initial_raw = issue(
        client,
        endpoint,
        scenario,
        PromptStage::SrInitial,
        initial_prompt,
        &mut trace,
    )
    .await?;
    trace.initial.insert(
        endpoint.name.clone(),
        Decision::from_response(initial_raw.clone(), PromptStage::SrInitial, &endpoint.name),
    );

    let mut latest_response = initial_raw;
    let mut reflections: Vec<String> = Vec::new();
    let mut last_final = None;
    for _ in 0..iterations {
        let mut b = base.clone();
        b.insert("response".into(), latest_response.clone());
        let reflect_prompt = prompts::render_reflect_with_history(&b, &reflections)?;
        let reflection = issue(
            client,
            endpoint,
            scenario,
            PromptStage::SrReflect,
            reflect_prompt,
            &mut trace,
        )
        .await?;

        b.insert("reflection".into(), reflection.clone());
        let final_prompt = prompts::render_sr_final_with_history(&b, &reflections)?;
        let final_raw = issue(
            client,
            endpoint,
            scenario,
            PromptStage::SrFinal,
            final_prompt,
            &mut trace,
        )
        .await?;
        reflections.push(reflection);
        latest_response = final_raw.clone();
        last_final = Some(Decision::from_response(
            final_raw,
            PromptStage::SrFinal,
            &endpoint.name,
        ));
    }
    if let Some(r) = reflections.last() {
        trace.feedbacks.insert(endpoint.name.clone(), r.clone());
    }
    trace
        .finals
        .insert(endpoint.name.clone(), last_final.expect("iterations >= 1"));
    Ok(trace)
}

struct AgentView<'a> {
    endpoint: &'a ModelEndpoint,
    initial_raw: String,
}

fn check_distinct(m1: &ModelEndpoint, m2: &ModelEndpoint) -> Result<(), StrategyError> {
    if m1.name == m2.name {
        return Err(StrategyError::InvalidArguments(format!(
            "debate requires two distinct endpoints, got '{}' twice",
            m1.name
        )));
    }
    Ok(())
}

/// Both agents decide independently, exchange `rounds` rounds of feedback,
/// and re-decide. Agreement is final; disagreement goes to the policy.
pub async fn run_debate(
    client: &ModelClient,
    m1: &ModelEndpoint,
    m2: &ModelEndpoint,
    scenario: &ScenarioRecord,
    rounds: u32,
    policy: &AdjudicationPolicy,
) -> Result<Trace, StrategyError> {
    check_distinct(m1, m2)?;
    if rounds == 0 {
        return Err(StrategyError::InvalidArguments(
            "debate needs at least one round".into(),
        ));
    }
    let mut trace = Trace::new(scenario, StrategyKind::DebateOnly);
    trace.rounds = rounds;
    let base = scenario_bindings(scenario, true);

    let mut agents = Vec::with_capacity(2);
    for endpoint in [m1, m2] {
        let prompt = prompts::render(PromptStage::DInitial, &base)?;
        let raw = issue(client, endpoint, scenario, PromptStage::DInitial, prompt, &mut trace)
            .await?;
        let decision = Decision::from_response(raw.clone(), PromptStage::DInitial, &endpoint.name);
        trace.initial.insert(endpoint.name.clone(), decision);
        agents.push(AgentView {
            endpoint,
            initial_raw: raw,
        });
    }

    // rounds of symmetric feedback exchange; round k sees rounds 1..k-1
    let mut exchanges: Vec<(String, String)> = Vec::new();
    for _ in 0..rounds {
        let mut this_round = Vec::with_capacity(2);
        for (me, other) in [(0usize, 1usize), (1, 0)] {
            let mut b = base.clone();
            b.insert("your_response".into(), agents[me].initial_raw.clone());
            b.insert("other_response".into(), agents[other].initial_raw.clone());
            let history: Vec<(String, String)> = exchanges
                .iter()
                .map(|(f1, f2)| perspective(me, f1, f2))
                .collect();
            let prompt = prompts::render_feedback_with_history(&b, &history)?;
            let raw = issue(
                client,
                agents[me].endpoint,
                scenario,
                PromptStage::DFeedback,
                prompt,
                &mut trace,
            )
            .await?;
            this_round.push(raw);
        }
        exchanges.push((this_round[0].clone(), this_round[1].clone()));
    }
    trace
        .feedbacks
        .insert(agents[0].endpoint.name.clone(), exchanges[0].0.clone());
    trace
        .feedbacks
        .insert(agents[1].endpoint.name.clone(), exchanges[0].1.clone());

    // final decisions: feedback slots carry round 1, later rounds append
    let mut finals = Vec::with_capacity(2);
    for (me, other) in [(0usize, 1usize), (1, 0)] {
        let mut b = base.clone();
        b.insert("your_response".into(), agents[me].initial_raw.clone());
        b.insert("other_response".into(), agents[other].initial_raw.clone());
        let (mine, theirs) = perspective(me, &exchanges[0].0, &exchanges[0].1);
        b.insert("your_feedback".into(), mine);
        b.insert("other_feedback".into(), theirs);
        let later: Vec<(String, String)> = exchanges[1..]
            .iter()
            .map(|(f1, f2)| perspective(me, f1, f2))
            .collect();
        let prompt = prompts::render_final_with_history(&b, &later)?;
        let raw = issue(
            client,
            agents[me].endpoint,
            scenario,
            PromptStage::DFinal,
            prompt,
            &mut trace,
        )
        .await?;
        let decision =
            Decision::from_response(raw, PromptStage::DFinal, &agents[me].endpoint.name);
        trace
            .finals
            .insert(agents[me].endpoint.name.clone(), decision.clone());
        finals.push(decision);
    }

    let all_feedback = |idx: usize| -> String {
        exchanges
            .iter()
            .map(|(f1, f2)| if idx == 0 { f1.as_str() } else { f2.as_str() })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let slots = JudgeSlots {
        model1_response: agents[0].initial_raw.clone(),
        model2_response: agents[1].initial_raw.clone(),
        model1_feedback: all_feedback(0),
        model2_feedback: all_feedback(1),
        model1_decision: finals[0].raw_text.clone(),
        model2_decision: finals[1].raw_text.clone(),
    };
    trace.adjudicated = Some(
        adjudicate(
            client,
            scenario,
            PromptStage::DJudge,
            &slots,
            (&finals[0], &finals[1]),
            policy,
            &mut trace,
        )
        .await?,
    );
    Ok(trace)
}

fn perspective(me: usize, f1: &str, f2: &str) -> (String, String) {
    if me == 0 {
        (f1.to_string(), f2.to_string())
    } else {
        (f2.to_string(), f1.to_string())
    }
}

/// Both agents decide, each chooses to reflect or debate (its own option
/// order), executes that branch, and re-decides with both texts in context.
/// Adjudication as in the debate-only strategy.
pub async fn run_selfreflect_debate(
    client: &ModelClient,
    m1: &ModelEndpoint,
    m2: &ModelEndpoint,
    scenario: &ScenarioRecord,
    policy: &AdjudicationPolicy,
    option_orders: (OptionOrder, OptionOrder),
) -> Result<Trace, StrategyError> {
    check_distinct(m1, m2)?;
    let mut trace = Trace::new(scenario, StrategyKind::SelfReflectDebate);
    trace.rounds = 1;
    trace.option_order = Some(option_orders.0);
    let base = scenario_bindings(scenario, true);

    let mut agents = Vec::with_capacity(2);
    for endpoint in [m1, m2] {
        let prompt = prompts::render(PromptStage::SdInitial, &base)?;
        let raw = issue(client, endpoint, scenario, PromptStage::SdInitial, prompt, &mut trace)
            .await?;
        let decision =
            Decision::from_response(raw.clone(), PromptStage::SdInitial, &endpoint.name);
        trace.initial.insert(endpoint.name.clone(), decision);
        agents.push(AgentView {
            endpoint,
            initial_raw: raw,
        });
    }

    // each agent picks reflect or debate under its own option order
    let orders = [option_orders.0, option_orders.1];
    let mut choices = Vec::with_capacity(2);
    for (me, other) in [(0usize, 1usize), (1, 0)] {
        let mut b = base.clone();
        b.insert("your_response".into(), agents[me].initial_raw.clone());
        b.insert("other_response".into(), agents[other].initial_raw.clone());
        let prompt = prompts::render_choice_prompt(&b, orders[me])?;
        let raw = issue(
            client,
            agents[me].endpoint,
            scenario,
            PromptStage::SdChoice,
            prompt,
            &mut trace,
        )
        .await?;
        let outcome = parse_choice(&raw, orders[me]);
        if let Some(turn) = trace.turns.last_mut() {
            turn.artifact = ParsedArtifact::Choice {
                chosen: outcome.chosen,
            };
        }
        trace
            .choices
            .insert(agents[me].endpoint.name.clone(), outcome.clone());
        choices.push(outcome);
    }

    // execute the chosen branch; the reflect branch never sees the discussant
    let mut branch_texts = Vec::with_capacity(2);
    for (me, other) in [(0usize, 1usize), (1, 0)] {
        let mut b = base.clone();
        b.insert("your_response".into(), agents[me].initial_raw.clone());
        let stage = match choices[me].chosen {
            ChoiceKind::Reflect => PromptStage::SdReflectBranch,
            ChoiceKind::Debate => {
                b.insert("other_response".into(), agents[other].initial_raw.clone());
                PromptStage::SdDebateBranch
            }
        };
        let prompt = prompts::render(stage, &b)?;
        let raw = issue(client, agents[me].endpoint, scenario, stage, prompt, &mut trace).await?;
        trace
            .feedbacks
            .insert(agents[me].endpoint.name.clone(), raw.clone());
        branch_texts.push(raw);
    }

    // final decisions with both texts and the framing sentence naming choices
    let mut finals = Vec::with_capacity(2);
    for (me, other) in [(0usize, 1usize), (1, 0)] {
        let mut b = base.clone();
        b.insert("your_response".into(), agents[me].initial_raw.clone());
        b.insert("other_response".into(), agents[other].initial_raw.clone());
        b.insert("your_feedback".into(), branch_texts[me].clone());
        b.insert("other_feedback".into(), branch_texts[other].clone());
        b.insert(
            "your_choice".into(),
            own_choice_description(choices[me].chosen).to_string(),
        );
        b.insert(
            "other_choice".into(),
            discussant_choice_description(choices[other].chosen).to_string(),
        );
        let prompt = prompts::render(PromptStage::SdFinal, &b)?;
        let raw = issue(
            client,
            agents[me].endpoint,
            scenario,
            PromptStage::SdFinal,
            prompt,
            &mut trace,
        )
        .await?;
        let decision =
            Decision::from_response(raw, PromptStage::SdFinal, &agents[me].endpoint.name);
        trace
            .finals
            .insert(agents[me].endpoint.name.clone(), decision.clone());
        finals.push(decision);
    }

    let slots = JudgeSlots {
        model1_response: agents[0].initial_raw.clone(),
        model2_response: agents[1].initial_raw.clone(),
        model1_feedback: branch_texts[0].clone(),
        model2_feedback: branch_texts[1].clone(),
        model1_decision: finals[0].raw_text.clone(),
        model2_decision: finals[1].raw_text.clone(),
    };
    trace.adjudicated = Some(
        adjudicate(
            client,
            scenario,
            PromptStage::SdJudge,
            &slots,
            (&finals[0], &finals[1]),
            policy,
            &mut trace,
        )
        .await?,
    );
    Ok(trace)
}

struct JudgeSlots {
    model1_response: String,
    model2_response: String,
    model1_feedback: String,
    model2_feedback: String,
    model1_decision: String,
    model2_decision: String,
}

async fn adjudicate(
    client: &ModelClient,
    scenario: &ScenarioRecord,
    judge_stage: PromptStage,
    slots: &JudgeSlots,
    finals: (&Decision, &Decision),
    policy: &AdjudicationPolicy,
    trace: &mut Trace,
) -> Result<Adjudication, StrategyError> {
    let (f1, f2) = finals;
    if f1.label == f2.label {
        return Ok(Adjudication::Agreed);
    }
    match policy {
        AdjudicationPolicy::JudgeModel(judge) => {
            let mut b = bindings(&[
                ("country", &scenario.country),
                ("rule_of_thumb", &scenario.rule_of_thumb),
                ("story", &scenario.story),
            ]);
            b.insert("model1_response".into(), slots.model1_response.clone());
            b.insert("model2_response".into(), slots.model2_response.clone());
            b.insert("model1_feedback".into(), slots.model1_feedback.clone());
            b.insert("model2_feedback".into(), slots.model2_feedback.clone());
            b.insert("model1_decision".into(), slots.model1_decision.clone());
            b.insert("model2_decision".into(), slots.model2_decision.clone());
            let prompt = prompts::render(judge_stage, &b)?;
            let raw = issue(client, judge, scenario, judge_stage, prompt, trace).await?;
            Ok(Adjudication::Decided {
                via: AdjudicatorKind::Judge,
                decision: Decision::from_response(raw, judge_stage, &judge.name),
            })
        }
        AdjudicationPolicy::Oracle => {
            let picked = if f2.label == scenario.gold { f2 } else { f1 };
            Ok(Adjudication::Decided {
                via: AdjudicatorKind::Oracle,
                decision: picked.clone(),
            })
        }
        AdjudicationPolicy::Random(seed) => {
            use rand::Rng;
            let mut rng = derive_rng(*seed, &[&scenario.id, "random-adjudication"]);
            let picked = if rng.gen_range(0..2) == 0 { f1 } else { f2 };
            Ok(Adjudication::Decided {
                via: AdjudicatorKind::Random,
                decision: picked.clone(),
            })
        }
    }
}
