//! Prompt templates and rendering.
//!
//! One template file per stage, embedded at compile time. Substitution is
//! literal: bound values are inserted as-is and never re-scanned, so a value
//! containing `{story}` stays `{story}` in the output. Golden-file tests pin
//! every rendered form byte for byte.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Every distinct prompt stage a strategy can issue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStage {
    SingleNoRot,
    SingleWithRot,
    SrInitial,
    SrReflect,
    SrFinal,
    DInitial,
    DFeedback,
    DFinal,
    DJudge,
    SdInitial,
    SdChoice,
    SdReflectBranch,
    SdDebateBranch,
    SdFinal,
    SdJudge,
}

impl PromptStage {
    pub const ALL: [PromptStage; 15] = [
        PromptStage::SingleNoRot,
        PromptStage::SingleWithRot,
        PromptStage::SrInitial,
        PromptStage::SrReflect,
        PromptStage::SrFinal,
        PromptStage::DInitial,
        PromptStage::DFeedback,
        PromptStage::DFinal,
        PromptStage::DJudge,
        PromptStage::SdInitial,
        PromptStage::SdChoice,
        PromptStage::SdReflectBranch,
        PromptStage::SdDebateBranch,
        PromptStage::SdFinal,
        PromptStage::SdJudge,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PromptStage::SingleNoRot => "single_no_rot",
            PromptStage::SingleWithRot => "single_with_rot",
            PromptStage::SrInitial => "sr_initial",
            PromptStage::SrReflect => "sr_reflect",
            PromptStage::SrFinal => "sr_final",
            PromptStage::DInitial => "d_initial",
            PromptStage::DFeedback => "d_feedback",
            PromptStage::DFinal => "d_final",
            PromptStage::DJudge => "d_judge",
            PromptStage::SdInitial => "sd_initial",
            PromptStage::SdChoice => "sd_choice",
            PromptStage::SdReflectBranch => "sd_reflect_branch",
            PromptStage::SdDebateBranch => "sd_debate_branch",
            PromptStage::SdFinal => "sd_final",
            PromptStage::SdJudge => "sd_judge",
        }
    }

    pub fn from_id(id: &str) -> Result<Self, PromptError> {
        Self::ALL
            .iter()
            .copied()
            .find(|s| s.id() == id)
            .ok_or_else(|| PromptError::UnknownStage(id.to_string()))
    }

    /// The raw template text for this stage.
    pub fn template(self) -> &'static str {
        match self {
            PromptStage::SingleNoRot => include_str!("../templates/single_no_rot.txt"),
            PromptStage::SingleWithRot => include_str!("../templates/single_with_rot.txt"),
            PromptStage::SrInitial => include_str!("../templates/sr_initial.txt"),
            PromptStage::SrReflect => include_str!("../templates/sr_reflect.txt"),
            PromptStage::SrFinal => include_str!("../templates/sr_final.txt"),
            PromptStage::DInitial => include_str!("../templates/d_initial.txt"),
            PromptStage::DFeedback => include_str!("../templates/d_feedback.txt"),
            PromptStage::DFinal => include_str!("../templates/d_final.txt"),
            PromptStage::DJudge => include_str!("../templates/d_judge.txt"),
            PromptStage::SdInitial => include_str!("../templates/sd_initial.txt"),
            PromptStage::SdChoice => include_str!("../templates/sd_choice.txt"),
            PromptStage::SdReflectBranch => include_str!("../templates/sd_reflect_branch.txt"),
            PromptStage::SdDebateBranch => include_str!("../templates/sd_debate_branch.txt"),
            PromptStage::SdFinal => include_str!("../templates/sd_final.txt"),
            PromptStage::SdJudge => include_str!("../templates/sd_judge.txt"),
        }
    }

    /// Placeholder names the stage's template uses.
    pub fn placeholders(self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let text = self.template();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) => {
                    out.insert(after[..close].to_string());
                    rest = &after[close + 1..];
                }
                None => break,
            }
        }
        out
    }
}

/// Placeholder-name to value map used by [`render`].
pub type Bindings = BTreeMap<String, String>;

/// Convenience constructor for a bindings map.
pub fn bindings(pairs: &[(&str, &str)]) -> Bindings {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("stage {stage}: no binding for placeholder {{{name}}}")]
    MissingPlaceholder { stage: &'static str, name: String },
    #[error("unknown prompt stage: {0}")]
    UnknownStage(String),
}

/// Which behavior each choice letter denotes in the choose-to-reflect-or-debate
/// prompt. The same options are offered in both orders to control for position
/// bias; the letters swap meaning, the sentence frame stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionOrder {
    ReflectFirst,
    DebateFirst,
}

impl OptionOrder {
    pub fn id(self) -> &'static str {
        match self {
            OptionOrder::ReflectFirst => "reflect_first",
            OptionOrder::DebateFirst => "debate_first",
        }
    }

    /// The behavior the letter denotes under this order.
    pub fn meaning_of(self, letter: char) -> ChoiceKind {
        let a_is_reflect = matches!(self, OptionOrder::ReflectFirst);
        match (letter, a_is_reflect) {
            ('A', true) | ('B', false) => ChoiceKind::Reflect,
            ('A', false) | ('B', true) => ChoiceKind::Debate,
            _ => unreachable!("letter must be 'A' or 'B'"),
        }
    }
}

/// The behavior an agent picks during its turn: critique its own answer, or
/// answer the discussant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceKind {
    Reflect,
    Debate,
}

const REFLECT_LONG: &str = "reflect on your response";
const REFLECT_SHORT: &str = "reflect";
const DEBATE_LONG: &str = "respond to the discussant by providing any relevant feedback";
const DEBATE_SHORT: &str = "respond to the discussant";

/// Wording used in the final-decision framing sentence for one's own choice.
pub fn own_choice_description(kind: ChoiceKind) -> &'static str {
    match kind {
        ChoiceKind::Reflect => "reflect on your response",
        ChoiceKind::Debate => "provide feedback to the discussant",
    }
}

/// Wording used in the final-decision framing sentence for the discussant's choice.
pub fn discussant_choice_description(kind: ChoiceKind) -> &'static str {
    match kind {
        ChoiceKind::Reflect => "reflect on their response",
        ChoiceKind::Debate => "provide feedback to you",
    }
}

/// Render a stage's template with the given bindings. Substitution is literal:
/// no escaping, no trimming, and inserted values are never re-scanned.
pub fn render(stage: PromptStage, bindings: &Bindings) -> Result<String, PromptError> {
    render_text(stage, stage.template(), bindings)
}

fn render_text(
    stage: PromptStage,
    template: &str,
    bindings: &Bindings,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| PromptError::MissingPlaceholder {
            stage: stage.id(),
            name: after.to_string(),
        })?;
        let name = &after[..close];
        match bindings.get(name) {
            Some(value) => out.push_str(value),
            None => {
                return Err(PromptError::MissingPlaceholder {
                    stage: stage.id(),
                    name: name.to_string(),
                })
            }
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Render the choose-to-reflect-or-debate prompt under the given option order.
/// The order decides which behavior the letters (A) and (B) describe.
pub fn render_choice_prompt(
    bindings: &Bindings,
    order: OptionOrder,
) -> Result<String, PromptError> {
    let mut all = bindings.clone();
    let (a_long, a_short, b_long, b_short) = match order {
        OptionOrder::ReflectFirst => (REFLECT_LONG, REFLECT_SHORT, DEBATE_LONG, DEBATE_SHORT),
        OptionOrder::DebateFirst => (DEBATE_LONG, DEBATE_SHORT, REFLECT_LONG, REFLECT_SHORT),
    };
    all.insert("option_a_long".into(), a_long.into());
    all.insert("option_a_short".into(), a_short.into());
    all.insert("option_b_long".into(), b_long.into());
    all.insert("option_b_short".into(), b_short.into());
    render(PromptStage::SdChoice, &all)
}

/// One prior exchange of feedback: (own text, discussant's text).
pub type FeedbackPair = (String, String);

// Splits a template at a structural anchor found in the *template* text (never
// in bound values), renders both halves, and splices extra lines between them.
fn render_spliced(
    stage: PromptStage,
    anchor: &str,
    bindings: &Bindings,
    inserted_lines: &[String],
) -> Result<String, PromptError> {
    let template = stage.template();
    if inserted_lines.is_empty() {
        return render_text(stage, template, bindings);
    }
    let pos = template
        .rfind(anchor)
        .unwrap_or_else(|| panic!("template {} lacks anchor {:?}", stage.id(), anchor));
    let head = render_text(stage, &template[..pos], bindings)?;
    let tail = render_text(stage, &template[pos..], bindings)?;
    let mut out = head;
    for line in inserted_lines {
        out.push('\n');
        out.push_str(line);
    }
    out.push_str(&tail);
    Ok(out)
}

fn feedback_history_lines(history: &[FeedbackPair]) -> Vec<String> {
    let mut lines = Vec::with_capacity(history.len() * 2);
    for (mine, theirs) in history {
        lines.push(format!("You: {mine}"));
        lines.push(format!("Discussant: {theirs}"));
    }
    lines
}

/// Feedback prompt for debate round `k`: prior rounds' feedback pairs are
/// appended in chronological order after the initial opinions, one
/// `You:`/`Discussant:` line each. Empty history reproduces the base prompt.
pub fn render_feedback_with_history(
    bindings: &Bindings,
    history: &[FeedbackPair],
) -> Result<String, PromptError> {
    render_spliced(
        PromptStage::DFeedback,
        "\n\nRespond to the discussant",
        bindings,
        &feedback_history_lines(history),
    )
}

/// Final-decision prompt for a multi-round debate: the feedback slots carry
/// round 1 and later rounds follow as appended `You:`/`Discussant:` lines.
pub fn render_final_with_history(
    bindings: &Bindings,
    later_rounds: &[FeedbackPair],
) -> Result<String, PromptError> {
    render_spliced(
        PromptStage::DFinal,
        "\n\nBased on the above discussion",
        bindings,
        &feedback_history_lines(later_rounds),
    )
}

fn numbered_reflections(prior: &[String]) -> Vec<String> {
    prior
        .iter()
        .enumerate()
        .map(|(i, r)| format!("Reflection {}: {}", i + 1, r))
        .collect()
}

/// Reflection prompt for iteration `k`: the history of all prior
/// self-reflections is appended as numbered `Reflection k:` lines.
pub fn render_reflect_with_history(
    bindings: &Bindings,
    prior_reflections: &[String],
) -> Result<String, PromptError> {
    render_spliced(
        PromptStage::SrReflect,
        "\nReflection:",
        bindings,
        &numbered_reflections(prior_reflections),
    )
}

/// Final-decision prompt for iterated self-reflection: prior reflections are
/// numbered, the current one fills the unnumbered slot.
pub fn render_sr_final_with_history(
    bindings: &Bindings,
    prior_reflections: &[String],
) -> Result<String, PromptError> {
    render_spliced(
        PromptStage::SrFinal,
        "\nReflection: ",
        bindings,
        &numbered_reflections(prior_reflections),
    )
}

/// Sentinel bindings (`<COUNTRY>`, ...) for every known placeholder; used by
/// the golden tests and the prompt-dump CLI.
pub fn sentinel_bindings() -> Bindings {
    const NAMES: [&str; 17] = [
        "country",
        "rule_of_thumb",
        "story",
        "response",
        "reflection",
        "your_response",
        "other_response",
        "your_feedback",
        "other_feedback",
        "model1_response",
        "model2_response",
        "model1_feedback",
        "model2_feedback",
        "model1_decision",
        "model2_decision",
        "your_choice",
        "other_choice",
    ];
    NAMES
        .iter()
        .map(|n| (n.to_string(), format!("<{}>", n.to_uppercase())))
        .collect()
}

/// SHA-256 of each stage's template text, keyed by stage id. Recorded in run
/// manifests so a transcript can be tied to the exact prompt wording.
pub fn template_checksums() -> BTreeMap<String, String> {
    PromptStage::ALL
        .iter()
        .map(|s| {
            let digest = Sha256::digest(s.template().as_bytes());
            (s.id().to_string(), format!("{digest:x}"))
        })
        .collect()
}
