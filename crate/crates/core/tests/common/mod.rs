//! Shared helpers for integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use moot::prompts::{
    render, render_choice_prompt, render_feedback_with_history, sentinel_bindings, OptionOrder,
    PromptStage,
};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn workspace_data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// The seventeen rendered prompt forms pinned by golden files: all fifteen
/// stages under sentinel bindings, the choice prompt in the swapped option
/// order, and the feedback prompt carrying one prior round of history.
pub fn golden_artifacts() -> Vec<(String, String)> {
    let bindings = sentinel_bindings();
    let mut out = Vec::new();
    for stage in PromptStage::ALL {
        let rendered = if stage == PromptStage::SdChoice {
            render_choice_prompt(&bindings, OptionOrder::ReflectFirst).unwrap()
        } else {
            render(stage, &bindings).unwrap()
        };
        out.push((stage.id().to_string(), rendered));
    }
    out.push((
        "sd_choice_debate_first".to_string(),
        render_choice_prompt(&bindings, OptionOrder::DebateFirst).unwrap(),
    ));
    let history = vec![(
        "<YOUR_FEEDBACK_R1>".to_string(),
        "<OTHER_FEEDBACK_R1>".to_string(),
    )];
    out.push((
        "d_feedback_round2".to_string(),
        render_feedback_with_history(&bindings, &history).unwrap(),
    ));
    out
}
