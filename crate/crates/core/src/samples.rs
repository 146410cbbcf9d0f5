//! Reference therapy plans and a scripted chat backend built from them, for
//! tests and for running the service without a model endpoint.

use crate::llm::mock::{ScriptedChat, ScriptedReply};
use crate::model::AgentRole;
use crate::plan::TherapyPlan;

macro_rules! fixtures {
    ($($name:literal),* $(,)?) => {
        pub const FIXTURES: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../fixtures/plans/", $name, ".json")))),*
        ];
    };
}

fixtures!(
    "prolongation_1",
    "prolongation_2",
    "silent_block_1",
    "silent_block_2",
    "repetition_1",
    "repetition_2",
    "interjection_1",
    "interjection_2",
);

pub fn fixture_json(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, j)| *j)
}

/// Panics on an unknown name.
pub fn fixture_plan(name: &str) -> TherapyPlan {
    let json = fixture_json(name).unwrap_or_else(|| panic!("no fixture named {name}"));
    serde_json::from_str(json).expect("fixture parses")
}

pub fn fixture_plans() -> Vec<(&'static str, TherapyPlan)> {
    FIXTURES.iter().map(|(n, _)| (*n, fixture_plan(n))).collect()
}

pub const SAMPLE_CRITIQUE: &str = "\
- Clinical Soundness:
  - Observation: Techniques match the dominant disfluency type.
  - Strengths: Sequencing moves from awareness to transfer.
  - Concerns: Dosage is not stated for every strategy.
  - Recommendations: Add session frequency and home practice minutes to each step.
- Safety Concerns:
  - Observation: No strain-inducing drills.
  - Strengths: Anxiety ratings gate voluntary stuttering.
  - Concerns: None.
  - Recommendations: Keep the stop rule for anxiety above 7/10.
- Evidence Strength:
  - Observation: Strategies follow established fluency shaping and modification methods.
  - Strengths: Evidence bases are cited.
  - Concerns: Citations are generic.
  - Recommendations: Name the specific guideline for each strategy.
- Improvements Needed:
  - Observation: Progress monitoring is thin.
  - Strengths: Home practice is present.
  - Concerns: Carryover tasks appear late.
  - Recommendations: Add a weekly 0-9 ease rating and one transfer task per step.
- Structure and Clarity:
  - Observation: Steps are ordered and readable.
  - Strengths: Clear week ranges.
  - Concerns: Long instruction blocks.
  - Recommendations: Number practice items consistently.
- Explainability and Reasoning Transparency:
  - Observation: Every strategy carries a reasoning chain.
  - Strengths: Observations link to the analysis.
  - Concerns: Some expected outcomes are not measurable.
  - Recommendations: State a numeric target and time frame in each expected outcome.";

/// Plan replies are drawn from the fixtures with equal weight; the critic
/// always returns [`SAMPLE_CRITIQUE`].
pub fn offline_chat(seed: u64) -> ScriptedChat {
    let plans: Vec<(String, f64)> = FIXTURES.iter().map(|(_, j)| ((*j).to_owned(), 0.0)).collect();
    ScriptedChat::new(seed)
        .on_role(AgentRole::TherapyInitial, ScriptedReply::Weighted(plans.clone()))
        .on_role(AgentRole::Refine, ScriptedReply::Weighted(plans.clone()))
        .on_role(AgentRole::HumanRevision, ScriptedReply::Weighted(plans))
        .on_role(AgentRole::Critic, ScriptedReply::text(SAMPLE_CRITIQUE))
}
