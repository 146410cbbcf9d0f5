//! Therapy plan schema, validation, red-flag detection and critic review structure.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

/// Marker the generator is instructed to emit when the patient profile warrants escalation.
pub const URGENT_MARKER: &str = "URGENT CLINICAL NOTE";

/// Sentence the generator is asked to close the therapeutic rationale with.
pub const LIMITATION_MARKER: &str = "IMPORTANT LIMITATION";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClinicalReasoning {
    pub observation: String,
    pub clinical_rationale: String,
    pub expected_outcome: String,
    pub evidence_base: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Strategy {
    pub name: String,
    pub description: String,
    pub instructions: String,
    pub clinical_reasoning: ClinicalReasoning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanStep {
    pub name: String,
    pub week_range: String,
    pub objective: String,
    pub strategies: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Explanation {
    pub stuttering_type_definition: String,
    pub patient_characteristics: String,
    pub therapeutic_rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrimaryGoal {
    pub goal: String,
    pub target: String,
    pub baseline: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TherapyPlan {
    pub explanation: Explanation,
    pub primary_goal: PrimaryGoal,
    pub steps: Vec<PlanStep>,
    #[serde(default)]
    pub urgent_flag: bool,
}

impl TherapyPlan {
    /// Canonical compact JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Recomputes `urgent_flag` from the plan's rendered text.
    pub fn refresh_urgent_flag(&mut self) {
        self.urgent_flag = detect_red_flag(&self.to_json());
    }

    pub fn strategies(&self) -> impl Iterator<Item = &Strategy> {
        self.steps.iter().flat_map(|s| s.strategies.iter())
    }
}

/// `true` iff the exact, case-sensitive marker occurs in `text`.
pub fn detect_red_flag(text: &str) -> bool {
    text.contains(URGENT_MARKER)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    MissingField,
    EmptyField,
    NoSteps,
    DuplicateDomain,
}

impl ViolationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationReason::MissingField => "missing_field",
            ViolationReason::EmptyField => "empty_field",
            ViolationReason::NoSteps => "no_steps",
            ViolationReason::DuplicateDomain => "duplicate_domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub reason: ViolationReason,
}

impl Violation {
    fn new(path: impl Into<String>, reason: ViolationReason) -> Self {
        Self { path: path.into(), reason }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.reason.as_str(), self.path)
    }
}

/// Non-fatal finding; does not make a plan invalid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanWarning {
    pub path: String,
    pub message: String,
}

/// Checks a typed plan. Empty result iff every invariant holds.
pub fn validate_plan(plan: &TherapyPlan) -> Vec<Violation> {
    let value = serde_json::to_value(plan).expect("plan serializes");
    validate_plan_value(&value)
}

const EXPLANATION_FIELDS: [&str; 3] =
    ["stutteringTypeDefinition", "patientCharacteristics", "therapeuticRationale"];
const GOAL_FIELDS: [&str; 4] = ["goal", "target", "baseline", "rationale"];
const STEP_FIELDS: [&str; 3] = ["name", "weekRange", "objective"];
const STRATEGY_FIELDS: [&str; 3] = ["name", "description", "instructions"];
const REASONING_FIELDS: [&str; 4] =
    ["observation", "clinicalRationale", "expectedOutcome", "evidenceBase"];

/// Checks an untyped JSON document against the plan schema, reporting every
/// violation rather than stopping at the first.
pub fn validate_plan_value(value: &Value) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(root) = value.as_object() else {
        out.push(Violation::new("$", ViolationReason::MissingField));
        return out;
    };
    if let Some(obj) = object_field(root, "explanation", "explanation", &mut out) {
        text_fields(obj, "explanation", &EXPLANATION_FIELDS, &mut out);
    }
    if let Some(obj) = object_field(root, "primaryGoal", "primaryGoal", &mut out) {
        text_fields(obj, "primaryGoal", &GOAL_FIELDS, &mut out);
    }
    match root.get("steps") {
        None => out.push(Violation::new("steps", ViolationReason::MissingField)),
        Some(Value::Array(steps)) if steps.is_empty() => {
            out.push(Violation::new("steps", ViolationReason::NoSteps))
        }
        Some(Value::Array(steps)) => {
            for (i, step) in steps.iter().enumerate() {
                validate_step(step, &format!("steps[{i}]"), &mut out);
            }
        }
        Some(_) => out.push(Violation::new("steps", ViolationReason::MissingField)),
    }
    out
}

fn validate_step(step: &Value, path: &str, out: &mut Vec<Violation>) {
    let Some(obj) = step.as_object() else {
        out.push(Violation::new(path, ViolationReason::MissingField));
        return;
    };
    text_fields(obj, path, &STEP_FIELDS, out);
    let spath = format!("{path}.strategies");
    match obj.get("strategies") {
        None => out.push(Violation::new(spath, ViolationReason::MissingField)),
        Some(Value::Array(list)) if list.is_empty() => {
            out.push(Violation::new(spath, ViolationReason::EmptyField))
        }
        Some(Value::Array(list)) => {
            for (j, strategy) in list.iter().enumerate() {
                let p = format!("{spath}[{j}]");
                let Some(sobj) = strategy.as_object() else {
                    out.push(Violation::new(p, ViolationReason::MissingField));
                    continue;
                };
                text_fields(sobj, &p, &STRATEGY_FIELDS, out);
                let rpath = format!("{p}.clinicalReasoning");
                if let Some(robj) = object_field(sobj, "clinicalReasoning", &rpath, out) {
                    text_fields(robj, &rpath, &REASONING_FIELDS, out);
                }
            }
        }
        Some(_) => out.push(Violation::new(spath, ViolationReason::MissingField)),
    }
}

fn object_field<'a>(
    parent: &'a Map<String, Value>,
    key: &str,
    path: &str,
    out: &mut Vec<Violation>,
) -> Option<&'a Map<String, Value>> {
    match parent.get(key) {
        Some(Value::Object(obj)) => Some(obj),
        _ => {
            out.push(Violation::new(path, ViolationReason::MissingField));
            None
        }
    }
}

fn text_fields(obj: &Map<String, Value>, path: &str, fields: &[&str], out: &mut Vec<Violation>) {
    for field in fields {
        let p = format!("{path}.{field}");
        match obj.get(*field) {
            Some(Value::String(s)) if s.trim().is_empty() => {
                out.push(Violation::new(p, ViolationReason::EmptyField))
            }
            Some(Value::String(_)) => {}
            _ => out.push(Violation::new(p, ViolationReason::MissingField)),
        }
    }
}

/// Soft checks that never invalidate a plan.
pub fn plan_warnings(plan: &TherapyPlan) -> Vec<PlanWarning> {
    let mut out = Vec::new();
    if !plan.explanation.therapeutic_rationale.contains(LIMITATION_MARKER) {
        out.push(PlanWarning {
            path: "explanation.therapeuticRationale".into(),
            message: format!("rationale does not carry the \"{LIMITATION_MARKER}\" notice"),
        });
    }
    out
}

/// JSON Schema of the plan document, embedded in generation prompts.
pub fn plan_schema() -> Value {
    fn text(desc: &str) -> Value {
        json!({ "type": "string", "minLength": 1, "description": desc })
    }
    let reasoning = json!({
        "type": "object",
        "required": REASONING_FIELDS,
        "properties": {
            "observation": text("Specific pattern in the patient's stuttering analysis that motivates this strategy"),
            "clinicalRationale": text("Why this strategy is the clinically appropriate response"),
            "expectedOutcome": text("Measurable, time-bound improvement expected"),
            "evidenceBase": text("Clinical guideline or literature supporting the strategy")
        }
    });
    let strategy = json!({
        "type": "object",
        "required": ["name", "description", "instructions", "clinicalReasoning"],
        "properties": {
            "name": text("Technique name"),
            "description": text("One or two sentence summary of the technique"),
            "instructions": text("Approach, purpose, practice items, home practice and troubleshooting"),
            "clinicalReasoning": reasoning
        }
    });
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "TherapyPlan",
        "type": "object",
        "required": ["explanation", "primaryGoal", "steps"],
        "properties": {
            "explanation": {
                "type": "object",
                "required": EXPLANATION_FIELDS,
                "properties": {
                    "stutteringTypeDefinition": text("Assessment of the stuttering profile"),
                    "patientCharacteristics": text("Patient-specific observations"),
                    "therapeuticRationale": text("Chosen approach and why")
                }
            },
            "primaryGoal": {
                "type": "object",
                "required": GOAL_FIELDS,
                "properties": {
                    "goal": text("Functional goal"),
                    "target": text("Measurable target"),
                    "baseline": text("Current baseline"),
                    "rationale": text("Psychoeducation supporting the goal")
                }
            },
            "steps": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["name", "weekRange", "objective", "strategies"],
                    "properties": {
                        "name": text("Step title"),
                        "weekRange": text("Weeks covered, e.g. Weeks 1-2"),
                        "objective": text("Objective for this step"),
                        "strategies": { "type": "array", "minItems": 1, "items": strategy }
                    }
                }
            }
        }
    })
}

/// Schema text substituted into prompts.
pub fn plan_schema_string() -> String {
    serde_json::to_string_pretty(&plan_schema()).expect("schema serializes")
}

/// The six review domains the critic is asked to cover, in prompt order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriticDomain {
    ClinicalSoundness,
    SafetyConcerns,
    EvidenceStrength,
    ImprovementsNeeded,
    StructureAndClarity,
    ExplainabilityTransparency,
}

impl CriticDomain {
    pub const ALL: [CriticDomain; 6] = [
        CriticDomain::ClinicalSoundness,
        CriticDomain::SafetyConcerns,
        CriticDomain::EvidenceStrength,
        CriticDomain::ImprovementsNeeded,
        CriticDomain::StructureAndClarity,
        CriticDomain::ExplainabilityTransparency,
    ];

    /// Heading used in the critic prompt and expected in its output.
    pub fn heading(self) -> &'static str {
        match self {
            CriticDomain::ClinicalSoundness => "Clinical Soundness",
            CriticDomain::SafetyConcerns => "Safety Concerns",
            CriticDomain::EvidenceStrength => "Evidence Strength",
            CriticDomain::ImprovementsNeeded => "Improvements Needed",
            CriticDomain::StructureAndClarity => "Structure and Clarity",
            CriticDomain::ExplainabilityTransparency => "Explainability and Reasoning Transparency",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainAssessment {
    pub observation: String,
    pub strengths: String,
    pub concerns: String,
    pub recommendations: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainEntry {
    pub domain: CriticDomain,
    #[serde(flatten)]
    pub assessment: DomainAssessment,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticReview {
    pub domains: Vec<DomainEntry>,
}

impl CriticReview {
    /// Every domain missing or repeated.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for domain in CriticDomain::ALL {
            let n = self.domains.iter().filter(|e| e.domain == domain).count();
            let path = format!("domains.{domain:?}");
            match n {
                0 => out.push(Violation::new(path, ViolationReason::MissingField)),
                1 => {}
                _ => out.push(Violation::new(path, ViolationReason::DuplicateDomain)),
            }
        }
        out
    }

    /// Best-effort extraction from the bullet format the critic is prompted
    /// to produce. Unrecognised lines are ignored.
    pub fn parse_text(text: &str) -> Self {
        let mut domains: Vec<DomainEntry> = Vec::new();
        for raw in text.lines() {
            let line = raw.trim().trim_start_matches(['-', '*', '•', '#', ' ']).trim();
            let line = line.trim_matches('*').trim();
            if let Some(domain) = CriticDomain::ALL.into_iter().find(|d| {
                line.strip_prefix(d.heading())
                    .is_some_and(|rest| rest.trim().is_empty() || rest.trim_start().starts_with(':'))
            }) {
                domains.push(DomainEntry { domain, assessment: DomainAssessment::default() });
                continue;
            }
            let Some(current) = domains.last_mut() else { continue };
            let Some((key, value)) = line.split_once(':') else { continue };
            let value = value.trim().to_owned();
            let slot = match key.trim().trim_matches('*').to_ascii_lowercase().as_str() {
                "observation" => &mut current.assessment.observation,
                "strengths" => &mut current.assessment.strengths,
                "concerns" => &mut current.assessment.concerns,
                "recommendations" => &mut current.assessment.recommendations,
                _ => continue,
            };
            *slot = value;
        }
        Self { domains }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reasoning() -> ClinicalReasoning {
        ClinicalReasoning {
            observation: "o".into(),
            clinical_rationale: "r".into(),
            expected_outcome: "e".into(),
            evidence_base: "b".into(),
        }
    }

    fn plan() -> TherapyPlan {
        TherapyPlan {
            explanation: Explanation {
                stuttering_type_definition: "d".into(),
                patient_characteristics: "c".into(),
                therapeutic_rationale: "t".into(),
            },
            primary_goal: PrimaryGoal {
                goal: "g".into(),
                target: "t".into(),
                baseline: "b".into(),
                rationale: "r".into(),
            },
            steps: vec![PlanStep {
                name: "s".into(),
                week_range: "Weeks 1-2".into(),
                objective: "o".into(),
                strategies: vec![Strategy {
                    name: "n".into(),
                    description: "d".into(),
                    instructions: "i".into(),
                    clinical_reasoning: reasoning(),
                }],
            }],
            urgent_flag: false,
        }
    }

    #[test]
    fn minimal_plan_is_valid() {
        assert!(validate_plan(&plan()).is_empty());
    }

    #[test]
    fn empty_steps_reports_no_steps() {
        let mut p = plan();
        p.steps.clear();
        assert_eq!(validate_plan(&p), vec![Violation::new("steps", ViolationReason::NoSteps)]);
    }

    #[test]
    fn whitespace_is_empty() {
        let mut p = plan();
        p.steps[0].strategies[0].clinical_reasoning.evidence_base = "  \n".into();
        assert_eq!(
            validate_plan(&p),
            vec![Violation::new(
                "steps[0].strategies[0].clinicalReasoning.evidenceBase",
                ViolationReason::EmptyField
            )]
        );
    }

    #[test]
    fn violations_are_exhaustive() {
        let mut p = plan();
        p.primary_goal.goal.clear();
        p.steps[0].strategies[0].instructions.clear();
        let dup = p.steps[0].strategies[0].clone();
        p.steps[0].strategies.push(dup);
        assert_eq!(validate_plan(&p).len(), 3);
    }

    #[test]
    fn missing_objects_are_reported_once() {
        let mut v = serde_json::to_value(plan()).unwrap();
        v.as_object_mut().unwrap().remove("primaryGoal");
        assert_eq!(
            validate_plan_value(&v),
            vec![Violation::new("primaryGoal", ViolationReason::MissingField)]
        );
        assert_eq!(validate_plan_value(&json!("x")).len(), 1);
    }

    #[test]
    fn red_flag_is_exact_and_case_sensitive() {
        assert!(!detect_red_flag(""));
        assert!(detect_red_flag(
            "URGENT CLINICAL NOTE: Patient profile indicates serious concerns requiring immediate human assessment."
        ));
        assert!(!detect_red_flag("urgent clinical note"));
        assert!(!detect_red_flag("URGENT  CLINICAL NOTE"));
    }

    #[test]
    fn urgent_flag_tracks_text() {
        let mut p = plan();
        p.refresh_urgent_flag();
        assert!(!p.urgent_flag);
        p.explanation.patient_characteristics.push_str(" URGENT CLINICAL NOTE: see clinician.");
        p.refresh_urgent_flag();
        assert!(p.urgent_flag);
        p.refresh_urgent_flag();
        assert!(p.urgent_flag);
    }

    #[test]
    fn limitation_notice_is_only_a_warning() {
        let p = plan();
        assert!(validate_plan(&p).is_empty());
        assert_eq!(plan_warnings(&p).len(), 1);
    }

    #[test]
    fn schema_lists_reasoning_fields() {
        let s = plan_schema_string();
        for f in REASONING_FIELDS {
            assert!(s.contains(f));
        }
    }

    #[test]
    fn critic_review_parsing_and_validation() {
        let mut text = String::new();
        for d in CriticDomain::ALL {
            text.push_str(&format!(
                "- {}:\n  - Observation: fine\n  - Strengths: s\n  - Concerns: c\n  - Recommendations: r\n",
                d.heading()
            ));
        }
        let review = CriticReview::parse_text(&text);
        assert_eq!(review.domains.len(), 6);
        assert!(review.validate().is_empty());
        assert_eq!(review.domains[2].assessment.concerns, "c");

        let mut dup = review.clone();
        dup.domains.push(dup.domains[0].clone());
        assert_eq!(
            dup.validate(),
            vec![Violation::new("domains.ClinicalSoundness", ViolationReason::DuplicateDomain)]
        );
        dup.domains.retain(|e| e.domain != CriticDomain::SafetyConcerns);
        assert_eq!(dup.validate().len(), 2);
    }
}
