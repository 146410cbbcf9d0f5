//! Prompt rendering for the therapy, critic, refinement and revision agents.
//!
//! Template bodies live in `templates/*.txt` and are compiled into the crate.
//! Tokens are `{identifier}`; see [`Slot`] for how optional data is handled.

mod template;

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{ChunkAnalysis, OverallClassification, PatientProfile, PhonemeRatio, StutterLabel};
use crate::plan::{plan_schema_string, TherapyPlan};

pub use template::{find_placeholder, Slot, Template};

/// All shipped templates, keyed by asset name.
pub mod templates {
    pub use super::template::{
        ALL, CRITIC_HUMAN, CRITIC_SYSTEM, HUMAN_REVISION, REFINE_HUMAN, REFINE_SYSTEM,
        THERAPY_HUMAN, THERAPY_SYSTEM,
    };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("missing prompt context: {0}")]
    MissingContext(String),
}

/// A rendered system/human message pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPair {
    pub system: String,
    pub human: String,
}

const LOCALES: [(&str, &str); 5] = [
    ("en-US", "English (United States)"),
    ("en-GB", "English (United Kingdom)"),
    ("fr-FR", "French (France)"),
    ("pt-PT", "Portuguese (Portugal)"),
    ("de-DE", "German (Germany)"),
];

/// Human-readable language for a locale tag; unknown tags are returned unchanged.
pub fn locale_description(tag: &str) -> String {
    LOCALES
        .iter()
        .find(|(t, _)| *t == tag)
        .map_or_else(|| tag.to_owned(), |(_, d)| (*d).to_owned())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub patient: PatientProfile,
    pub classification: OverallClassification,
    pub chunk_details: Option<Vec<ChunkAnalysis>>,
    pub phoneme_correlation: Option<Vec<PhonemeRatio>>,
    pub locale_desc: String,
    /// Empty means unset.
    pub schema_str: String,
}

impl PromptContext {
    pub fn new(patient: PatientProfile, classification: OverallClassification) -> Self {
        let locale_desc = locale_description(&patient.locale);
        Self {
            patient,
            classification,
            chunk_details: None,
            phoneme_correlation: None,
            locale_desc,
            schema_str: plan_schema_string(),
        }
    }

    pub fn with_chunks(mut self, chunks: Vec<ChunkAnalysis>) -> Self {
        self.chunk_details = Some(chunks);
        self
    }

    pub fn with_correlation(mut self, ranked: Vec<PhonemeRatio>) -> Self {
        self.phoneme_correlation = Some(ranked);
        self
    }

    fn chunks(&self) -> &[ChunkAnalysis] {
        self.chunk_details.as_deref().unwrap_or_default()
    }

    fn transcription(&self) -> String {
        let parts: Vec<&str> = self
            .chunks()
            .iter()
            .filter_map(|c| c.transcript.as_deref())
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        if parts.is_empty() { "N/A".into() } else { parts.join(" ") }
    }

    fn phonemes(&self) -> String {
        let parts: Vec<String> = self
            .chunks()
            .iter()
            .filter_map(|c| c.phonemes.as_ref())
            .filter(|p| !p.is_empty())
            .map(|p| p.join(" "))
            .collect();
        if parts.is_empty() { "N/A".into() } else { parts.join(" | ") }
    }

    fn characteristics(&self) -> String {
        let p = &self.patient;
        let fields = [
            ("Demographics", &p.demographics),
            ("Clinical history", &p.clinical_history),
            ("Therapy background", &p.therapy_background),
            ("Goals", &p.goals),
        ];
        let parts: Vec<String> = fields
            .iter()
            .filter(|(_, v)| !v.trim().is_empty())
            .map(|(k, v)| format!("{k}: {}", v.trim()))
            .collect();
        if parts.is_empty() { "Not specified".into() } else { parts.join("; ") }
    }

    fn distribution(&self) -> Option<String> {
        let mut counts = [0usize; 6];
        for c in self.chunks() {
            counts[c.top_label.index()] += 1;
        }
        let parts: Vec<String> = StutterLabel::ALL
            .iter()
            .filter(|l| counts[l.index()] > 0)
            .map(|l| format!("{}: {}", l.display_name(), counts[l.index()]))
            .collect();
        (!parts.is_empty()).then(|| parts.join(", "))
    }

    fn acoustic_profile(&self, sep: &str) -> Option<String> {
        let distribution = self.distribution()?;
        let c = &self.classification;
        let mut lines = vec![format!("Primary type: {}", c.primary_type.display_name())];
        if let Some(s) = c.secondary_type {
            lines.push(format!("Secondary type: {}", s.display_name()));
        }
        lines.push(format!("Severity: {}", c.severity.as_str()));
        lines.push(format!("Stuttering percentage: {}%", format_pct(c.stuttering_pct)));
        lines.push(format!("Weighted confidence: {:.2}", c.weighted_confidence));
        lines.push(format!("Chunk distribution: {distribution}"));
        Some(lines.join(sep))
    }

    fn per_chunk(&self) -> Option<String> {
        let mut out = String::new();
        for c in self.chunks() {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = write!(
                out,
                "- Chunk {} [{:.2}s-{:.2}s]: {} (confidence {:.2})",
                c.chunk_index,
                c.start_s,
                c.end_s,
                c.top_label.display_name(),
                c.confidence
            );
            if let Some(t) = c.transcript.as_deref().filter(|t| !t.trim().is_empty()) {
                let _ = write!(out, "; transcript: \"{}\"", t.trim());
            }
            if let Some(p) = c.phonemes.as_ref().filter(|p| !p.is_empty()) {
                let _ = write!(out, "; phonemes: {}", p.join(" "));
            }
        }
        (!out.is_empty()).then_some(out)
    }

    fn correlation(&self) -> Option<String> {
        let ranked = self.phoneme_correlation.as_ref()?;
        let parts: Vec<String> =
            ranked.iter().map(|r| format!("/{}/ {:.2}x", r.phoneme, r.ratio)).collect();
        (!parts.is_empty()).then(|| {
            format!("over-represented in disfluent chunks: {}", parts.join(", "))
        })
    }

    fn patient_info(&self) -> String {
        format!(
            "Type: {}; Characteristics: {}; Locale: {}",
            self.classification.primary_type.display_name(),
            self.characteristics(),
            self.patient.locale
        )
    }
}

/// Integer when integral, otherwise one decimal.
pub fn format_pct(pct: f64) -> String {
    if pct.fract() == 0.0 { format!("{pct:.0}") } else { format!("{pct:.1}") }
}

fn req(v: impl Into<String>) -> Slot {
    Slot::Required(v.into())
}

pub fn render_therapy_prompt(ctx: &PromptContext) -> Result<PromptPair, PromptError> {
    let system = templates::THERAPY_SYSTEM.render(&[
        ("language_desc", req(ctx.locale_desc.clone())),
        ("schema_str", req(ctx.schema_str.clone())),
    ])?;
    let human = templates::THERAPY_HUMAN.render(&[
        ("stutteringType", req(ctx.classification.primary_type.display_name())),
        ("transcription", req(ctx.transcription())),
        ("phonemes", req(ctx.phonemes())),
        ("characteristics", req(ctx.characteristics())),
        ("locale", req(ctx.patient.locale.clone())),
        ("acoustic_profile", Slot::Optional(ctx.acoustic_profile("\n"))),
        ("per_chunk_analysis", Slot::Optional(ctx.per_chunk())),
        ("phoneme_correlation", Slot::Optional(ctx.correlation())),
    ])?;
    Ok(PromptPair { system, human })
}

pub fn render_critic_prompt(plan: &TherapyPlan, ctx: &PromptContext) -> Result<PromptPair, PromptError> {
    let system = templates::CRITIC_SYSTEM.render(&[("language_desc", req(ctx.locale_desc.clone()))])?;
    let summary = match &ctx.phoneme_correlation {
        None => "N/A".to_owned(),
        Some(r) if r.is_empty() => "no over-represented phonemes".to_owned(),
        Some(_) => ctx.correlation().expect("non-empty"),
    };
    let human = templates::CRITIC_HUMAN.render(&[
        ("therapy_plan_json", req(plan.to_json())),
        ("primary_type", req(ctx.classification.primary_type.display_name())),
        ("type_distribution", req(ctx.distribution().unwrap_or_else(|| "N/A".into()))),
        ("stuttering_percentage", req(format_pct(ctx.classification.stuttering_pct))),
        ("phoneme_correlation_summary", req(summary)),
    ])?;
    Ok(PromptPair { system, human })
}

pub fn render_refinement_prompt(
    plan: &TherapyPlan,
    critic_feedback: &str,
    ctx: &PromptContext,
) -> Result<PromptPair, PromptError> {
    let system = templates::REFINE_SYSTEM.render(&[("language_desc", req(ctx.locale_desc.clone()))])?;
    let human = templates::REFINE_HUMAN.render(&[
        ("patient_info", req(ctx.patient_info())),
        ("acoustic_profile", Slot::Optional(ctx.acoustic_profile("; "))),
        ("phoneme_correlation", Slot::Optional(ctx.correlation())),
        ("previous_plan_json", req(plan.to_json())),
        ("critic_feedback", req(critic_feedback.trim())),
    ])?;
    Ok(PromptPair { system, human })
}

pub fn render_human_revision_prompt(
    plan: &TherapyPlan,
    clinician_feedback: &str,
    ctx: &PromptContext,
) -> Result<String, PromptError> {
    templates::HUMAN_REVISION.render(&[
        ("human_feedback", req(clinician_feedback.trim())),
        ("current_plan_json", req(plan.to_json())),
        ("primary_type", req(ctx.classification.primary_type.display_name())),
        ("phonemes", req(ctx.phonemes())),
    ])
}
