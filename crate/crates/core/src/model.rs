//! Shared domain types.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::numeric::Scalar;

/// Disfluency classes produced by the classifier. Declaration order is the
/// tie-break order used everywhere a deterministic choice between labels is needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StutterLabel {
    Prolongation,
    Block,
    SoundRepetition,
    WordRepetition,
    Interjection,
    Fluent,
}

impl StutterLabel {
    pub const ALL: [StutterLabel; 6] = [
        StutterLabel::Prolongation,
        StutterLabel::Block,
        StutterLabel::SoundRepetition,
        StutterLabel::WordRepetition,
        StutterLabel::Interjection,
        StutterLabel::Fluent,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_disfluent(self) -> bool {
        self != StutterLabel::Fluent
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StutterLabel::Prolongation => "Prolongation",
            StutterLabel::Block => "Block",
            StutterLabel::SoundRepetition => "SoundRepetition",
            StutterLabel::WordRepetition => "WordRepetition",
            StutterLabel::Interjection => "Interjection",
            StutterLabel::Fluent => "Fluent",
        }
    }

    /// Human-readable form used in prompts and exports.
    pub fn display_name(self) -> &'static str {
        match self {
            StutterLabel::Prolongation => "Prolongation",
            StutterLabel::Block => "Block",
            StutterLabel::SoundRepetition => "Sound Repetition",
            StutterLabel::WordRepetition => "Word Repetition",
            StutterLabel::Interjection => "Interjection",
            StutterLabel::Fluent => "Fluent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.as_str() == s)
    }
}

impl fmt::Display for StutterLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tolerance on the sum of a label distribution.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("missing label {0}")]
    MissingLabel(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("probability for {label} is not in [0, 1]: {value}")]
    OutOfRange { label: StutterLabel, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    BadSum(f64),
}

/// Probability for each of the six labels. Always complete; serialized as a
/// label → probability map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelProbs([f64; 6]);

impl LabelProbs {
    pub fn new(probs: [f64; 6]) -> Result<Self, DistributionError> {
        for (label, &p) in StutterLabel::ALL.iter().zip(probs.iter()) {
            if !p.is_finite() || !(0.0..=1.0 + DISTRIBUTION_TOLERANCE).contains(&p) {
                return Err(DistributionError::OutOfRange { label: *label, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(DistributionError::BadSum(sum));
        }
        Ok(Self(probs))
    }

    /// All mass on one label.
    pub fn one_hot(label: StutterLabel) -> Self {
        let mut p = [0.0; 6];
        p[label.index()] = 1.0;
        Self(p)
    }

    /// Builds a distribution with `confidence` on `label` and the remainder
    /// spread evenly over the other five labels. Requires `confidence >= 1/6`
    /// for `label` to remain the arg-max.
    pub fn peaked(label: StutterLabel, confidence: f64) -> Self {
        let rest = (1.0 - confidence) / 5.0;
        let mut p = [rest; 6];
        p[label.index()] = confidence;
        Self(p)
    }

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, DistributionError> {
        if let Some(unknown) = map.keys().find(|k| StutterLabel::parse(k).is_none()) {
            return Err(DistributionError::UnknownLabel(unknown.clone()));
        }
        let mut probs = [0.0; 6];
        for label in StutterLabel::ALL {
            probs[label.index()] = *map
                .get(label.as_str())
                .ok_or_else(|| DistributionError::MissingLabel(label.as_str().to_owned()))?;
        }
        Self::new(probs)
    }

    pub fn get(&self, label: StutterLabel) -> f64 {
        self.0[label.index()]
    }

    pub fn as_array(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (StutterLabel, f64)> + '_ {
        StutterLabel::ALL.into_iter().zip(self.0.iter().copied())
    }

    /// Arg-max label and its probability; ties go to the earlier label.
    pub fn top(&self) -> (StutterLabel, f64) {
        let mut best = (StutterLabel::ALL[0], self.0[0]);
        for (label, p) in self.iter().skip(1) {
            if p > best.1 {
                best = (label, p);
            }
        }
        best
    }
}

impl Serialize for LabelProbs {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, f64> = self.iter().map(|(l, p)| (l.as_str(), p)).collect();
        map.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LabelProbs {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        Self::from_map(&map).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("segment duration must be one of 3, 4 or 5 seconds, got {0}")]
    Duration(u32),
    #[error("overlap must be one of 0, 25, 50 or 75 percent, got {0}")]
    Overlap(u32),
    #[error("refinement rounds must be at most {max}, got {got}")]
    Rounds { got: u32, max: u32 },
    #[error("temperature must be within [0, 2], got {0}")]
    Temperature(f64),
    #[error("unsupported locale {0}")]
    Locale(String),
    #[error("invalid severity thresholds: need 0 < mild ({mild}) < moderate ({moderate}) < 100")]
    Thresholds { mild: f64, moderate: f64 },
    #[error("max modifications must be at least 0")]
    Modifications,
}

pub const ALLOWED_DURATIONS_S: [u32; 3] = [3, 4, 5];
pub const ALLOWED_OVERLAPS_PCT: [u32; 4] = [0, 25, 50, 75];

/// Sliding-window parameters. Only the selectable combinations exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSegmentationConfig", into = "RawSegmentationConfig")]
pub struct SegmentationConfig {
    duration_s: u32,
    overlap_pct: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawSegmentationConfig {
    #[serde(default = "default_duration")]
    duration_s: u32,
    #[serde(default = "default_overlap")]
    overlap_pct: u32,
}

fn default_duration() -> u32 {
    4
}

fn default_overlap() -> u32 {
    50
}

impl TryFrom<RawSegmentationConfig> for SegmentationConfig {
    type Error = ConfigError;

    fn try_from(raw: RawSegmentationConfig) -> Result<Self, Self::Error> {
        Self::new(raw.duration_s, raw.overlap_pct)
    }
}

impl From<SegmentationConfig> for RawSegmentationConfig {
    fn from(c: SegmentationConfig) -> Self {
        Self { duration_s: c.duration_s, overlap_pct: c.overlap_pct }
    }
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { duration_s: 4, overlap_pct: 50 }
    }
}

impl SegmentationConfig {
    pub fn new(duration_s: u32, overlap_pct: u32) -> Result<Self, ConfigError> {
        if !ALLOWED_DURATIONS_S.contains(&duration_s) {
            return Err(ConfigError::Duration(duration_s));
        }
        if !ALLOWED_OVERLAPS_PCT.contains(&overlap_pct) {
            return Err(ConfigError::Overlap(overlap_pct));
        }
        Ok(Self { duration_s, overlap_pct })
    }

    /// Every selectable combination, duration-major.
    pub fn all() -> impl Iterator<Item = SegmentationConfig> {
        ALLOWED_DURATIONS_S.into_iter().flat_map(|d| {
            ALLOWED_OVERLAPS_PCT
                .into_iter()
                .map(move |k| SegmentationConfig { duration_s: d, overlap_pct: k })
        })
    }

    pub fn duration_s(&self) -> u32 {
        self.duration_s
    }

    pub fn overlap_pct(&self) -> u32 {
        self.overlap_pct
    }

    pub fn duration<T: Scalar>(&self) -> T {
        T::from_int(self.duration_s as i64)
    }

    /// `duration × (1 − k/100)`; strictly positive for every allowed config.
    pub fn hop<T: Scalar>(&self) -> T {
        self.duration::<T>().scale(100 - self.overlap_pct as i64, 100)
    }
}

/// Mono 16-bit PCM audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioClip {
    samples: Vec<i16>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// # Panics
    /// If `sample_rate_hz` is zero.
    pub fn new(samples: Vec<i16>, sample_rate_hz: u32) -> Self {
        assert!(sample_rate_hz > 0, "sample rate must be positive");
        Self { samples, sample_rate_hz }
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn channel_count(&self) -> u16 {
        1
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One analysis window cut from a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub sample_rate_hz: u32,
    pub samples: Vec<i16>,
    /// Number of leading samples that came from the source; the rest is padding.
    pub valid_samples: usize,
}

impl Chunk {
    pub fn is_padded(&self) -> bool {
        self.valid_samples < self.samples.len()
    }

    pub fn valid(&self) -> &[i16] {
        &self.samples[..self.valid_samples]
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Little-endian PCM bytes of the whole window.
    pub fn pcm_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    pub fn info(&self) -> ChunkInfo {
        ChunkInfo {
            index: self.index,
            start_s: self.start_s,
            end_s: self.end_s,
            padded: self.is_padded(),
        }
    }
}

/// Chunk metadata without samples, as stored with a session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChunkInfo {
    pub index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub padded: bool,
}

/// Classifier output for one window, optionally enriched with ASR text and phonemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChunkAnalysis {
    pub chunk_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub label_probs: LabelProbs,
    pub top_label: StutterLabel,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phonemes: Option<Vec<String>>,
}

impl ChunkAnalysis {
    pub fn new(chunk_index: usize, start_s: f64, end_s: f64, label_probs: LabelProbs) -> Self {
        let (top_label, confidence) = label_probs.top();
        Self {
            chunk_index,
            start_s,
            end_s,
            label_probs,
            top_label,
            confidence,
            transcript: None,
            phonemes: None,
        }
    }

    pub fn for_chunk(chunk: &Chunk, label_probs: LabelProbs) -> Self {
        Self::new(chunk.index, chunk.start_s, chunk.end_s, label_probs)
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PhonemeRatio {
    pub phoneme: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OverallClassification {
    pub primary_type: StutterLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_type: Option<StutterLabel>,
    pub weighted_confidence: f64,
    pub severity: Severity,
    pub stuttering_pct: f64,
    #[serde(default)]
    pub problematic_phonemes: Vec<PhonemeRatio>,
}

/// Locales accepted unless a deployment configures its own list.
pub const DEFAULT_LOCALES: [&str; 5] = ["en-US", "en-GB", "fr-FR", "pt-PT", "de-DE"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PatientProfile {
    #[serde(default)]
    pub demographics: String,
    #[serde(default)]
    pub clinical_history: String,
    #[serde(default)]
    pub therapy_background: String,
    #[serde(default)]
    pub goals: String,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en-US".to_owned()
}

impl Default for PatientProfile {
    fn default() -> Self {
        Self {
            demographics: String::new(),
            clinical_history: String::new(),
            therapy_background: String::new(),
            goals: String::new(),
            locale: default_locale(),
        }
    }
}

impl PatientProfile {
    pub fn validate<S: AsRef<str>>(&self, allowed_locales: &[S]) -> Result<(), ConfigError> {
        if allowed_locales.iter().any(|l| l.as_ref() == self.locale) {
            Ok(())
        } else {
            Err(ConfigError::Locale(self.locale.clone()))
        }
    }
}

/// Which agent produced a generation record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentRole {
    TherapyInitial,
    Critic,
    Refine,
    HumanRevision,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::TherapyInitial => "therapy_initial",
            AgentRole::Critic => "critic",
            AgentRole::Refine => "refine",
            AgentRole::HumanRevision => "human_revision",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Audit record of a single completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationRecord {
    /// Position in the session's history; consecutive records differ by one.
    pub round: u32,
    /// Refinement round the record belongs to (0 for the initial plan).
    pub loop_round: u32,
    pub role: AgentRole,
    pub prompt_system: String,
    pub prompt_human: String,
    pub raw_output: String,
    pub parsed_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
