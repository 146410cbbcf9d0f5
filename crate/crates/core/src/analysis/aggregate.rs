use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::model::{ChunkAnalysis, ConfigError, OverallClassification, PhonemeRatio, Severity, StutterLabel};
use crate::numeric::weighted_mean;

/// Chunk-percentage cutoffs between severity levels. These are configurable
/// defaults, not clinical norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeverityThresholds {
    mild_max_pct: f64,
    moderate_max_pct: f64,
}

impl Default for SeverityThresholds {
    fn default() -> Self {
        Self { mild_max_pct: 10.0, moderate_max_pct: 25.0 }
    }
}

impl SeverityThresholds {
    pub fn new(mild_max_pct: f64, moderate_max_pct: f64) -> Result<Self, ConfigError> {
        if 0.0 < mild_max_pct && mild_max_pct < moderate_max_pct && moderate_max_pct < 100.0 {
            Ok(Self { mild_max_pct, moderate_max_pct })
        } else {
            Err(ConfigError::Thresholds { mild: mild_max_pct, moderate: moderate_max_pct })
        }
    }

    pub fn severity(&self, stuttering_pct: f64) -> Severity {
        if stuttering_pct <= self.mild_max_pct {
            Severity::Mild
        } else if stuttering_pct <= self.moderate_max_pct {
            Severity::Moderate
        } else {
            Severity::Severe
        }
    }
}

/// Ranks disfluent labels by chunk count, then summed confidence, then label order.
fn rank_disfluent(analyses: &[ChunkAnalysis]) -> Vec<StutterLabel> {
    let mut tally: BTreeMap<StutterLabel, (usize, f64)> = BTreeMap::new();
    for a in analyses.iter().filter(|a| a.top_label.is_disfluent()) {
        let entry = tally.entry(a.top_label).or_default();
        entry.0 += 1;
        entry.1 += a.confidence;
    }
    let mut ranked: Vec<_> = tally.into_iter().collect();
    ranked.sort_by(|(la, (ca, sa)), (lb, (cb, sb))| {
        cb.cmp(ca)
            .then_with(|| sb.partial_cmp(sa).unwrap_or(Ordering::Equal))
            .then_with(|| la.cmp(lb))
    });
    ranked.into_iter().map(|(l, _)| l).collect()
}

/// Summarises per-chunk results into one diagnosis. Problematic phonemes are
/// filled from whatever phoneme data the analyses carry.
pub fn aggregate(
    analyses: &[ChunkAnalysis],
    thresholds: &SeverityThresholds,
) -> Result<OverallClassification, AnalysisError> {
    if analyses.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let disfluent = analyses.iter().filter(|a| a.top_label.is_disfluent()).count();
    let stuttering_pct = 100.0 * disfluent as f64 / analyses.len() as f64;

    let ranked = rank_disfluent(analyses);
    let primary_type = ranked.first().copied().unwrap_or(StutterLabel::Fluent);
    let secondary_type = ranked.get(1).copied();

    let weighted_confidence = weighted_mean(analyses.iter().map(|a| (a.confidence, a.duration_s())))
        .unwrap_or_else(|| analyses.iter().map(|a| a.confidence).sum::<f64>() / analyses.len() as f64);

    Ok(OverallClassification {
        primary_type,
        secondary_type,
        weighted_confidence,
        severity: thresholds.severity(stuttering_pct),
        stuttering_pct,
        problematic_phonemes: phoneme_correlation(analyses),
    })
}

const MIN_RATIO: f64 = 2.0;
const MIN_TOTAL_COUNT: usize = 3;
const MAX_REPORTED: usize = 10;

/// Phonemes over-represented in disfluent chunks, by add-one smoothed ratio
/// `(disfluent + 1) / (fluent + 1)`.
pub fn phoneme_correlation(analyses: &[ChunkAnalysis]) -> Vec<PhonemeRatio> {
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for a in analyses {
        let Some(phonemes) = &a.phonemes else { continue };
        for p in phonemes {
            let entry = counts.entry(p.as_str()).or_default();
            if a.top_label.is_disfluent() {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
        }
    }
    let mut out: Vec<PhonemeRatio> = counts
        .into_iter()
        .filter(|(_, (d, f))| d + f >= MIN_TOTAL_COUNT)
        .map(|(p, (d, f))| PhonemeRatio { phoneme: p.to_owned(), ratio: (d + 1) as f64 / (f + 1) as f64 })
        .filter(|r| r.ratio >= MIN_RATIO)
        .collect();
    out.sort_by(|a, b| {
        b.ratio.partial_cmp(&a.ratio).unwrap_or(Ordering::Equal).then_with(|| a.phoneme.cmp(&b.phoneme))
    });
    out.truncate(MAX_REPORTED);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabelProbs;

    fn chunk(i: usize, label: StutterLabel, conf: f64) -> ChunkAnalysis {
        ChunkAnalysis::new(i, i as f64 * 2.0, i as f64 * 2.0 + 4.0, LabelProbs::peaked(label, conf))
    }

    fn with_phonemes(mut a: ChunkAnalysis, p: &[&str]) -> ChunkAnalysis {
        a.phonemes = Some(p.iter().map(|s| s.to_string()).collect());
        a
    }

    #[test]
    fn all_block() {
        let a: Vec<_> = (0..5).map(|i| chunk(i, StutterLabel::Block, 0.8)).collect();
        let c = aggregate(&a, &SeverityThresholds::default()).unwrap();
        assert_eq!(c.primary_type, StutterLabel::Block);
        assert_eq!(c.secondary_type, None);
        assert_eq!(c.stuttering_pct, 100.0);
        assert_eq!(c.severity, Severity::Severe);
        assert!((c.weighted_confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn all_fluent() {
        let a: Vec<_> = (0..3).map(|i| chunk(i, StutterLabel::Fluent, 0.9)).collect();
        let c = aggregate(&a, &SeverityThresholds::default()).unwrap();
        assert_eq!(c.primary_type, StutterLabel::Fluent);
        assert_eq!(c.secondary_type, None);
        assert_eq!(c.stuttering_pct, 0.0);
        assert_eq!(c.severity, Severity::Mild);
    }

    #[test]
    fn mixed_six() {
        let a = vec![
            chunk(0, StutterLabel::Block, 0.7),
            chunk(1, StutterLabel::Block, 0.7),
            chunk(2, StutterLabel::Prolongation, 0.9),
            chunk(3, StutterLabel::Fluent, 0.6),
            chunk(4, StutterLabel::Fluent, 0.6),
            chunk(5, StutterLabel::Fluent, 0.6),
        ];
        let c = aggregate(&a, &SeverityThresholds::default()).unwrap();
        assert_eq!(c.stuttering_pct, 50.0);
        assert_eq!(c.primary_type, StutterLabel::Block);
        assert_eq!(c.secondary_type, Some(StutterLabel::Prolongation));
        assert_eq!(c.severity, Severity::Severe);
        assert!((c.weighted_confidence - 4.1 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn count_ties_break_on_confidence_then_order() {
        let a = vec![chunk(0, StutterLabel::Interjection, 0.9), chunk(1, StutterLabel::Block, 0.5)];
        let c = aggregate(&a, &SeverityThresholds::default()).unwrap();
        assert_eq!(c.primary_type, StutterLabel::Interjection);
        let b = vec![chunk(0, StutterLabel::Interjection, 0.5), chunk(1, StutterLabel::Block, 0.5)];
        let c = aggregate(&b, &SeverityThresholds::default()).unwrap();
        assert_eq!((c.primary_type, c.secondary_type), (StutterLabel::Block, Some(StutterLabel::Interjection)));
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(aggregate(&[], &SeverityThresholds::default()), Err(AnalysisError::EmptyInput));
    }

    #[test]
    fn threshold_validation() {
        assert!(SeverityThresholds::new(25.0, 10.0).is_err());
        assert!(SeverityThresholds::new(0.0, 10.0).is_err());
        assert!(SeverityThresholds::new(10.0, 100.0).is_err());
        let t = SeverityThresholds::default();
        assert_eq!(t.severity(10.0), Severity::Mild);
        assert_eq!(t.severity(10.1), Severity::Moderate);
        assert_eq!(t.severity(25.0), Severity::Moderate);
        assert_eq!(t.severity(25.1), Severity::Severe);
    }

    #[test]
    fn correlation_ratio() {
        let a = vec![
            with_phonemes(chunk(0, StutterLabel::Block, 0.8), &["s", "s", "a"]),
            with_phonemes(chunk(1, StutterLabel::Prolongation, 0.8), &["s", "s"]),
            with_phonemes(chunk(2, StutterLabel::Fluent, 0.8), &["s", "a", "m"]),
        ];
        let r = phoneme_correlation(&a);
        // s: 4 disfluent, 1 fluent -> 5/2. a: total 2 -> excluded. m: total 1 -> excluded.
        assert_eq!(r, vec![PhonemeRatio { phoneme: "s".into(), ratio: 2.5 }]);
    }

    #[test]
    fn correlation_min_count_and_empty() {
        let a = vec![with_phonemes(chunk(0, StutterLabel::Block, 0.8), &["p", "p"])];
        assert!(phoneme_correlation(&a).is_empty());
        assert!(phoneme_correlation(&[chunk(0, StutterLabel::Block, 0.8)]).is_empty());
    }

    #[test]
    fn correlation_sorting_and_truncation() {
        let symbols: Vec<String> = (0..12).map(|i| format!("x{i:02}")).collect();
        let mut phon = Vec::new();
        for (i, s) in symbols.iter().enumerate() {
            for _ in 0..(3 + i % 3) {
                phon.push(s.as_str());
            }
        }
        let a = vec![with_phonemes(chunk(0, StutterLabel::Block, 0.8), &phon)];
        let r = phoneme_correlation(&a);
        assert_eq!(r.len(), 10);
        assert!(r.windows(2).all(|w| w[0].ratio > w[1].ratio
            || (w[0].ratio == w[1].ratio && w[0].phoneme < w[1].phoneme)));
        assert_eq!(r[0].phoneme, "x02");
    }
}
