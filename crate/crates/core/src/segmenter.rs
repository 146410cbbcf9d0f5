//! Sliding-window segmentation of a mono clip into fixed-length chunks.
//!
//! Windows start at `0, hop, 2·hop, …` while they fit inside the clip. When the
//! last regular window stops short of the clip end, one extra window anchored
//! at the end is appended so the tail is still analysed. Clips shorter than one
//! window yield a single zero-padded window.

use thiserror::Error;

use crate::model::{AudioClip, Chunk, SegmentationConfig};
use crate::numeric::Scalar;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("audio clip contains no samples")]
    EmptyAudio,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window<T> {
    pub start: T,
    pub end: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan<T> {
    pub windows: Vec<Window<T>>,
    pub hop: T,
    /// The clip is shorter than one window; the single window is padded.
    pub padded: bool,
}

impl<T: Scalar> WindowPlan<T> {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn bounds(&self) -> Vec<(T, T)> {
        self.windows.iter().map(|w| (w.start, w.end)).collect()
    }

    /// Number of windows containing `t` (half-open windows).
    pub fn coverage_at(&self, t: T) -> usize {
        self.windows.iter().filter(|w| w.start <= t && t < w.end).count()
    }
}

/// Plans the analysis windows for a clip of `clip_duration` seconds.
pub fn plan_windows<T: Scalar>(clip_duration: T, config: &SegmentationConfig) -> WindowPlan<T> {
    let duration: T = config.duration();
    let hop: T = config.hop();
    if clip_duration < duration {
        return WindowPlan {
            windows: vec![Window { start: T::zero(), end: duration }],
            hop,
            padded: true,
        };
    }

    let mut windows = Vec::new();
    let mut i: i64 = 0;
    loop {
        let start = hop * T::from_int(i);
        let end = start + duration;
        if end > clip_duration {
            break;
        }
        windows.push(Window { start, end });
        i += 1;
    }
    if windows.last().is_some_and(|w| w.end < clip_duration) {
        windows.push(Window { start: clip_duration - duration, end: clip_duration });
    }
    WindowPlan { windows, hop, padded: false }
}

fn round_index(seconds: f64, sample_rate_hz: u32) -> usize {
    let idx = (seconds * sample_rate_hz as f64).round_ties_even();
    if idx <= 0.0 {
        0
    } else {
        idx as usize
    }
}

/// Cuts `clip` into one chunk per planned window.
pub fn segment(clip: &AudioClip, config: &SegmentationConfig) -> Result<Vec<Chunk>, SegmentError> {
    if clip.is_empty() {
        return Err(SegmentError::EmptyAudio);
    }
    let sr = clip.sample_rate_hz();
    let total = clip.samples().len();
    let plan = plan_windows(clip.duration_s(), config);
    let window_len = round_index(config.duration::<f64>(), sr);

    let chunks = plan
        .windows
        .iter()
        .enumerate()
        .map(|(index, w)| {
            let mut start = round_index(w.start, sr);
            if !plan.padded && start + window_len > total {
                // Tail window: the clip end is the anchor.
                start = total.saturating_sub(window_len);
            }
            let end = (start + window_len).min(total);
            let mut samples = clip.samples()[start..end].to_vec();
            let valid_samples = samples.len();
            samples.resize(window_len, 0);
            Chunk { index, start_s: w.start, end_s: w.end, sample_rate_hz: sr, samples, valid_samples }
        })
        .collect();
    Ok(chunks)
}

/// Re-cuts a single chunk; used to serve chunk audio without keeping samples around.
pub fn chunk_at(clip: &AudioClip, config: &SegmentationConfig, index: usize) -> Option<Chunk> {
    segment(clip, config).ok()?.into_iter().nth(index)
}
