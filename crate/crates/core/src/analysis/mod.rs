//! Per-chunk classification, transcription and phonemization, plus aggregation.

mod aggregate;
pub mod mock;

use async_trait::async_trait;
use futures::future::{BoxFuture, FutureExt};
use futures::stream::{self, StreamExt, TryStreamExt};
use thiserror::Error;

use crate::backend::BackendFailure;
use crate::model::{Chunk, ChunkAnalysis, LabelProbs};

pub use aggregate::{aggregate, phoneme_correlation, SeverityThresholds};

/// Upper bound on in-flight backend calls per session.
pub const DEFAULT_FAN_OUT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("no chunks to analyse")]
    EmptyInput,
    #[error("backend unavailable ({0})")]
    BackendUnavailable(BackendFailure),
    #[error("chunk {chunk} has no matching analysis")]
    Mismatch { chunk: usize },
}

impl From<BackendFailure> for AnalysisError {
    fn from(f: BackendFailure) -> Self {
        AnalysisError::BackendUnavailable(f)
    }
}

/// Produces a full six-label distribution for a chunk.
#[async_trait]
pub trait ClassifierBackend: Send + Sync {
    async fn classify(&self, chunk: &Chunk) -> Result<LabelProbs, BackendFailure>;
}

#[async_trait]
pub trait TranscriberBackend: Send + Sync {
    async fn transcribe(&self, chunk: &Chunk) -> Result<String, BackendFailure>;
}

/// Returns IPA symbols for a chunk.
#[async_trait]
pub trait PhonemizerBackend: Send + Sync {
    async fn phonemize(&self, chunk: &Chunk) -> Result<Vec<String>, BackendFailure>;
}

/// Classifies every chunk, fanning out up to `fan_out` concurrent calls. The
/// result is in chunk order; any chunk failure fails the whole call.
pub async fn classify_all(
    chunks: &[Chunk],
    backend: &dyn ClassifierBackend,
    fan_out: usize,
) -> Result<Vec<ChunkAnalysis>, AnalysisError> {
    if chunks.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    // boxed up front so no closure type leaks into the future; keeps callers `Send`
    let calls: Vec<BoxFuture<'_, Result<ChunkAnalysis, AnalysisError>>> = chunks
        .iter()
        .map(|chunk| {
            async move {
                let probs = backend.classify(chunk).await?;
                Ok(ChunkAnalysis::for_chunk(chunk, probs))
            }
            .boxed()
        })
        .collect();
    stream::iter(calls).buffered(fan_out.max(1)).try_collect().await
}

/// Adds transcripts and phonemes to existing analyses without touching the
/// label data. `analyses[i]` must describe `chunks[i]`.
pub async fn enrich(
    chunks: &[Chunk],
    analyses: &mut [ChunkAnalysis],
    transcriber: &dyn TranscriberBackend,
    phonemizer: &dyn PhonemizerBackend,
    fan_out: usize,
) -> Result<(), AnalysisError> {
    if chunks.len() != analyses.len() {
        return Err(AnalysisError::Mismatch { chunk: chunks.len().min(analyses.len()) });
    }
    if let Some((c, _)) = chunks.iter().zip(analyses.iter()).find(|(c, a)| c.index != a.chunk_index) {
        return Err(AnalysisError::Mismatch { chunk: c.index });
    }
    let calls: Vec<BoxFuture<'_, Result<(String, Vec<String>), AnalysisError>>> = chunks
        .iter()
        .map(|chunk| {
            async move {
                let text = transcriber.transcribe(chunk).await?;
                let phonemes = phonemizer.phonemize(chunk).await?;
                Ok((text, phonemes))
            }
            .boxed()
        })
        .collect();
    let results: Vec<(String, Vec<String>)> =
        stream::iter(calls).buffered(fan_out.max(1)).try_collect().await?;
    for (analysis, (text, phonemes)) in analyses.iter_mut().zip(results) {
        analysis.transcript = Some(text);
        analysis.phonemes = Some(phonemes);
    }
    Ok(())
}
