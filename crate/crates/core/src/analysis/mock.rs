//! Deterministic stand-ins for the speech backends.
//!
//! Each mock hashes `(seed, chunk PCM)` with SHA-256 and derives its output
//! from the digest, so identical inputs always give identical outputs. Every
//! mock counts its calls so callers can assert how much work was done.

use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use sha2::{Digest, Sha256};

use super::{ClassifierBackend, PhonemizerBackend, TranscriberBackend};
use crate::backend::BackendFailure;
use crate::model::{Chunk, LabelProbs};

fn digest(domain: &[u8], seed: u64, chunk: &Chunk) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(domain);
    h.update(seed.to_le_bytes());
    h.update(chunk.sample_rate_hz.to_le_bytes());
    for s in chunk.valid() {
        h.update(s.to_le_bytes());
    }
    h.finalize().into()
}

fn words(d: &[u8; 32]) -> impl Iterator<Item = u32> + '_ {
    d.chunks_exact(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

/// Relative prior weight of the fluent label in the mock's simplex map.
const FLUENT_WEIGHT: f64 = 2.5;

/// Maps six 32-bit words to a point on the probability simplex: each word
/// becomes a uniform variate `u` in (0, 1), `-ln u` gives an exponential
/// variate, and normalising exponentials gives a uniform simplex point. The
/// fluent coordinate is up-weighted so mock recordings are not all disfluent.
pub fn simplex_from_words(w: [u32; 6]) -> [f64; 6] {
    let mut e = [0.0; 6];
    for (slot, &x) in e.iter_mut().zip(w.iter()) {
        let u = (x as f64 + 1.0) / (u32::MAX as f64 + 2.0);
        *slot = -u.ln();
    }
    e[5] *= FLUENT_WEIGHT;
    let total: f64 = e.iter().sum();
    let mut p = e.map(|v| v / total);
    // Put the rounding residue on the largest entry so the sum is 1 to within an ulp.
    let residue = 1.0 - p.iter().sum::<f64>();
    let imax = (0..6).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0);
    p[imax] += residue;
    p
}

#[derive(Debug, Default)]
pub struct MockClassifier {
    seed: u64,
    calls: AtomicUsize,
}

impl MockClassifier {
    pub fn new(seed: u64) -> Self {
        Self { seed, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Synchronous core of [`ClassifierBackend::classify`].
    pub fn distribution(&self, chunk: &Chunk) -> LabelProbs {
        let d = digest(b"vst/mock-classifier", self.seed, chunk);
        let mut w = [0u32; 6];
        for (slot, x) in w.iter_mut().zip(words(&d)) {
            *slot = x;
        }
        LabelProbs::new(simplex_from_words(w)).expect("simplex point is a valid distribution")
    }
}

/// Deterministic classifier keyed by `seed`.
pub fn mock_classifier(seed: u64) -> MockClassifier {
    MockClassifier::new(seed)
}

#[async_trait]
impl ClassifierBackend for MockClassifier {
    async fn classify(&self, chunk: &Chunk) -> Result<LabelProbs, BackendFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.distribution(chunk))
    }
}

const WORDS: [&str; 16] = [
    "she", "could", "buy", "a", "minimum", "we", "do", "not", "own", "freshness", "sometimes",
    "then", "it's", "fine", "but", "supermarket",
];

#[derive(Debug, Default)]
pub struct MockTranscriber {
    seed: u64,
    calls: AtomicUsize,
}

impl MockTranscriber {
    pub fn new(seed: u64) -> Self {
        Self { seed, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl TranscriberBackend for MockTranscriber {
    async fn transcribe(&self, chunk: &Chunk) -> Result<String, BackendFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let d = digest(b"vst/mock-asr", self.seed, chunk);
        let n = 3 + (d[0] as usize % 4);
        Ok(d[1..=n].iter().map(|b| WORDS[*b as usize % WORDS.len()]).collect::<Vec<_>>().join(" "))
    }
}

const IPA: [&str; 20] = [
    "p", "b", "t", "d", "k", "g", "f", "v", "s", "z", "ʃ", "θ", "m", "n", "l", "ɹ", "w", "aɪ", "ʊ", "ə",
];

#[derive(Debug, Default)]
pub struct MockPhonemizer {
    seed: u64,
    calls: AtomicUsize,
}

impl MockPhonemizer {
    pub fn new(seed: u64) -> Self {
        Self { seed, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl PhonemizerBackend for MockPhonemizer {
    async fn phonemize(&self, chunk: &Chunk) -> Result<Vec<String>, BackendFailure> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let d = digest(b"vst/mock-phonemizer", self.seed, chunk);
        let n = 6 + (d[0] as usize % 8);
        Ok(d[1..=n].iter().map(|b| IPA[*b as usize % IPA.len()].to_owned()).collect())
    }
}
