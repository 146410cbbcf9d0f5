//! RIFF/WAVE reading and writing. Only 16-bit integer PCM mono is accepted.

use std::io::Cursor;

use thiserror::Error;

use crate::model::AudioClip;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AudioError {
    #[error("channels={0}: only mono audio is accepted")]
    Channels(u16),
    #[error("bits_per_sample={0}: only 16-bit PCM is accepted")]
    BitsPerSample(u16),
    #[error("sample format is not integer PCM")]
    NotPcm,
    #[error("sample rate must be positive")]
    SampleRate,
    #[error("malformed WAV data: {0}")]
    Malformed(String),
}

pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, AudioError> {
    let reader = hound::WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::Channels(spec.channels));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::NotPcm);
    }
    if spec.bits_per_sample != 16 {
        return Err(AudioError::BitsPerSample(spec.bits_per_sample));
    }
    if spec.sample_rate == 0 {
        return Err(AudioError::SampleRate);
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    Ok(AudioClip::new(samples, spec.sample_rate))
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::Unsupported => AudioError::NotPcm,
        other => AudioError::Malformed(other.to_string()),
    }
}

/// Encodes mono 16-bit PCM samples as a WAV file.
pub fn encode_wav(samples: &[i16], sample_rate_hz: u32) -> Vec<u8> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::with_capacity(44 + samples.len() * 2));
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory writer");
        let mut w16 = writer.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w16.write_sample(s);
        }
        w16.flush().expect("in-memory write");
        writer.finalize().expect("in-memory finalize");
    }
    cursor.into_inner()
}
