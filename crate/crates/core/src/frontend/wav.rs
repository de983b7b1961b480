use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

/// Reads an integer PCM WAV file, normalizing to `[-1, 1]` by `2^(bits-1)`
/// and averaging channels down to mono. The header sample rate is reported
/// as-is; nothing is resampled.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.into(),
            reason: "format not supported".into(),
        },
        other => Error::Wav {
            path: path.into(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            reason: "floating-point samples; expected integer PCM".into(),
        });
    }
    if spec.bits_per_sample == 0 || spec.bits_per_sample > 32 {
        return Err(Error::UnsupportedEncoding {
            path: path.into(),
            reason: format!("{} bits per sample", spec.bits_per_sample),
        });
    }
    let channels = spec.channels.max(1) as usize;
    let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;

    let raw: Vec<i32> = reader
        .samples::<i32>()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Wav {
            path: path.into(),
            reason: e.to_string(),
        })?;
    if raw.len() < channels {
        return Err(Error::EmptyAudio { path: path.into() });
    }
    let samples = raw
        .chunks_exact(channels)
        .map(|frame| frame.iter().map(|&s| s as f64 * scale).sum::<f64>() / channels as f64)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1]` and rounding to the nearest code.
pub fn write_wav_i16(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            path: path.into(),
            reason: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in wave.samples() {
        let code = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}
