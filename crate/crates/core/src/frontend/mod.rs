//! Waveform ingestion and STFT magnitude analysis.
//!
//! Frames are left-aligned with no edge padding: frame `t` covers samples
//! `t * hop .. t * hop + window_len`, is multiplied by a symmetric Hamming
//! window, right-padded with zeros to `n_fft` and transformed. Only the
//! one-sided magnitude (`n_fft / 2 + 1` bins) is kept. No pre-emphasis,
//! dithering or normalization is applied.

mod stft;
mod wav;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stft::{frame_count, hamming_window, stft_magnitude, StftPlan};
pub use wav::{load_wav, write_wav_i16};

/// Sampling rate the default framing is defined for.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// STFT framing parameters, all in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSpec {
    pub window_len: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for FrameSpec {
    /// 25 ms Hamming window every 10 ms at 16 kHz, 512-point transform.
    fn default() -> Self {
        Self {
            window_len: 400,
            hop: 160,
            n_fft: 512,
        }
    }
}

impl FrameSpec {
    pub fn new(window_len: usize, hop: usize, n_fft: usize) -> Result<Self> {
        let spec = Self {
            window_len,
            hop,
            n_fft,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.window_len == 0 {
            return Err(Error::InvalidFrameSpec(
                "window_len and hop must be positive".into(),
            ));
        }
        if !self.n_fft.is_power_of_two() {
            return Err(Error::InvalidFrameSpec(format!(
                "n_fft = {} is not a power of two",
                self.n_fft
            )));
        }
        if !(self.hop <= self.window_len && self.window_len <= self.n_fft) {
            return Err(Error::InvalidFrameSpec(format!(
                "need hop <= window_len <= n_fft, got hop={} window_len={} n_fft={}",
                self.hop, self.window_len, self.n_fft
            )));
        }
        Ok(())
    }

    /// Number of one-sided frequency channels, `n_fft / 2 + 1`.
    pub fn n_channels(&self) -> usize {
        self.n_fft / 2 + 1
    }
}

/// Number of channels produced by the default 512-point transform.
pub const DEFAULT_CHANNELS: usize = 257;

/// `T x F` grid of nonnegative linear magnitudes, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Array2<f64>,
}

impl Spectrogram {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidSpectrogram(format!(
                "entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_valid(values: Array2<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self { values }
    }

    pub fn zeros(frames: usize, channels: usize) -> Self {
        Self {
            values: Array2::zeros((frames, channels)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }
}

impl AsRef<Array2<f64>> for Spectrogram {
    fn as_ref(&self) -> &Array2<f64> {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_is_valid() {
        let spec = FrameSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.n_channels(), DEFAULT_CHANNELS);
    }

    #[test]
    fn frame_spec_rejects_bad_geometry() {
        assert!(FrameSpec::new(400, 160, 500).is_err());
        assert!(FrameSpec::new(600, 160, 512).is_err());
        assert!(FrameSpec::new(400, 401, 512).is_err());
        assert!(FrameSpec::new(400, 0, 512).is_err());
    }

    #[test]
    fn spectrogram_rejects_negative_and_nan() {
        assert!(Spectrogram::new(Array2::from_elem((2, 3), -1.0)).is_err());
        assert!(Spectrogram::new(Array2::from_elem((2, 3), f64::NAN)).is_err());
        assert!(Spectrogram::new(Array2::from_elem((2, 3), 0.0)).is_ok());
    }

    #[test]
    fn waveform_rejects_zero_rate() {
        assert!(Waveform::new(vec![0.0; 4], 0).is_err());
        assert!(Waveform::new(vec![f64::INFINITY], 16000).is_err());
    }
}
