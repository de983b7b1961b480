use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{FrameSpec, Spectrogram, Waveform};
use crate::error::{Error, Result};

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// `1 + floor((len - window_len) / hop)`, or `None` when the signal is
/// shorter than one window.
pub fn frame_count(len: usize, spec: &FrameSpec) -> Option<usize> {
    (len >= spec.window_len).then(|| 1 + (len - spec.window_len) / spec.hop)
}

/// Reusable transform plan: window, FFT and scratch space for one `FrameSpec`.
pub struct StftPlan {
    spec: FrameSpec,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl StftPlan {
    pub fn new(spec: FrameSpec) -> Result<Self> {
        spec.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(spec.n_fft);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self {
            spec,
            window: hamming_window(spec.window_len),
            fft,
            buf: vec![Complex64::default(); spec.n_fft],
            scratch,
        })
    }

    pub fn spec(&self) -> &FrameSpec {
        &self.spec
    }

    /// One-sided magnitude spectrum of a single `window_len` frame.
    pub fn frame_magnitude(&mut self, frame: &[f64], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.spec.window_len);
        debug_assert_eq!(out.len(), self.spec.n_channels());
        for (dst, (&s, &w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *dst = Complex64::new(s * w, 0.0);
        }
        for dst in &mut self.buf[self.spec.window_len..] {
            *dst = Complex64::default();
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.norm();
        }
    }

    pub fn process(&mut self, samples: &[f64]) -> Result<Spectrogram> {
        let spec = self.spec;
        let frames = frame_count(samples.len(), &spec).ok_or(Error::SignalTooShort {
            len: samples.len(),
            window_len: spec.window_len,
        })?;
        let mut values = Array2::zeros((frames, spec.n_channels()));
        for (t, mut row) in values.rows_mut().into_iter().enumerate() {
            let start = t * spec.hop;
            let frame = &samples[start..start + spec.window_len];
            self.frame_magnitude(frame, row.as_slice_mut().expect("row-major"));
        }
        Ok(Spectrogram::from_valid(values))
    }
}

/// Magnitude STFT of `wave` with left-aligned frames.
pub fn stft_magnitude(wave: &Waveform, spec: &FrameSpec) -> Result<Spectrogram> {
    StftPlan::new(*spec)?.process(wave.samples())
}
