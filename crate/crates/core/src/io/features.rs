use std::path::Path;

use ndarray::Array2;

use super::{read_bytes, write_bytes, Reader};
use crate::error::{Error, Result};
use crate::frontend::{FrameSpec, Spectrogram};

pub const FEATURE_MAGIC: [u8; 4] = *b"SCFT";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 32;
const FLAG_COMPRESSED: u16 = 1;

/// A `T x F` feature matrix with the framing that produced it.
///
/// Layout: magic, version `u16`, flags `u16`, then `T`, `F`, window length,
/// hop, FFT size and sample rate as `u32`, followed by `T * F` `f32` values
/// row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub frame_spec: FrameSpec,
    pub sample_rate: u32,
    /// Whether a compressor was applied; raw magnitudes otherwise.
    pub compressed: bool,
    pub values: Array2<f32>,
}

impl FeatureFile {
    pub fn from_matrix(
        values: &Array2<f64>,
        frame_spec: FrameSpec,
        sample_rate: u32,
        compressed: bool,
    ) -> Self {
        Self {
            frame_spec,
            sample_rate,
            compressed,
            values: values.mapv(|v| v as f32),
        }
    }

    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.values.mapv(f64::from)
    }

    /// The raw magnitudes as a spectrogram. Fails for compressed features.
    pub fn to_spectrogram(&self) -> Result<Spectrogram> {
        if self.compressed {
            return Err(Error::InvalidSpectrogram(
                "feature file holds compressed values, not magnitudes".into(),
            ));
        }
        Spectrogram::new(self.to_f64())
    }

    pub fn encode(&self) -> Vec<u8> {
        let (t, f) = self.values.dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * f);
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        let flags = if self.compressed { FLAG_COMPRESSED } else { 0 };
        out.extend_from_slice(&flags.to_le_bytes());
        for v in [
            t,
            f,
            self.frame_spec.window_len,
            self.frame_spec.hop,
            self.frame_spec.n_fft,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.sample_rate.to_le_bytes());
        for v in self.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "feature file");
        let magic = r.take::<4>()?;
        if magic != FEATURE_MAGIC {
            return Err(r.corrupt("bad magic"));
        }
        let version = r.u16()?;
        if version != FEATURE_VERSION {
            return Err(r.corrupt(format!("unsupported version {version}")));
        }
        let flags = r.u16()?;
        if flags & !FLAG_COMPRESSED != 0 {
            return Err(r.corrupt(format!("unknown flags {flags:#06x}")));
        }
        let t = r.u32()? as usize;
        let f = r.u32()? as usize;
        let frame_spec = FrameSpec {
            window_len: r.u32()? as usize,
            hop: r.u32()? as usize,
            n_fft: r.u32()? as usize,
        };
        let sample_rate = r.u32()?;
        frame_spec
            .validate()
            .map_err(|e| r.corrupt(format!("frame parameters: {e}")))?;
        let want = t
            .checked_mul(f)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| r.corrupt("dimensions overflow"))?;
        if r.remaining() != want {
            return Err(r.corrupt(format!(
                "payload is {} bytes, header implies {t} x {f} x 4 = {want}",
                r.remaining()
            )));
        }
        let mut data = Vec::with_capacity(t * f);
        for _ in 0..t * f {
            data.push(r.f32()?);
        }
        let values = Array2::from_shape_vec((t, f), data).expect("length checked");
        Ok(Self {
            frame_spec,
            sample_rate,
            compressed: flags & FLAG_COMPRESSED != 0,
            values,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&read_bytes(path.as_ref())?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_bytes(path.as_ref(), &self.encode())
    }
}
