use std::path::Path;

use super::{read_bytes, write_bytes, Reader};
use crate::compressors::{CompressorKind, CompressorState, DesignMode, ParamVector};
use crate::error::Result;

pub const STATE_MAGIC: [u8; 4] = *b"SCST";
pub const STATE_VERSION: u16 = 1;
const HEADER_LEN: usize = 28;

fn mode_code(mode: DesignMode) -> u8 {
    match mode {
        DesignMode::Static => 0,
        DesignMode::ChannelDependent => 1,
        DesignMode::MultiRegimeCD { .. } => 2,
    }
}

/// Layout: magic, version `u16`, kind `u8`, mode `u8`, regimes, channels and
/// parameter length as `u32`, input floor `f64`, then every parameter as
/// `f64` in [`CompressorState::flat_params`] order.
pub fn encode_state(state: &CompressorState) -> Vec<u8> {
    let flat = state.flat_params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * flat.len());
    out.extend_from_slice(&STATE_MAGIC);
    out.extend_from_slice(&STATE_VERSION.to_le_bytes());
    out.push(state.kind().code());
    out.push(mode_code(state.mode()));
    out.extend_from_slice(&(state.n_regimes() as u32).to_le_bytes());
    out.extend_from_slice(&(state.n_channels() as u32).to_le_bytes());
    out.extend_from_slice(&(state.mode().param_len(state.n_channels()) as u32).to_le_bytes());
    out.extend_from_slice(&state.input_floor().to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_state(bytes: &[u8]) -> Result<CompressorState> {
    let mut r = Reader::new(bytes, "compressor state");
    if r.take::<4>()? != STATE_MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u16()?;
    if version != STATE_VERSION {
        return Err(r.corrupt(format!("unsupported version {version}")));
    }
    let kind_code = r.u8()?;
    let kind = CompressorKind::from_code(kind_code)
        .ok_or_else(|| r.corrupt(format!("unknown kind code {kind_code}")))?;
    let mode_code = r.u8()?;
    let n_regimes = r.u32()? as usize;
    let mode = match (mode_code, n_regimes) {
        (0, 1) => DesignMode::Static,
        (1, 1) => DesignMode::ChannelDependent,
        (2, n) if n >= 2 => DesignMode::MultiRegimeCD { regimes: n },
        _ => {
            return Err(r.corrupt(format!(
                "inconsistent mode code {mode_code} with {n_regimes} regimes"
            )))
        }
    };
    let n_channels = r.u32()? as usize;
    let param_len = r.u32()? as usize;
    if param_len != mode.param_len(n_channels) {
        return Err(r.corrupt(format!(
            "parameter length {param_len} does not fit {} mode with {n_channels} channels",
            mode.as_str()
        )));
    }
    let floor = r.f64()?;
    let n_values = n_regimes
        .checked_mul(kind.n_params())
        .and_then(|n| n.checked_mul(param_len))
        .ok_or_else(|| r.corrupt("dimensions overflow"))?;
    if r.remaining() != 8 * n_values {
        return Err(r.corrupt(format!(
            "payload is {} bytes, expected {}",
            r.remaining(),
            8 * n_values
        )));
    }
    let mut regimes = Vec::with_capacity(n_regimes);
    for _ in 0..n_regimes {
        let mut params = Vec::with_capacity(kind.n_params());
        for _ in 0..kind.n_params() {
            let mut v = Vec::with_capacity(param_len);
            for _ in 0..param_len {
                v.push(r.f64()?);
            }
            params.push(ParamVector::new(v));
        }
        regimes.push(params);
    }
    CompressorState::new(kind, mode, n_channels, regimes, floor)
        .map_err(|e| r.corrupt(e.to_string()))
}

pub fn read_state(path: impl AsRef<Path>) -> Result<CompressorState> {
    decode_state(&read_bytes(path.as_ref())?)
}

pub fn write_state(state: &CompressorState, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_state(state))
}
