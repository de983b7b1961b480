//! Nonlinear compression of magnitude spectrograms.
//!
//! Four operator families are supported:
//!
//! | kind        | output                         | parameters |
//! |-------------|--------------------------------|------------|
//! | `Log`       | `ln(max(x, floor))`            | none       |
//! | `OffsetLog` | `ln(x + exp(beta))`            | `beta`     |
//! | `Power`     | `max(x, floor)^(1/alpha)`      | `alpha`    |
//! | `Drc`       | `(x + delta)^r - delta^r`      | `delta, r` |
//!
//! Each can be used with one scalar per parameter ([`DesignMode::Static`]),
//! one value per frequency channel ([`DesignMode::ChannelDependent`]), or as
//! `N` channel-dependent copies whose outputs are averaged
//! ([`DesignMode::MultiRegimeCD`]). All derivatives are analytic.

mod init;
pub mod kernel;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::Spectrogram;

pub use init::{init_params, init_params_with, ParamInit, Preset, RegimeSpec, DEFAULT_BETA_SEED};
pub use kernel::DEFAULT_INPUT_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorKind {
    Log,
    OffsetLog,
    Power,
    Drc,
}

impl CompressorKind {
    pub const ALL: [CompressorKind; 4] = [Self::Log, Self::OffsetLog, Self::Power, Self::Drc];

    pub fn param_names(self) -> &'static [ParamName] {
        match self {
            Self::Log => &[],
            Self::OffsetLog => &[ParamName::Beta],
            Self::Power => &[ParamName::Alpha],
            Self::Drc => &[ParamName::Delta, ParamName::R],
        }
    }

    pub fn n_params(self) -> usize {
        self.param_names().len()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Log => "log",
            Self::OffsetLog => "offset-log",
            Self::Power => "power",
            Self::Drc => "drc",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Self::Log => 0,
            Self::OffsetLog => 1,
            Self::Power => 2,
            Self::Drc => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }
}

impl std::fmt::Display for CompressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CompressorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown compressor kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamName {
    Alpha,
    Delta,
    R,
    Beta,
}

impl ParamName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::Delta => "delta",
            Self::R => "r",
            Self::Beta => "beta",
        }
    }

    /// Whether `v` lies in the domain where the compressor is defined.
    pub fn admits(self, v: f64) -> bool {
        v.is_finite()
            && match self {
                Self::Alpha | Self::Delta => v > 0.0,
                Self::R => v >= 0.0,
                Self::Beta => true,
            }
    }

    /// Lower bound enforced after each optimizer step.
    pub fn learning_floor(self) -> f64 {
        match self {
            Self::Alpha => 0.1,
            Self::Delta => 0.01,
            Self::R => 0.0,
            Self::Beta => f64::NEG_INFINITY,
        }
    }
}

impl std::str::FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Alpha, Self::Delta, Self::R, Self::Beta]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "design")]
pub enum DesignMode {
    Static,
    #[serde(rename = "cd")]
    ChannelDependent,
    #[serde(rename = "mr-cd")]
    MultiRegimeCD { regimes: usize },
}

impl DesignMode {
    pub fn n_regimes(self) -> usize {
        match self {
            Self::MultiRegimeCD { regimes } => regimes,
            _ => 1,
        }
    }

    /// Length of each parameter vector for `n_channels` channels.
    pub fn param_len(self, n_channels: usize) -> usize {
        match self {
            Self::Static => 1,
            _ => n_channels,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Static => "static",
            Self::ChannelDependent => "cd",
            Self::MultiRegimeCD { .. } => "mr-cd",
        }
    }
}

/// Per-channel (or, in static mode, single-element) parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn constant(value: f64, len: usize) -> Self {
        Self(vec![value; len])
    }

    /// Value for channel `f`; a single-element vector broadcasts.
    #[inline]
    pub fn at(&self, f: usize) -> f64 {
        if self.0.len() == 1 {
            self.0[0]
        } else {
            self.0[f]
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    fn check(&self, name: ParamName, n_channels: usize) -> Result<()> {
        if self.0.len() != 1 && self.0.len() != n_channels {
            return Err(Error::Shape(format!(
                "{} has {} entries for {} channels",
                name.as_str(),
                self.0.len(),
                n_channels
            )));
        }
        match self.0.iter().position(|&v| !name.admits(v)) {
            Some(channel) => Err(Error::ParamDomain {
                name: name.as_str(),
                channel,
                value: self.0[channel],
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Parameters of one regime, ordered as [`CompressorKind::param_names`].
pub type RegimeParams = Vec<ParamVector>;

/// Elementwise sensitivities of a compressor output.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `[regime][param]` -> `T x F` matrix of `dy[t,f] / d theta`, where
    /// `theta` is the parameter entry that `y[t,f]` depends on (channel `f`,
    /// or the shared scalar in static mode).
    pub d_output_d_param: Vec<Vec<Array2<f64>>>,
    pub d_output_d_input: Array2<f64>,
}

/// A configured compressor: kind, design and full parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressorState {
    kind: CompressorKind,
    mode: DesignMode,
    n_channels: usize,
    regimes: Vec<RegimeParams>,
    input_floor: f64,
}

impl CompressorState {
    pub fn new(
        kind: CompressorKind,
        mode: DesignMode,
        n_channels: usize,
        regimes: Vec<RegimeParams>,
        input_floor: f64,
    ) -> Result<Self> {
        let state = Self {
            kind,
            mode,
            n_channels,
            regimes,
            input_floor,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::Shape("compressor needs at least one channel".into()));
        }
        if !(self.input_floor > 0.0 && self.input_floor.is_finite()) {
            return Err(Error::Config(format!(
                "input floor must be positive, got {}",
                self.input_floor
            )));
        }
        let want_regimes = self.mode.n_regimes();
        if want_regimes == 0 || self.regimes.len() != want_regimes {
            return Err(Error::Shape(format!(
                "{} mode expects {} regimes, state has {}",
                self.mode.as_str(),
                want_regimes,
                self.regimes.len()
            )));
        }
        let names = self.kind.param_names();
        let len = self.mode.param_len(self.n_channels);
        for regime in &self.regimes {
            if regime.len() != names.len() {
                return Err(Error::Shape(format!(
                    "{} expects {} parameters per regime, found {}",
                    self.kind,
                    names.len(),
                    regime.len()
                )));
            }
            for (p, &name) in regime.iter().zip(names) {
                if p.len() != len {
                    return Err(Error::Shape(format!(
                        "{} vector has length {}, expected {} for {} mode",
                        name.as_str(),
                        p.len(),
                        len,
                        self.mode.as_str()
                    )));
                }
                p.check(name, self.n_channels)?;
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn mode(&self) -> DesignMode {
        self.mode
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_regimes(&self) -> usize {
        self.regimes.len()
    }

    pub fn input_floor(&self) -> f64 {
        self.input_floor
    }

    pub fn regimes(&self) -> &[RegimeParams] {
        &self.regimes
    }

    pub fn param(&self, regime: usize, name: ParamName) -> Option<&ParamVector> {
        let idx = self.kind.param_names().iter().position(|&n| n == name)?;
        self.regimes.get(regime).map(|r| &r[idx])
    }

    /// Total number of scalar learnable parameters.
    pub fn n_scalars(&self) -> usize {
        self.regimes.iter().flatten().map(ParamVector::len).sum()
    }

    /// All parameters flattened regime-major, then parameter, then channel.
    pub fn flat_params(&self) -> Vec<f64> {
        self.regimes
            .iter()
            .flatten()
            .flat_map(|p| p.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_scalars() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_scalars(),
                flat.len()
            )));
        }
        let mut it = flat.iter();
        for p in self.regimes.iter_mut().flatten() {
            for v in p.as_mut_slice() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Projects every parameter onto its learning domain
    /// (`alpha >= 0.1`, `delta >= 0.01`, `r >= 0`).
    pub fn clamp_to_domain(&mut self) {
        let names = self.kind.param_names();
        for regime in &mut self.regimes {
            for (p, &name) in regime.iter_mut().zip(names) {
                let floor = name.learning_floor();
                for v in p.as_mut_slice() {
                    if *v < floor {
                        *v = floor;
                    }
                }
            }
        }
    }

    #[inline]
    fn params_at(&self, regime: usize, f: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (slot, p) in out.iter_mut().zip(&self.regimes[regime]) {
            *slot = p.at(f);
        }
        out
    }

    fn check_input(&self, x: &Spectrogram) -> Result<()> {
        if x.n_channels() != self.n_channels {
            return Err(Error::Shape(format!(
                "spectrogram has {} channels, compressor expects {}",
                x.n_channels(),
                self.n_channels
            )));
        }
        Ok(())
    }

    /// Compressed output, averaged over regimes.
    pub fn forward(&self, x: &Spectrogram) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let n = self.regimes.len() as f64;
        let mut y = Array2::zeros(x.values().raw_dim());
        for regime in 0..self.regimes.len() {
            for (f, (xcol, mut ycol)) in x
                .values()
                .columns()
                .into_iter()
                .zip(y.columns_mut())
                .enumerate()
            {
                let p = self.params_at(regime, f);
                for (xv, yv) in xcol.iter().zip(ycol.iter_mut()) {
                    *yv += kernel::eval(self.kind, *xv, p, self.input_floor).y;
                }
            }
        }
        if self.regimes.len() > 1 {
            y.mapv_inplace(|v| v / n);
        }
        Ok(y)
    }

    /// Full elementwise sensitivities, including the `1/N` regime weight.
    pub fn gradients(&self, x: &Spectrogram) -> Result<GradientBundle> {
        self.check_input(x)?;
        let inv_n = 1.0 / self.regimes.len() as f64;
        let shape = x.values().raw_dim();
        let n_params = self.kind.n_params();
        let mut d_param: Vec<Vec<Array2<f64>>> = (0..self.regimes.len())
            .map(|_| (0..n_params).map(|_| Array2::zeros(shape)).collect())
            .collect();
        let mut d_input = Array2::zeros(shape);
        for (regime, grads) in d_param.iter_mut().enumerate() {
            for ((t, f), &xv) in x.values().indexed_iter() {
                let pt = kernel::eval(self.kind, xv, self.params_at(regime, f), self.input_floor);
                d_input[(t, f)] += inv_n * pt.dy_dx;
                for (g, d) in grads.iter_mut().zip(pt.dy_dp) {
                    g[(t, f)] = inv_n * d;
                }
            }
        }
        Ok(GradientBundle {
            d_output_d_param: d_param,
            d_output_d_input: d_input,
        })
    }

    /// Vector-Jacobian product: given `dL/dy` (same shape as the output),
    /// returns `dL/dtheta` flattened in [`flat_params`](Self::flat_params) order.
    pub fn backward(&self, x: &Spectrogram, upstream: &Array2<f64>) -> Result<Vec<f64>> {
        self.check_input(x)?;
        if upstream.raw_dim() != x.values().raw_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match input {:?}",
                upstream.shape(),
                x.values().shape()
            )));
        }
        let inv_n = 1.0 / self.regimes.len() as f64;
        let n_params = self.kind.n_params();
        let len = self.mode.param_len(self.n_channels);
        let mut out = vec![0.0; self.n_scalars()];
        for regime in 0..self.regimes.len() {
            let base = regime * n_params * len;
            for (f, (xcol, gcol)) in x
                .values()
                .columns()
                .into_iter()
                .zip(upstream.columns())
                .enumerate()
            {
                let p = self.params_at(regime, f);
                let slot = if len == 1 { 0 } else { f };
                let mut acc = [0.0; 2];
                for (xv, gv) in xcol.iter().zip(gcol.iter()) {
                    let d = kernel::eval(self.kind, *xv, p, self.input_floor).dy_dp;
                    acc[0] += gv * d[0];
                    acc[1] += gv * d[1];
                }
                for (k, a) in acc.iter().take(n_params).enumerate() {
                    out[base + k * len + slot] += inv_n * a;
                }
            }
        }
        Ok(out)
    }
}

/// `ln(max(x, floor))`.
pub fn compress_log(x: &Spectrogram, floor: f64) -> Array2<f64> {
    x.values().mapv(|v| kernel::log(v, floor).y)
}

/// `ln(x + exp(beta[f]))` together with `dy/dbeta`.
pub fn compress_offset_log(
    x: &Spectrogram,
    beta: &ParamVector,
) -> Result<(Array2<f64>, Array2<f64>)> {
    beta.check(ParamName::Beta, x.n_channels())?;
    let mut y = Array2::zeros(x.values().raw_dim());
    let mut dy = Array2::zeros(x.values().raw_dim());
    Zip::indexed(x.values())
        .and(&mut y)
        .and(&mut dy)
        .for_each(|(_, f), &xv, yv, dv| {
            let p = kernel::offset_log(xv, beta.at(f));
            *yv = p.y;
            *dv = p.dy_dp[0];
        });
    Ok((y, dy))
}

fn single_regime(
    kind: CompressorKind,
    x: &Spectrogram,
    params: Vec<ParamVector>,
    floor: f64,
) -> Result<CompressorState> {
    let mode = if params.iter().all(|p| p.len() == 1) {
        DesignMode::Static
    } else {
        DesignMode::ChannelDependent
    };
    let params = if mode == DesignMode::ChannelDependent {
        params
            .into_iter()
            .map(|p| {
                if p.len() == 1 {
                    ParamVector::constant(p.at(0), x.n_channels())
                } else {
                    p
                }
            })
            .collect()
    } else {
        params
    };
    CompressorState::new(kind, mode, x.n_channels(), vec![params], floor)
}

/// `max(x, floor)^(1/alpha[f])`.
pub fn compress_power(x: &Spectrogram, alpha: &ParamVector, floor: f64) -> Result<Array2<f64>> {
    single_regime(CompressorKind::Power, x, vec![alpha.clone()], floor)?.forward(x)
}

pub fn grad_power(x: &Spectrogram, alpha: &ParamVector, floor: f64) -> Result<GradientBundle> {
    single_regime(CompressorKind::Power, x, vec![alpha.clone()], floor)?.gradients(x)
}

/// `(x + delta[f])^r[f] - delta[f]^r[f]`.
pub fn compress_drc(x: &Spectrogram, delta: &ParamVector, r: &ParamVector) -> Result<Array2<f64>> {
    single_regime(
        CompressorKind::Drc,
        x,
        vec![delta.clone(), r.clone()],
        DEFAULT_INPUT_FLOOR,
    )?
    .forward(x)
}

pub fn grad_drc(x: &Spectrogram, delta: &ParamVector, r: &ParamVector) -> Result<GradientBundle> {
    single_regime(
        CompressorKind::Drc,
        x,
        vec![delta.clone(), r.clone()],
        DEFAULT_INPUT_FLOOR,
    )?
    .gradients(x)
}

/// Average of the per-regime outputs of a multi-regime state.
pub fn compress_multi_regime(x: &Spectrogram, state: &CompressorState) -> Result<Array2<f64>> {
    if !matches!(state.mode(), DesignMode::MultiRegimeCD { .. }) {
        return Err(Error::Config(format!(
            "expected an mr-cd state, got {}",
            state.mode().as_str()
        )));
    }
    state.forward(x)
}
