//! Kernelized initialization from the classical static settings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CompressorKind, CompressorState, DesignMode, ParamName, ParamVector, DEFAULT_INPUT_FLOOR};
use crate::error::{Error, Result};

/// Seed used for the random `beta` initialization unless one is given.
pub const DEFAULT_BETA_SEED: u64 = 0;

/// `n` evenly spaced values from `min` to `max`, both included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl RegimeSpec {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        let spec = Self { min, max, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max {
            return Err(Error::Config(format!(
                "regime range needs min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.n < 2 {
            return Err(Error::Config(format!(
                "multi-regime design needs at least 2 regimes, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// `min + (max - min) * i / (n - 1)` for `i = 0..n`.
    pub fn values(&self) -> Vec<f64> {
        let span = self.max - self.min;
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| self.min + span * i as f64 / last)
            .collect()
    }
}

/// How to initialize one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamInit {
    /// Same value in every regime and channel.
    Constant(f64),
    /// Regime `i` gets the `i`-th evenly spaced value on every channel.
    Regimes(RegimeSpec),
    /// Independent standard normal draws per regime and channel.
    StandardNormal { seed: u64 },
}

/// The classical operating points used for kernelized initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Log,
    OffsetLog,
    CubeRoot,
    PowerLaw,
    Drc,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Self::Log,
        Self::OffsetLog,
        Self::CubeRoot,
        Self::PowerLaw,
        Self::Drc,
    ];

    pub fn kind(self) -> CompressorKind {
        match self {
            Self::Log => CompressorKind::Log,
            Self::OffsetLog => CompressorKind::OffsetLog,
            Self::CubeRoot | Self::PowerLaw => CompressorKind::Power,
            Self::Drc => CompressorKind::Drc,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Log => "log",
            Self::OffsetLog => "offset-log",
            Self::CubeRoot => "cube-root",
            Self::PowerLaw => "power-law",
            Self::Drc => "drc",
        }
    }

    /// Static / channel-dependent starting value of `name`.
    pub fn static_value(self, name: ParamName) -> Option<f64> {
        match (self, name) {
            (Self::CubeRoot, ParamName::Alpha) => Some(3.0),
            (Self::PowerLaw, ParamName::Alpha) => Some(15.0),
            (Self::Drc, ParamName::Delta) => Some(2.0),
            (Self::Drc, ParamName::R) => Some(0.5),
            _ => None,
        }
    }

    /// `(min, max)` range spread over regimes in multi-regime mode.
    pub fn regime_range(self, name: ParamName) -> Option<(f64, f64)> {
        match (self, name) {
            (Self::CubeRoot, ParamName::Alpha) => Some((1.0, 3.0)),
            (Self::PowerLaw, ParamName::Alpha) => Some((1.0, 15.0)),
            (Self::Drc, ParamName::Delta) => Some((1.0, 2.0)),
            (Self::Drc, ParamName::R) => Some((0.0, 1.0)),
            _ => None,
        }
    }

    /// Default per-parameter initialization for `mode`.
    pub fn default_inits(self, mode: DesignMode) -> Vec<ParamInit> {
        self.kind()
            .param_names()
            .iter()
            .map(|&name| {
                if name == ParamName::Beta {
                    return ParamInit::StandardNormal {
                        seed: DEFAULT_BETA_SEED,
                    };
                }
                match mode {
                    DesignMode::MultiRegimeCD { regimes } => {
                        let (min, max) = self.regime_range(name).expect("preset covers its params");
                        ParamInit::Regimes(RegimeSpec { min, max, n: regimes })
                    }
                    _ => ParamInit::Constant(self.static_value(name).expect("preset covers its params")),
                }
            })
            .collect()
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Initializes `preset` in `mode` for `n_channels` channels with the
/// preset's default values and regime ranges.
pub fn init_params(preset: Preset, mode: DesignMode, n_channels: usize) -> Result<CompressorState> {
    init_params_with(preset.kind(), mode, n_channels, &preset.default_inits(mode))
}

/// Initializes a compressor with explicit per-parameter rules, given in
/// [`CompressorKind::param_names`] order.
pub fn init_params_with(
    kind: CompressorKind,
    mode: DesignMode,
    n_channels: usize,
    inits: &[ParamInit],
) -> Result<CompressorState> {
    if n_channels == 0 {
        return Err(Error::Config("channel count must be positive".into()));
    }
    let n_regimes = mode.n_regimes();
    if let DesignMode::MultiRegimeCD { regimes } = mode {
        if regimes < 2 {
            return Err(Error::Config(format!(
                "multi-regime design needs at least 2 regimes, got {regimes}"
            )));
        }
    }
    let names = kind.param_names();
    if inits.len() != names.len() {
        return Err(Error::Config(format!(
            "{kind} takes {} parameters, {} initializers given",
            names.len(),
            inits.len()
        )));
    }
    let len = mode.param_len(n_channels);

    // columns[k][regime]
    let mut columns: Vec<Vec<ParamVector>> = Vec::with_capacity(names.len());
    for (&name, init) in names.iter().zip(inits) {
        let col = match *init {
            ParamInit::Constant(v) => vec![ParamVector::constant(v, len); n_regimes],
            ParamInit::Regimes(spec) => {
                if !matches!(mode, DesignMode::MultiRegimeCD { .. }) {
                    return Err(Error::Config(format!(
                        "regime range for `{}` requires mr-cd mode",
                        name.as_str()
                    )));
                }
                spec.validate()?;
                if spec.n != n_regimes {
                    return Err(Error::Config(format!(
                        "regime range for `{}` has {} values, mode has {} regimes",
                        name.as_str(),
                        spec.n,
                        n_regimes
                    )));
                }
                spec.values()
                    .into_iter()
                    .map(|v| ParamVector::constant(v, len))
                    .collect()
            }
            ParamInit::StandardNormal { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n_regimes)
                    .map(|_| {
                        ParamVector::new(
                            (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
                        )
                    })
                    .collect()
            }
        };
        columns.push(col);
    }
    let regimes = (0..n_regimes)
        .map(|i| columns.iter().map(|col| col[i].clone()).collect())
        .collect();
    CompressorState::new(kind, mode, n_channels, regimes, DEFAULT_INPUT_FLOOR)
}
