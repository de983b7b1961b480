//! Run configuration file (TOML) and shared argument helpers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use speccomp::compressors::{
    init_params_with, CompressorState, DesignMode, ParamInit, ParamName, Preset, RegimeSpec,
};
use speccomp::eval::EvalConfig;
use speccomp::frontend::{FrameSpec, DEFAULT_SAMPLE_RATE};
use speccomp::trainer::{CorpusSpec, TrainConfig};

use crate::failure::{CliResult, Failure};

pub const SEED_ENV: &str = "SPECCOMP_SEED";

/// The seed from `SPECCOMP_SEED`, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::validation(format!("{SEED_ENV}: {e}"))),
    }
}

/// Precedence: flag, then environment, then `fallback`.
pub fn resolve_seed(flag: Option<u64>, fallback: u64) -> CliResult<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.unwrap_or(fallback),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Static,
    Cd,
    MrCd,
}

impl ModeName {
    pub fn design(self, regimes: usize) -> DesignMode {
        match self {
            Self::Static => DesignMode::Static,
            Self::Cd => DesignMode::ChannelDependent,
            Self::MrCd => DesignMode::MultiRegimeCD { regimes },
        }
    }
}

/// `name=value` argument.
pub fn parse_value(s: &str) -> Result<(ParamName, f64), String> {
    let (name, v) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let name = name.trim().parse::<ParamName>().map_err(|e| e.to_string())?;
    let v = v.trim().parse().map_err(|_| format!("bad number `{v}`"))?;
    Ok((name, v))
}

/// `name=min:max` argument.
pub fn parse_range(s: &str) -> Result<(ParamName, [f64; 2]), String> {
    let (name, r) = s.split_once('=').ok_or("expected NAME=MIN:MAX")?;
    let name = name.trim().parse::<ParamName>().map_err(|e| e.to_string())?;
    let (lo, hi) = r.split_once(':').ok_or("expected MIN:MAX")?;
    let lo = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    Ok((name, [lo, hi]))
}

/// Compressor initialization: a preset with optional per-parameter overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressorSection {
    pub preset: Preset,
    pub mode: ModeName,
    pub regimes: usize,
    /// Regime ranges for mr-cd, e.g. `alpha = [1.0, 3.0]`.
    pub ranges: BTreeMap<ParamName, [f64; 2]>,
    /// Constant initial values, e.g. `alpha = 4.0`.
    pub values: BTreeMap<ParamName, f64>,
    /// Start from this state file instead of the preset.
    pub init_state: Option<PathBuf>,
}

impl Default for CompressorSection {
    fn default() -> Self {
        Self {
            preset: Preset::CubeRoot,
            mode: ModeName::Cd,
            regimes: 3,
            ranges: BTreeMap::new(),
            values: BTreeMap::new(),
            init_state: None,
        }
    }
}

impl CompressorSection {
    pub fn design(&self) -> DesignMode {
        self.mode.design(self.regimes)
    }

    /// Builds the initial state; `beta_seed` drives offset-log draws.
    pub fn build(&self, n_channels: usize, beta_seed: u64) -> CliResult<CompressorState> {
        if let Some(path) = &self.init_state {
            let state = speccomp::io::read_state(path)?;
            if state.n_channels() != n_channels {
                return Err(Failure::validation(format!(
                    "{} has {} channels, the frontend produces {n_channels}",
                    path.display(),
                    state.n_channels()
                )));
            }
            return Ok(state);
        }
        let mode = self.design();
        let kind = self.preset.kind();
        let names = kind.param_names();
        for name in self.ranges.keys().chain(self.values.keys()) {
            if !names.contains(name) {
                return Err(Failure::validation(format!(
                    "{kind} has no parameter `{}`",
                    name.as_str()
                )));
            }
        }
        let mut inits = self.preset.default_inits(mode);
        for (init, name) in inits.iter_mut().zip(names) {
            if let ParamInit::StandardNormal { seed } = init {
                *seed = beta_seed;
            }
            match (self.values.get(name), self.ranges.get(name)) {
                (Some(_), Some(_)) => {
                    return Err(Failure::validation(format!(
                        "`{}` given both a value and a range",
                        name.as_str()
                    )))
                }
                (Some(&v), None) => *init = ParamInit::Constant(v),
                (None, Some(&[min, max])) => {
                    *init = ParamInit::Regimes(RegimeSpec {
                        min,
                        max,
                        n: mode.n_regimes(),
                    })
                }
                (None, None) => {}
            }
        }
        Ok(init_params_with(kind, mode, n_channels, &inits)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Render {
    /// Magnitudes generated directly.
    Spectrogram,
    /// Audio synthesized and passed through the STFT.
    Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendSection {
    pub window_len: usize,
    pub hop: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
}

impl Default for FrontendSection {
    fn default() -> Self {
        let f = FrameSpec::default();
        Self {
            window_len: f.window_len,
            hop: f.hop,
            n_fft: f.n_fft,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl FrontendSection {
    pub fn frame_spec(&self) -> CliResult<FrameSpec> {
        Ok(FrameSpec::new(self.window_len, self.hop, self.n_fft)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub duration_s: f64,
    pub speaker_spread: f64,
    pub session_spread: f64,
    pub render: Render,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let d = CorpusSpec::new(20, 10, 1.0, 0);
        Self {
            n_speakers: d.n_speakers,
            utts_per_speaker: d.utts_per_speaker,
            duration_s: d.duration_s,
            speaker_spread: d.speaker_spread,
            session_spread: d.session_spread,
            render: Render::Spectrogram,
        }
    }
}

/// Disjoint speakers scored after training; `n_speakers = 0` disables it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeldoutSection {
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
}

impl Default for HeldoutSection {
    fn default() -> Self {
        Self {
            n_speakers: 20,
            utts_per_speaker: 4,
        }
    }
}

/// Training hyperparameters; the shuffle seed is derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub s: f64,
    pub m: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub embedding_dim: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            s: d.s,
            m: d.m,
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            batch_size: d.batch_size,
            embedding_dim: d.embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
        }
    }
}

/// One training run, end to end.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub frontend: FrontendSection,
    pub compressor: CompressorSection,
    pub corpus: CorpusSection,
    pub heldout: HeldoutSection,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub output: OutputSection,
}

/// Seeds of the individual random streams, all derived from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub corpus: u64,
    pub heldout: u64,
    pub head: u64,
    pub shuffle: u64,
    pub beta: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Self {
        let mix = |salt: u64| seed ^ salt;
        Self {
            corpus: seed,
            heldout: mix(0x9e37_79b9_7f4a_7c15),
            head: mix(0x6a09_e667_f3bc_c908),
            shuffle: mix(0xbb67_ae85_84ca_a73b),
            beta: mix(0x3c6e_f372_fe94_f82b),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| Failure::validation(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        Self::parse(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::from_run(self.seed)
    }

    pub fn frame_spec(&self) -> CliResult<FrameSpec> {
        self.frontend.frame_spec()
    }

    pub fn corpus_spec(&self, n_channels: usize) -> CorpusSpec {
        CorpusSpec {
            n_speakers: self.corpus.n_speakers,
            utts_per_speaker: self.corpus.utts_per_speaker,
            duration_s: self.corpus.duration_s,
            n_channels,
            seed: self.seeds().corpus,
            speaker_spread: self.corpus.speaker_spread,
            session_spread: self.corpus.session_spread,
        }
    }

    pub fn heldout_spec(&self, n_channels: usize) -> Option<CorpusSpec> {
        (self.heldout.n_speakers > 0).then(|| CorpusSpec {
            n_speakers: self.heldout.n_speakers,
            utts_per_speaker: self.heldout.utts_per_speaker,
            seed: self.seeds().heldout,
            ..self.corpus_spec(n_channels)
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            s: t.s,
            m: t.m,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seeds().shuffle,
            embedding_dim: t.embedding_dim,
        }
    }

    /// Checks everything that can be checked before running.
    pub fn validate(&self) -> CliResult {
        let frames = self.frame_spec()?;
        if self.frontend.sample_rate == 0 {
            return Err(Failure::validation("sample rate must be positive"));
        }
        if self.corpus.render == Render::Waveform && self.frontend.sample_rate != DEFAULT_SAMPLE_RATE {
            return Err(Failure::validation(format!(
                "waveform corpus is rendered at {DEFAULT_SAMPLE_RATE} Hz, frontend expects {}",
                self.frontend.sample_rate
            )));
        }
        let f = frames.n_channels();
        self.corpus_spec(f).validate()?;
        if let Some(h) = self.heldout_spec(f) {
            h.validate()?;
        }
        // One class trains to zero loss, and one held-out speaker gives no
        // nontarget trials.
        if self.corpus.n_speakers < 2 {
            return Err(Failure::validation("training needs at least 2 speakers"));
        }
        if self.heldout.n_speakers == 1 {
            return Err(Failure::validation("held-out set needs 0 (disabled) or at least 2 speakers"));
        }
        self.train_config().validate()?;
        self.eval.validate()?;
        self.compressor.build(f, self.seeds().beta)?;
        Ok(())
    }
}
