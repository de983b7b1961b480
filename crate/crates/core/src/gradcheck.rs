//! Finite-difference verification of the analytic compressor gradients.
//!
//! Every `y[t, f]` depends only on `x[t, f]` and the parameter entries of
//! channel `f`, so perturbing a whole parameter vector (or the whole input)
//! at once yields all per-element partials from two forward passes. Each
//! regime and parameter is perturbed separately.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::compressors::{
    CompressorKind, CompressorState, DesignMode, GradientBundle, ParamName, ParamVector,
    DEFAULT_INPUT_FLOOR,
};
use crate::error::Result;
use crate::frontend::Spectrogram;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted error, see [`relative_error`].
    pub tolerance: f64,
    /// Minimum number of checked (element, parameter) pairs.
    pub min_points: usize,
    pub frames: usize,
    pub channels: usize,
    /// Number of regimes drawn for multi-regime mode.
    pub regimes: usize,
    /// Check `dy/dx` as well as the parameter partials.
    pub check_input: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-5,
            min_points: 1000,
            frames: 8,
            channels: 16,
            regimes: 3,
            check_input: true,
        }
    }
}

/// What a checked partial is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Wrt {
    Param { regime: usize, name: ParamName },
    Input,
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub wrt: Wrt,
    pub x: f64,
    /// Parameter values of the regime at the offending channel.
    pub params: Vec<(ParamName, f64)>,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub kind: CompressorKind,
    pub mode: DesignMode,
    pub points: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `|a - n| / max(|a|, |n|, 1)`: relative for partials of magnitude above
/// one, absolute below. Finite-difference round-off scales with `|y| / step`
/// rather than with the partial, so a pure ratio is meaningless wherever a
/// partial crosses zero (for instance `dy/dalpha` at `x = 1`).
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Draws a random valid state on the gradient-check domain:
/// `alpha` in `[0.2, 15]`, `delta` in `[0.1, 3]`, `r` in `[0.01, 1]`,
/// `beta` in `[-3, 3]`. In multi-regime DRC the first regime has `r = 0`
/// exactly.
pub fn random_state(
    kind: CompressorKind,
    mode: DesignMode,
    channels: usize,
    rng: &mut impl Rng,
) -> Result<CompressorState> {
    let len = mode.param_len(channels);
    let n_regimes = mode.n_regimes();
    let regimes = (0..n_regimes)
        .map(|regime| {
            kind.param_names()
                .iter()
                .map(|&name| {
                    ParamVector::new(
                        (0..len)
                            .map(|_| match name {
                                ParamName::Alpha => rng.random_range(0.2..15.0),
                                ParamName::Delta => rng.random_range(0.1..3.0),
                                ParamName::R if regime == 0 && n_regimes > 1 => 0.0,
                                ParamName::R => rng.random_range(0.01..1.0),
                                ParamName::Beta => rng.random_range(-3.0..3.0),
                            })
                            .collect(),
                    )
                })
                .collect()
        })
        .collect();
    CompressorState::new(kind, mode, channels, regimes, DEFAULT_INPUT_FLOOR)
}

/// Log-uniform magnitudes on `[1e-3, 1e2]`.
pub fn random_input(frames: usize, channels: usize, rng: &mut impl Rng) -> Spectrogram {
    let values = Array2::from_shape_fn((frames, channels), |_| {
        10f64.powf(rng.random_range(-3.0..2.0))
    });
    Spectrogram::new(values).expect("positive finite by construction")
}

/// Checks the analytic gradients of `state.gradients` against finite
/// differences of `state.forward`.
pub fn check_state(
    state: &CompressorState,
    x: &Spectrogram,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    check_state_with(state, x, cfg, |s, x| s.gradients(x))
}

/// As [`check_state`] but with a caller-supplied analytic gradient, so a
/// deliberately broken implementation can be fed through the same harness.
pub fn check_state_with(
    state: &CompressorState,
    x: &Spectrogram,
    cfg: &GradCheckConfig,
    analytic: impl Fn(&CompressorState, &Spectrogram) -> Result<GradientBundle>,
) -> Result<GradCheckReport> {
    let bundle = analytic(state, x)?;
    let names = state.kind().param_names();
    let len = state.mode().param_len(state.n_channels());
    let h = cfg.step;
    let mut report = GradCheckReport {
        kind: state.kind(),
        mode: state.mode(),
        points: 0,
        max_error: 0.0,
        tolerance: cfg.tolerance,
        violations: Vec::new(),
    };

    let regime_params = |regime: usize, f: usize| -> Vec<(ParamName, f64)> {
        names
            .iter()
            .zip(&state.regimes()[regime])
            .map(|(&n, p)| (n, p.at(f)))
            .collect()
    };
    let mut record = |wrt: Wrt, t: usize, f: usize, a: f64, n: f64, params: Vec<(ParamName, f64)>| {
        let err = relative_error(a, n);
        report.points += 1;
        if err.is_nan() || err > report.max_error {
            report.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= cfg.tolerance) {
            report.violations.push(Violation {
                wrt,
                x: x.values()[(t, f)],
                params,
                analytic: a,
                numeric: n,
                error: err,
            });
        }
    };

    // Each regime is differenced through its own single-regime forward and
    // scaled by 1/N. Differencing the full average instead lets round-off
    // from large outputs of the other regimes swamp small partials.
    let inv_n = 1.0 / state.n_regimes() as f64;
    let single_mode = match state.mode() {
        DesignMode::Static => DesignMode::Static,
        _ => DesignMode::ChannelDependent,
    };
    for regime in 0..state.n_regimes() {
        let mut probe = CompressorState::new(
            state.kind(),
            single_mode,
            state.n_channels(),
            vec![state.regimes()[regime].clone()],
            state.input_floor(),
        )?;
        let base = probe.forward(x)?;
        let mut flat = probe.flat_params();
        for (k, &name) in names.iter().enumerate() {
            let range = k * len..(k + 1) * len;
            // One-sided where the lower side would leave the domain (r = 0).
            let lower_ok = flat[range.clone()].iter().all(|&v| name.admits(v - h));
            let saved = flat[range.clone()].to_vec();
            let numeric = if lower_ok {
                flat[range.clone()].iter_mut().for_each(|v| *v += h);
                probe.set_flat_params(&flat)?;
                let plus = probe.forward(x)?;
                flat[range.clone()].copy_from_slice(&saved);
                flat[range.clone()].iter_mut().for_each(|v| *v -= h);
                probe.set_flat_params(&flat)?;
                let minus = probe.forward(x)?;
                (plus - minus) * (inv_n / (2.0 * h))
            } else {
                flat[range.clone()].iter_mut().for_each(|v| *v += h);
                probe.set_flat_params(&flat)?;
                let plus = probe.forward(x)?;
                (plus - &base) * (inv_n / h)
            };
            flat[range].copy_from_slice(&saved);
            probe.set_flat_params(&flat)?;

            // With a shared scalar (static mode) every element moves and each
            // element's sensitivity is compared separately.
            let analytic = &bundle.d_output_d_param[regime][k];
            for ((t, f), &n) in numeric.indexed_iter() {
                record(Wrt::Param { regime, name }, t, f, analytic[(t, f)], n, regime_params(regime, f));
            }
        }
    }

    if cfg.check_input {
        let shift = |d: f64| Spectrogram::new(x.values().mapv(|v| v + d));
        let plus = state.forward(&shift(h)?)?;
        let minus = state.forward(&shift(-h)?)?;
        let numeric = (plus - minus) / (2.0 * h);
        for ((t, f), &n) in numeric.indexed_iter() {
            record(Wrt::Input, t, f, bundle.d_output_d_input[(t, f)], n, regime_params(0, f));
        }
    }
    Ok(report)
}

/// Runs randomized checks for `kind` in `mode` until at least
/// `cfg.min_points` partials have been compared. Inputs stay at least `1e-3`
/// so the input floor is never active.
pub fn check_compressor(
    kind: CompressorKind,
    mode: DesignMode,
    seed: u64,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    check_compressor_with(kind, mode, seed, cfg, |s, x| s.gradients(x))
}

pub fn check_compressor_with(
    kind: CompressorKind,
    mode: DesignMode,
    seed: u64,
    cfg: &GradCheckConfig,
    analytic: impl Fn(&CompressorState, &Spectrogram) -> Result<GradientBundle> + Copy,
) -> Result<GradCheckReport> {
    let mode = match mode {
        DesignMode::MultiRegimeCD { .. } => DesignMode::MultiRegimeCD {
            regimes: cfg.regimes.max(1),
        },
        m => m,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = GradCheckReport {
        kind,
        mode,
        points: 0,
        max_error: 0.0,
        tolerance: cfg.tolerance,
        violations: Vec::new(),
    };
    while total.points < cfg.min_points {
        let state = random_state(kind, mode, cfg.channels, &mut rng)?;
        let x = random_input(cfg.frames, cfg.channels, &mut rng);
        let r = check_state_with(&state, &x, cfg, analytic)?;
        if r.points == 0 {
            break;
        }
        total.points += r.points;
        total.max_error = total.max_error.max(r.max_error);
        total.violations.extend(r.violations);
    }
    Ok(total)
}
