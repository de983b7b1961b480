//! Python bindings: compressors, STFT front-end, verification metrics and
//! the gradient checker. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use speccomp::compressors::{self, CompressorKind, CompressorState, DesignMode, ParamInit, Preset};
use speccomp::eval::{self, EvalConfig, ScoreSet};
use speccomp::frontend::{self, FrameSpec, Spectrogram, Waveform};
use speccomp::gradcheck::{check_compressor, GradCheckConfig};
use speccomp::io::{read_state, write_state, ParamTable};
use speccomp::trainer;

type Rows = Vec<Vec<f64>>;

fn py_err(e: speccomp::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn spectrogram(x: Vec<Vec<f64>>) -> PyResult<Spectrogram> {
    Spectrogram::new(matrix(x)?).map_err(py_err)
}

fn design(mode: &str, regimes: usize) -> PyResult<DesignMode> {
    match mode {
        "static" => Ok(DesignMode::Static),
        "cd" => Ok(DesignMode::ChannelDependent),
        "mr-cd" => Ok(DesignMode::MultiRegimeCD { regimes }),
        other => Err(PyValueError::new_err(format!("unknown mode `{other}` (static, cd, mr-cd)"))),
    }
}

fn parse<T: std::str::FromStr<Err = speccomp::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

/// A configured spectrogram compressor.
#[pyclass(frozen)]
struct Compressor {
    state: CompressorState,
}

#[pymethods]
impl Compressor {
    /// Preset initialization; `seed` drives the offset-log draws.
    #[staticmethod]
    #[pyo3(signature = (preset, mode = "cd", regimes = 3, channels = 257, seed = compressors::DEFAULT_BETA_SEED))]
    fn init(preset: &str, mode: &str, regimes: usize, channels: usize, seed: u64) -> PyResult<Self> {
        let preset: Preset = parse(preset)?;
        let mode = design(mode, regimes)?;
        let inits: Vec<ParamInit> = preset
            .default_inits(mode)
            .into_iter()
            .map(|i| match i {
                ParamInit::StandardNormal { .. } => ParamInit::StandardNormal { seed },
                other => other,
            })
            .collect();
        let state = compressors::init_params_with(preset.kind(), mode, channels, &inits).map_err(py_err)?;
        Ok(Self { state })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            state: read_state(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        write_state(&self.state, path).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.state.kind().as_str()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.state.mode().as_str()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.state.n_channels()
    }

    #[getter]
    fn n_regimes(&self) -> usize {
        self.state.n_regimes()
    }

    /// `{"alpha_0": [...], ...}`, one entry per regime and parameter.
    fn params(&self) -> HashMap<String, Vec<f64>> {
        let mut out = HashMap::new();
        for (i, regime) in self.state.regimes().iter().enumerate() {
            for (name, v) in self.state.kind().param_names().iter().zip(regime) {
                out.insert(format!("{}_{i}", name.as_str()), v.as_slice().to_vec());
            }
        }
        out
    }

    fn forward(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let y = self.state.forward(&spectrogram(x)?).map_err(py_err)?;
        Ok(rows(&y))
    }

    /// `(param_partials, input_partials)`; the first maps `"alpha_0"`-style
    /// keys to `T x F` matrices of elementwise partials.
    fn gradients(&self, x: Rows) -> PyResult<(HashMap<String, Rows>, Rows)> {
        let g = self.state.gradients(&spectrogram(x)?).map_err(py_err)?;
        let mut params = HashMap::new();
        for (i, regime) in g.d_output_d_param.iter().enumerate() {
            for (name, m) in self.state.kind().param_names().iter().zip(regime) {
                params.insert(format!("{}_{i}", name.as_str()), rows(m));
            }
        }
        Ok((params, rows(&g.d_output_d_input)))
    }

    fn to_csv(&self) -> String {
        ParamTable::from_state(&self.state).to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Compressor(kind={}, mode={}, regimes={}, channels={})",
            self.kind(),
            self.mode(),
            self.n_regimes(),
            self.n_channels()
        )
    }
}

/// STFT magnitudes as `T x F` rows.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate = 16000, window_len = 400, hop = 160, n_fft = 512))]
fn stft_magnitude(
    samples: Vec<f64>,
    sample_rate: u32,
    window_len: usize,
    hop: usize,
    n_fft: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = FrameSpec::new(window_len, hop, n_fft).map_err(py_err)?;
    let wave = Waveform::new(samples, sample_rate).map_err(py_err)?;
    Ok(rows(frontend::stft_magnitude(&wave, &spec).map_err(py_err)?.values()))
}

/// `(samples, sample_rate)`, multichannel files averaged to mono.
#[pyfunction]
fn load_wav(path: &str) -> PyResult<(Vec<f64>, u32)> {
    let w = frontend::load_wav(path).map_err(py_err)?;
    Ok((w.samples().to_vec(), w.sample_rate()))
}

/// `(eer, threshold)`.
#[pyfunction]
fn compute_eer(target: Vec<f64>, nontarget: Vec<f64>) -> PyResult<(f64, f64)> {
    Ok(eval::compute_eer(&ScoreSet::new(target, nontarget).map_err(py_err)?))
}

/// `(min_dcf, threshold)`.
#[pyfunction]
#[pyo3(signature = (target, nontarget, p_tar = 0.01, c_fa = 1.0, c_miss = 1.0))]
fn compute_min_dcf(target: Vec<f64>, nontarget: Vec<f64>, p_tar: f64, c_fa: f64, c_miss: f64) -> PyResult<(f64, f64)> {
    let cfg = EvalConfig { p_tar, c_fa, c_miss };
    cfg.validate().map_err(py_err)?;
    Ok(eval::compute_min_dcf(&ScoreSet::new(target, nontarget).map_err(py_err)?, &cfg))
}

/// Mean AAM-softmax loss; `class_weights` is `D x C`.
#[pyfunction]
#[pyo3(signature = (embeddings, labels, class_weights, s = 30.0, m = 0.2))]
fn aam_softmax_loss(
    embeddings: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_weights: Vec<Vec<f64>>,
    s: f64,
    m: f64,
) -> PyResult<f64> {
    let out = trainer::aam_softmax_loss(&matrix(embeddings)?, &labels, &matrix(class_weights)?, s, m)
        .map_err(py_err)?;
    Ok(out.loss)
}

/// Randomized finite-difference check; returns
/// `(passed, points, max_error, n_violations)`.
#[pyfunction]
#[pyo3(signature = (kind, mode = "cd", regimes = 3, seed = 0, points = 1000, tolerance = 1e-5))]
fn gradcheck(
    kind: &str,
    mode: &str,
    regimes: usize,
    seed: u64,
    points: usize,
    tolerance: f64,
) -> PyResult<(bool, usize, f64, usize)> {
    let kind: CompressorKind = parse(kind)?;
    let cfg = GradCheckConfig {
        min_points: points,
        tolerance,
        regimes,
        ..Default::default()
    };
    let r = check_compressor(kind, design(mode, regimes)?, seed, &cfg).map_err(py_err)?;
    Ok((r.passed(), r.points, r.max_error, r.violations.len()))
}

#[pymodule]
fn speccomp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Compressor>()?;
    m.add_function(wrap_pyfunction!(stft_magnitude, m)?)?;
    m.add_function(wrap_pyfunction!(load_wav, m)?)?;
    m.add_function(wrap_pyfunction!(compute_eer, m)?)?;
    m.add_function(wrap_pyfunction!(compute_min_dcf, m)?)?;
    m.add_function(wrap_pyfunction!(aam_softmax_loss, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
