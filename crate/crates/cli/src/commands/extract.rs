use std::path::{Path, PathBuf};

use rayon::prelude::*;
use speccomp::compressors::CompressorState;
use speccomp::frontend::{load_wav, stft_magnitude, FrameSpec};
use speccomp::io::{read_state, FeatureFile};

use crate::config::FrontendSection;
use crate::failure::{create_dir, CliResult, Failure, RUNTIME, VALIDATION};

#[derive(clap::Args)]
pub struct Args {
    /// WAV files to process.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for `<stem>.feat` outputs.
    #[arg(long, short)]
    out_dir: PathBuf,
    /// Compress with this state; raw magnitudes otherwise.
    #[arg(long)]
    state: Option<PathBuf>,
    #[arg(long, default_value_t = FrontendSection::default().window_len)]
    window_len: usize,
    #[arg(long, default_value_t = FrontendSection::default().hop)]
    hop: usize,
    #[arg(long, default_value_t = FrontendSection::default().n_fft)]
    n_fft: usize,
    /// Expected sample rate; other rates are rejected rather than resampled.
    #[arg(long, default_value_t = FrontendSection::default().sample_rate)]
    sample_rate: u32,
}

pub fn output_path(out_dir: &Path, input: &Path) -> PathBuf {
    let stem = input.file_stem().unwrap_or(input.as_os_str());
    out_dir.join(stem).with_extension("feat")
}

fn extract_one(
    input: &Path,
    out: &Path,
    frame_spec: &FrameSpec,
    sample_rate: u32,
    state: Option<&CompressorState>,
) -> CliResult<FeatureFile> {
    let wave = load_wav(input)?;
    if wave.sample_rate() != sample_rate {
        return Err(Failure::validation(format!(
            "{}: sample rate {} Hz, expected {sample_rate} Hz",
            input.display(),
            wave.sample_rate()
        )));
    }
    let mags = stft_magnitude(&wave, frame_spec)?;
    let ff = match state {
        Some(s) => FeatureFile::from_matrix(&s.forward(&mags)?, *frame_spec, sample_rate, true),
        None => FeatureFile::from_matrix(mags.values(), *frame_spec, sample_rate, false),
    };
    ff.write(out)?;
    Ok(ff)
}

pub fn run(args: Args) -> CliResult {
    let frame_spec = FrameSpec::new(args.window_len, args.hop, args.n_fft)?;
    let state = args.state.as_deref().map(read_state).transpose()?;
    if let Some(s) = &state {
        if s.n_channels() != frame_spec.n_channels() {
            return Err(Failure::validation(format!(
                "state has {} channels, n_fft {} gives {}",
                s.n_channels(),
                frame_spec.n_fft,
                frame_spec.n_channels()
            )));
        }
    }
    let mut seen = std::collections::HashSet::new();
    for input in &args.inputs {
        let out = output_path(&args.out_dir, input);
        if !seen.insert(out.clone()) {
            return Err(Failure::validation(format!(
                "two inputs map to {}",
                out.display()
            )));
        }
    }
    create_dir(&args.out_dir)?;

    let results: Vec<(PathBuf, CliResult<FeatureFile>)> = args
        .inputs
        .par_iter()
        .map(|input| {
            let out = output_path(&args.out_dir, input);
            let r = extract_one(input, &out, &frame_spec, args.sample_rate, state.as_ref());
            (out, r)
        })
        .collect();

    let mut worst = 0;
    for (input, (out, r)) in args.inputs.iter().zip(results) {
        match r {
            Ok(ff) => println!(
                "{} -> {} ({} x {})",
                input.display(),
                out.display(),
                ff.n_frames(),
                ff.n_channels()
            ),
            Err(e) => {
                eprintln!("speccomp: {}: {e}", input.display());
                worst = worst.max(if e.code() == VALIDATION { VALIDATION } else { RUNTIME });
            }
        }
    }
    if worst == 0 {
        Ok(())
    } else {
        Err(Failure::Reported(worst))
    }
}
