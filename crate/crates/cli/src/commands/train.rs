use std::path::{Path, PathBuf};

use serde::Serialize;
use speccomp::compressors::{CompressorState, Preset};
use speccomp::eval::EvalReport;
use speccomp::io::{write_state, ParamTable};
use speccomp::trainer::{
    corpus_from_waves, evaluate_corpus, gen_synthetic_corpus, gen_synthetic_waves, train_joint,
    CorpusSpec, EmbeddingHead, SyntheticCorpus,
};

use crate::config::{env_seed, ModeName, Render, RunConfig, Seeds};
use crate::failure::{create_dir, write_json, CliResult, Failure};

pub const REPORT_FILE: &str = "report.json";
pub const HEAD_FILE: &str = "head.json";
pub const INITIAL_STATE_FILE: &str = "state_initial.scst";
pub const FINAL_STATE_FILE: &str = "state_final.scst";
pub const FINAL_PARAMS_FILE: &str = "params_final.csv";

#[derive(clap::Args)]
pub struct Args {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run seed (overrides SPECCOMP_SEED and the config).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    #[arg(long)]
    regimes: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    utts_per_speaker: Option<usize>,
}

/// Config file, then SPECCOMP_SEED, then flags.
pub fn resolve_config(args: &Args) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.out_dir {
        cfg.output.dir = v.clone();
    }
    if let Some(v) = args.preset {
        cfg.compressor.preset = v;
    }
    if let Some(v) = args.mode {
        cfg.compressor.mode = v;
    }
    if let Some(v) = args.regimes {
        cfg.compressor.regimes = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.speakers {
        cfg.corpus.n_speakers = v;
    }
    if let Some(v) = args.utts_per_speaker {
        cfg.corpus.utts_per_speaker = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_corpus(cfg: &RunConfig, spec: &CorpusSpec) -> CliResult<SyntheticCorpus> {
    Ok(match cfg.corpus.render {
        Render::Spectrogram => gen_synthetic_corpus(spec)?,
        Render::Waveform => {
            let frames = cfg.frame_spec()?;
            let waves = gen_synthetic_waves(spec, &frames)?;
            corpus_from_waves(&waves, &frames, spec.n_speakers, spec.seed)?
        }
    })
}

#[derive(Serialize)]
struct HeldoutScores {
    n_speakers: usize,
    n_utterances: usize,
    /// Initial compressor and head, untrained.
    frozen: EvalReport,
    trained: EvalReport,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a RunConfig,
    seeds: Seeds,
    n_utterances: usize,
    loss_history: &'a [f64],
    param_trajectory: &'a [CompressorState],
    final_state: &'a CompressorState,
    heldout: Option<&'a HeldoutScores>,
}

#[derive(Serialize)]
pub struct HeadFile<'a> {
    pub config: &'a RunConfig,
    pub head: &'a EmbeddingHead,
}

fn out(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn run(args: Args) -> CliResult {
    let cfg = resolve_config(&args)?;
    let seeds = cfg.seeds();
    let frames = cfg.frame_spec()?;
    let f = frames.n_channels();
    let train_cfg = cfg.train_config();

    let corpus = build_corpus(&cfg, &cfg.corpus_spec(f))?;
    let state = cfg.compressor.build(f, seeds.beta)?;
    let head = EmbeddingHead::new(f, train_cfg.embedding_dim, corpus.n_speakers, seeds.head)?;

    let dir = &cfg.output.dir;
    create_dir(dir)?;
    write_state(&state, out(dir, INITIAL_STATE_FILE))?;

    let report = train_joint(&corpus, &state, &head, &train_cfg).map_err(Failure::from)?;

    let heldout = match cfg.heldout_spec(f) {
        Some(spec) => {
            let test = build_corpus(&cfg, &spec)?;
            Some(HeldoutScores {
                n_speakers: spec.n_speakers,
                n_utterances: test.len(),
                frozen: evaluate_corpus(&test, &state, &head, &cfg.eval)?,
                trained: evaluate_corpus(&test, &report.final_state, &report.final_head, &cfg.eval)?,
            })
        }
        None => None,
    };

    write_state(&report.final_state, out(dir, FINAL_STATE_FILE))?;
    ParamTable::from_state(&report.final_state).write(out(dir, FINAL_PARAMS_FILE))?;
    write_json(
        &HeadFile {
            config: &cfg,
            head: &report.final_head,
        },
        &out(dir, HEAD_FILE),
    )?;
    write_json(
        &Report {
            config: &cfg,
            seeds,
            n_utterances: corpus.len(),
            loss_history: &report.loss_history,
            param_trajectory: &report.param_trajectory,
            final_state: &report.final_state,
            heldout: heldout.as_ref(),
        },
        &out(dir, REPORT_FILE),
    )?;

    for (epoch, loss) in report.loss_history.iter().enumerate() {
        println!("epoch {epoch:>3}  loss {loss:.6}");
    }
    if let Some(h) = &heldout {
        println!(
            "held-out EER: frozen {:.2}%  trained {:.2}%",
            100.0 * h.frozen.eer,
            100.0 * h.trained.eer
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}
