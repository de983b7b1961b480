use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use speccomp::compressors::CompressorState;
use speccomp::eval::{evaluate, EvalConfig, EvalReport, ScoreSet, TrialList};
use speccomp::io::{read_embeddings, read_state, write_embeddings, FeatureFile};
use speccomp::trainer::{embed, EmbeddingHead};

use crate::failure::{write_json, CliResult, Failure};

/// How many missing ids are listed before truncating.
const SHOWN_MISSING: usize = 50;

#[derive(clap::Args)]
pub struct Args {
    /// Trial list (`label enroll test` per line). Repeatable.
    #[arg(long = "trials", required = true)]
    trials: Vec<PathBuf>,
    /// Precomputed embeddings (`id v1 ... vD` per line).
    #[arg(long, conflicts_with_all = ["features_dir", "head", "state"])]
    embeddings: Option<PathBuf>,
    /// Directory of `<id>.feat` files, embedded with `--head`.
    #[arg(long, requires = "head")]
    features_dir: Option<PathBuf>,
    /// Head JSON as written by `train`.
    #[arg(long, requires = "features_dir")]
    head: Option<PathBuf>,
    /// Compressor for raw-magnitude feature files.
    #[arg(long, requires = "features_dir")]
    state: Option<PathBuf>,
    #[arg(long, default_value_t = EvalConfig::default().p_tar)]
    p_tar: f64,
    #[arg(long, default_value_t = EvalConfig::default().c_fa)]
    c_fa: f64,
    #[arg(long, default_value_t = EvalConfig::default().c_miss)]
    c_miss: f64,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the embeddings used for scoring here.
    #[arg(long)]
    write_embeddings: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HeadInput {
    Wrapped { head: EmbeddingHead },
    Bare(EmbeddingHead),
}

fn read_head(path: &Path) -> CliResult<EmbeddingHead> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    match serde_json::from_str(&text) {
        Ok(HeadInput::Wrapped { head } | HeadInput::Bare(head)) => Ok(head),
        Err(e) => Err(Failure::validation(format!("{}: not a head file: {e}", path.display()))),
    }
}

fn embed_features(
    dir: &Path,
    head: &EmbeddingHead,
    state: Option<&CompressorState>,
) -> CliResult<HashMap<String, Vec<f64>>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Failure::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "feat") {
            files.push(path);
        }
    }
    files.sort();
    files
        .par_iter()
        .map(|path| {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Failure::validation(format!("{}: non-UTF-8 name", path.display())))?
                .to_string();
            let ff = FeatureFile::read(path)?;
            let y = match (ff.compressed, state) {
                (true, None) => ff.to_f64(),
                (false, Some(s)) => s.forward(&ff.to_spectrogram()?)?,
                (true, Some(_)) => {
                    return Err(Failure::validation(format!(
                        "{}: already compressed, drop --state",
                        path.display()
                    )))
                }
                (false, None) => {
                    return Err(Failure::validation(format!(
                        "{}: raw magnitudes need --state",
                        path.display()
                    )))
                }
            };
            let e = embed(&y, head).map_err(|e| Failure::from(e).context(path))?;
            Ok((id, e.to_vec()))
        })
        .collect()
}

#[derive(Serialize)]
struct ListResult {
    trials: PathBuf,
    report: EvalReport,
}

#[derive(Serialize)]
struct Echo<'a> {
    trials: &'a [PathBuf],
    embeddings: Option<&'a Path>,
    features_dir: Option<&'a Path>,
    head: Option<&'a Path>,
    state: Option<&'a Path>,
    eval: EvalConfig,
}

#[derive(Serialize)]
struct Output<'a> {
    config: Echo<'a>,
    lists: Vec<ListResult>,
    pooled: EvalReport,
}

fn print_table(lists: &[ListResult], pooled: &EvalReport) {
    let width = lists
        .iter()
        .map(|l| l.trials.display().to_string().len())
        .max()
        .unwrap_or(0)
        .max("pooled".len());
    println!("{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}", "trials", "targets", "nontgts", "EER(%)", "minDCF");
    let row = |name: &str, r: &EvalReport| {
        println!(
            "{name:<width$}  {:>8}  {:>8}  {:>8.3}  {:>8.4}",
            r.n_target,
            r.n_nontarget,
            100.0 * r.eer,
            r.min_dcf
        )
    };
    for l in lists {
        row(&l.trials.display().to_string(), &l.report);
    }
    if lists.len() > 1 {
        row("pooled", pooled);
    }
}

pub fn run(args: Args) -> CliResult {
    let eval_cfg = EvalConfig {
        p_tar: args.p_tar,
        c_fa: args.c_fa,
        c_miss: args.c_miss,
    };
    eval_cfg.validate()?;
    let lists = args
        .trials
        .iter()
        .map(|p| TrialList::read(p).map_err(Failure::from))
        .collect::<CliResult<Vec<_>>>()?;

    let embeddings = match (&args.embeddings, &args.features_dir, &args.head) {
        (Some(path), _, _) => read_embeddings(path)?,
        (None, Some(dir), Some(head)) => {
            let state = args.state.as_deref().map(read_state).transpose()?;
            embed_features(dir, &read_head(head)?, state.as_ref())?
        }
        _ => {
            return Err(Failure::validation(
                "give --embeddings, or --features-dir with --head",
            ))
        }
    };
    if let Some(path) = &args.write_embeddings {
        write_embeddings(&embeddings, path)?;
    }

    let mut missing: Vec<String> = lists.iter().flat_map(|l| l.missing_ids(&embeddings)).collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(SHOWN_MISSING).map(String::as_str).collect();
        let more = missing.len().saturating_sub(SHOWN_MISSING);
        let tail = if more > 0 { format!(" (and {more} more)") } else { String::new() };
        return Err(Failure::validation(format!(
            "{} trial id(s) have no embedding: {}{tail}",
            missing.len(),
            shown.join(", ")
        )));
    }

    let scores = lists
        .iter()
        .map(|l| l.score(&embeddings).map_err(Failure::from))
        .collect::<CliResult<Vec<ScoreSet>>>()?;
    let results: Vec<ListResult> = args
        .trials
        .iter()
        .zip(&scores)
        .map(|(p, s)| ListResult {
            trials: p.clone(),
            report: evaluate(s, &eval_cfg),
        })
        .collect();
    let pooled = evaluate(&ScoreSet::pooled(&scores)?, &eval_cfg);
    print_table(&results, &pooled);

    if let Some(path) = &args.json {
        let output = Output {
            config: Echo {
                trials: &args.trials,
                embeddings: args.embeddings.as_deref(),
                features_dir: args.features_dir.as_deref(),
                head: args.head.as_deref(),
                state: args.state.as_deref(),
                eval: eval_cfg,
            },
            lists: results,
            pooled,
        };
        write_json(&output, path)?;
    }
    Ok(())
}
