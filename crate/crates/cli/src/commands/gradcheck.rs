use std::path::PathBuf;

use serde::Serialize;
use speccomp::compressors::{CompressorKind, CompressorState};
use speccomp::frontend::Spectrogram;
use speccomp::gradcheck::{check_compressor_with, GradCheckConfig, GradCheckReport, Wrt};

use crate::config::{resolve_seed, ModeName};
use crate::failure::{write_json, CliResult, Failure, RUNTIME};

const SHOWN_VIOLATIONS: usize = 10;

#[derive(clap::Args)]
pub struct Args {
    /// Compressor kind; all kinds when omitted.
    #[arg(long)]
    kind: Option<CompressorKind>,
    /// Design mode; all modes when omitted.
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    #[arg(long, default_value_t = 3)]
    regimes: usize,
    /// Overrides SPECCOMP_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum number of compared partials per kind and mode.
    #[arg(long, default_value_t = GradCheckConfig::default().min_points)]
    points: usize,
    #[arg(long, default_value_t = GradCheckConfig::default().tolerance)]
    tolerance: f64,
    /// Also write the full reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Negates the parameter gradients; the check must then fail.
    #[arg(long, hide = true)]
    inject_wrong_sign: bool,
}

#[derive(Serialize)]
struct Output<'a> {
    seed: u64,
    points: usize,
    tolerance: f64,
    passed: bool,
    reports: &'a [GradCheckReport],
}

fn describe(wrt: Wrt) -> String {
    match wrt {
        Wrt::Input => "dy/dx".into(),
        Wrt::Param { regime, name } => format!("dy/d{}[{regime}]", name.as_str()),
    }
}

pub fn run(args: Args) -> CliResult {
    if args.regimes < 2 {
        return Err(Failure::validation("mr-cd needs at least 2 regimes"));
    }
    if !(args.tolerance > 0.0) || args.points == 0 {
        return Err(Failure::validation("tolerance and points must be positive"));
    }
    let seed = resolve_seed(args.seed, 0)?;
    let cfg = GradCheckConfig {
        min_points: args.points,
        tolerance: args.tolerance,
        regimes: args.regimes,
        ..Default::default()
    };
    let kinds = args.kind.map_or(CompressorKind::ALL.to_vec(), |k| vec![k]);
    let modes = args
        .mode
        .map_or(vec![ModeName::Static, ModeName::Cd, ModeName::MrCd], |m| vec![m]);
    let wrong = args.inject_wrong_sign;
    let analytic = move |s: &CompressorState, x: &Spectrogram| {
        let mut g = s.gradients(x)?;
        if wrong {
            g.d_output_d_param
                .iter_mut()
                .flatten()
                .for_each(|m| m.mapv_inplace(|v| -v));
        }
        Ok(g)
    };

    let mut reports = Vec::new();
    for &kind in &kinds {
        for &mode in &modes {
            let r = check_compressor_with(kind, mode.design(args.regimes), seed, &cfg, analytic)?;
            println!(
                "{:<10} {:<6} points={:<6} max_err={:.3e} tol={:.0e} {}",
                kind.as_str(),
                r.mode.as_str(),
                r.points,
                r.max_error,
                r.tolerance,
                if r.passed() { "PASS" } else { "FAIL" }
            );
            for v in r.violations.iter().take(SHOWN_VIOLATIONS) {
                let params: Vec<String> = v
                    .params
                    .iter()
                    .map(|(n, p)| format!("{}={p:.6}", n.as_str()))
                    .collect();
                println!(
                    "    {} at x={:.6e} {}: analytic={:.9e} numeric={:.9e} err={:.3e}",
                    describe(v.wrt),
                    v.x,
                    params.join(" "),
                    v.analytic,
                    v.numeric,
                    v.error
                );
            }
            if r.violations.len() > SHOWN_VIOLATIONS {
                println!("    ... {} more", r.violations.len() - SHOWN_VIOLATIONS);
            }
            reports.push(r);
        }
    }
    let passed = reports.iter().all(GradCheckReport::passed);
    if let Some(path) = &args.json {
        write_json(
            &Output {
                seed,
                points: args.points,
                tolerance: args.tolerance,
                passed,
                reports: &reports,
            },
            path,
        )?;
    }
    if passed {
        Ok(())
    } else {
        eprintln!("speccomp: gradient check failed");
        Err(Failure::Reported(RUNTIME))
    }
}
