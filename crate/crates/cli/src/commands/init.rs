use std::collections::BTreeMap;
use std::path::PathBuf;

use speccomp::compressors::{ParamName, Preset};
use speccomp::frontend::DEFAULT_CHANNELS;
use speccomp::io::write_state;

use crate::config::{parse_range, parse_value, resolve_seed, CompressorSection, ModeName};
use crate::failure::CliResult;

#[derive(clap::Args)]
pub struct Args {
    /// log, offset-log, cube-root, power-law or drc.
    #[arg(long)]
    preset: Preset,
    #[arg(long, value_enum, default_value_t = ModeName::Cd)]
    mode: ModeName,
    /// Number of regimes in mr-cd mode.
    #[arg(long, default_value_t = 3)]
    regimes: usize,
    /// Regime range, e.g. `alpha=1:3` (mr-cd only). Repeatable.
    #[arg(long = "range", value_parser = parse_range)]
    ranges: Vec<(ParamName, [f64; 2])>,
    /// Constant initial value, e.g. `alpha=4`. Repeatable.
    #[arg(long = "value", value_parser = parse_value)]
    values: Vec<(ParamName, f64)>,
    #[arg(long, default_value_t = DEFAULT_CHANNELS)]
    channels: usize,
    /// Seed for offset-log draws (overrides SPECCOMP_SEED).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

pub fn run(args: Args) -> CliResult {
    let section = CompressorSection {
        preset: args.preset,
        mode: args.mode,
        regimes: args.regimes,
        ranges: args.ranges.into_iter().collect::<BTreeMap<_, _>>(),
        values: args.values.into_iter().collect::<BTreeMap<_, _>>(),
        init_state: None,
    };
    let seed = resolve_seed(args.seed, speccomp::compressors::DEFAULT_BETA_SEED)?;
    let state = section.build(args.channels, seed)?;
    write_state(&state, &args.out)?;
    println!(
        "{} {} with {} regime(s) x {} channel(s) -> {}",
        args.preset,
        state.mode().as_str(),
        state.n_regimes(),
        state.n_channels(),
        args.out.display()
    );
    Ok(())
}
