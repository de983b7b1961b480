use std::path::PathBuf;

use speccomp::io::{read_state, ParamTable};

use crate::failure::CliResult;

#[derive(clap::Args)]
pub struct Args {
    /// Compressor state file.
    state: PathBuf,
    /// Write here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub fn run(args: Args) -> CliResult {
    let table = ParamTable::from_state(&read_state(&args.state)?);
    match args.out {
        Some(path) => table.write(path)?,
        None => print!("{}", table.to_csv()),
    }
    Ok(())
}
