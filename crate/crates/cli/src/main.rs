//! `densratio` command-line tool.
//!
//! Exit codes: 0 success, 1 contract error, 2 data or format error, 64 usage.

#![forbid(unsafe_code)]

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use densratio::Error;

mod args;
mod commands;
mod provenance;

use args::{Cli, Command};
use provenance::Provenance;

const EXIT_CONTRACT: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_USAGE: u8 = 64;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Contract(_) | Error::Diverged { .. } => EXIT_CONTRACT,
        Error::Data(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) => EXIT_DATA,
    }
}

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::Ingest(_) => "ingest",
        Command::Score(_) => "score",
        Command::Kl(_) => "kl",
        Command::Moments(_) => "moments",
        Command::Bootstrap(_) => "bootstrap",
        Command::Sweep(_) => "sweep",
        Command::Curate(_) => "curate",
        Command::Ngram(_) => "ngram",
        Command::ToyGen(_) => "toy-gen",
        Command::ToyTrain(_) => "toy-train",
        Command::ToyEval(_) => "toy-eval",
        Command::IwlWeights(_) => "iwl-weights",
        Command::IwlDemo(_) => "iwl-demo",
        Command::Correlate(_) => "correlate",
    }
}

fn run(cli: &Cli, prov: &mut Provenance) -> densratio::Result<()> {
    use commands as c;
    match &cli.command {
        Command::Ingest(a) => c::ingest(a, prov),
        Command::Score(a) => c::score(a, prov),
        Command::Kl(a) => c::kl(a, prov),
        Command::Moments(a) => c::moments(a, prov),
        Command::Bootstrap(a) => c::bootstrap_cmd(a, prov),
        Command::Sweep(a) => c::sweep(a, prov),
        Command::Curate(a) => c::curate(a, prov),
        Command::Ngram(a) => c::ngram(a, prov),
        Command::ToyGen(a) => c::toy_gen(a, prov),
        Command::ToyTrain(a) => c::toy_train(a, prov),
        Command::ToyEval(a) => c::toy_eval(a, prov),
        Command::IwlWeights(a) => c::iwl_weights(a, prov),
        Command::IwlDemo(a) => c::iwl_demo(a, prov),
        Command::Correlate(a) => c::correlate(a, prov),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let mut prov = Provenance::new(name_of(&cli.command), argv[1..].to_vec(), cli.threads);
    let result = run(&cli, &mut prov).and_then(|()| prov.emit(&commands::primary_output(&cli.command)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
