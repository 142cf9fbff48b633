use std::process::ExitCode;

use clap::Parser;
use netfilter::cli::Cli;
use netfilter::commands;
use netfilter::io::Provenance;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NETFILTER_LOG", "info"))
        .format_timestamp(None)
        .init();
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let invocation = std::iter::once("netfilter").chain(args.iter().skip(1).map(String::as_str));
    match commands::run(&cli, Provenance::new(invocation)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
