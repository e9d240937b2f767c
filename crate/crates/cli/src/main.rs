use clap::error::ErrorKind;
use clap::Parser;
use pacmetric_cli::{run, Cli, CliError};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => fail(&CliError::Usage(e.to_string())),
    };
    if let Err(e) = run(&cli) {
        fail(&e);
    }
}

fn fail(e: &CliError) -> ! {
    eprintln!("{}", e.record());
    std::process::exit(e.exit_code());
}
