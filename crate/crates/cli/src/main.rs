use clap::Parser;

use expaft_cli::args::Cli;
use expaft_cli::run;

fn main() {
    let cli = Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprint!("{}", run::error_json(&err));
            std::process::exit(err.exit_code());
        }
    }
}
