use clap::Parser;
use env_logger::Env;
use marketstance_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        log::error!("{e}");
        std::process::exit(e.exit_code());
    }
}
