use clap::Parser;
use vbow_cli::cli::{run_command, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Err(e) = cli.resolve_config().and_then(|cfg| run_command(cli.command, &cfg)) {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
