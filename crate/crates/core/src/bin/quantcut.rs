use clap::Parser;
use quantcut::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = cli::run(parsed, &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
