use clap::Parser;
use risloc::cli::{run, Cli};

fn main() {
    // RISLOC_LOG controls verbosity (e.g. RISLOC_LOG=debug).
    env_logger::Builder::from_env(env_logger::Env::new().filter("RISLOC_LOG")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
