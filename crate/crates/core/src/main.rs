use clap::Parser;

fn main() {
    let cli = adaptive_k::cli::Cli::parse();
    if let Err(e) = adaptive_k::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
