use clap::Parser;

fn main() {
    let cli = dpp_cli::Cli::parse();
    if let Err(e) = dpp_cli::run(cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
