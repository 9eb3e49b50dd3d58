use clap::Parser;

fn main() {
    let cli = depnet_cli::Cli::parse();
    if let Err(e) = depnet_cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
