use clap::Parser;

fn main() {
    std::process::exit(gclosure_cli::run(gclosure_cli::Cli::parse()));
}
