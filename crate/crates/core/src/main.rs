use clap::Parser;

fn main() {
    std::process::exit(sflow::cli::run(sflow::cli::Cli::parse()));
}
