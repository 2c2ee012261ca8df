use clap::Parser;

fn main() {
    let cli = randalo_cli::Cli::parse();
    std::process::exit(randalo_cli::run_cli(cli));
}
