use clap::Parser;

fn main() -> anyhow::Result<()> {
    coevgan_cli::run(coevgan_cli::Cli::parse())
}
