use clap::Parser;
use stdinfo::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
