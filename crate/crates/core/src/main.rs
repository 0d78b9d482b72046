use clap::Parser;
use perisig::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let out = run(&cli);
    if out.code == 0 {
        println!("{}", out.stdout);
    } else {
        eprintln!("{}", out.stdout);
    }
    std::process::exit(out.code);
}
