use clap::Parser;

use rfmvm_cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(path) => println!("{}", path.display()),
        Err(e) => {
            eprintln!("rfmvm: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
