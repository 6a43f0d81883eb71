use clap::Parser;

use sixv::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            let resource = e.chain().any(|c| matches!(c.downcast_ref::<sixv::core::Error>(), Some(sixv::core::Error::Resource(_))));
            eprintln!("error: {e:#}");
            if resource {
                eprintln!("hint: reduce the lattice size or replicate count");
                std::process::exit(3);
            }
            std::process::exit(1);
        }
    }
}
