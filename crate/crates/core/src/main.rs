use clap::Parser;
use reduced_rnnt::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = run(&cli, &mut stdout.lock()) {
        let msg = e.to_string().replace('\n', " ");
        eprintln!("error[{}]: {msg}", e.category());
        std::process::exit(e.exit_code());
    }
}
