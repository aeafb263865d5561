use clap::Parser;
use probit_uq_cli::args::Cli;
use probit_uq_cli::run_cli;

fn main() {
    let cli = Cli::parse();
    match run_cli(&cli) {
        Ok(m) => {
            for f in &m.outputs {
                eprintln!("wrote {}", cli.out_dir.join(f).display());
            }
        }
        Err(e) => {
            eprintln!("probit-uq: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
