use clap::Parser;

fn main() {
    let cli = dae_cli::Cli::parse();
    if let Err(err) = dae_cli::run(cli) {
        eprintln!("error: {err}");
        eprintln!("{}", err.record_json());
        std::process::exit(err.exit_code());
    }
}
