use clap::Parser;

fn main() {
    let cli = ldq_cli::Cli::parse();
    if let Err(e) = ldq_cli::run(&cli) {
        eprintln!("{}", e.stderr_json());
        std::process::exit(e.exit_code());
    }
}
