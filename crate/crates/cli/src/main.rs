use clap::Parser;

fn main() {
    let cli = laav_cli::Cli::parse();
    if let Err(e) = laav_cli::run(cli) {
        eprintln!("{}", e.line());
        std::process::exit(e.exit_code());
    }
}
