use clap::Parser;

fn main() {
    // Usage errors (unknown subcommand/flags) exit with code 2 here.
    let cli = uncertime::cli::Cli::parse();
    if let Err(err) = uncertime::run(cli) {
        eprintln!("error: {err}");
        let mut source = std::error::Error::source(&err);
        while let Some(cause) = source {
            eprintln!("  caused by: {cause}");
            source = cause.source();
        }
        std::process::exit(err.exit_code());
    }
}
