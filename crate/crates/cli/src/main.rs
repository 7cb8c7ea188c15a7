use clap::Parser;
use tlh::error::EXIT_USAGE;

fn main() {
    let cli = match tlh::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = tlh::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
