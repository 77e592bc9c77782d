use std::process::ExitCode;

use clap::Parser;
use mixed_whittle::cli::{error_json, run, Cli, EXIT_ERROR};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok((outcome, allow)) => {
            for p in &outcome.written {
                println!("{}", p.display());
            }
            let code = outcome.exit_code(allow);
            if code != 0 {
                eprintln!("{}", serde_json::json!({ "warning": "a fit did not converge; pass --allow-nonconverged to accept" }));
            }
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
