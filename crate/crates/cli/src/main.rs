use std::process::ExitCode;

use cpr_cli::{parse_cli, run_experiment};

fn main() -> ExitCode {
    let spec = match parse_cli(std::env::args_os()) {
        Ok(spec) => spec,
        Err(e) => e.exit(),
    };
    match run_experiment(&spec) {
        Ok(report) => {
            for cell in &report.manifest.cells {
                println!(
                    "{}: {} trials, mean survival {:.2}, censored {}, aborted {}",
                    cell.name, cell.trials, cell.mean_survival, cell.censored, cell.aborted_trials
                );
            }
            println!("wrote {} files under {}", report.manifest.files.len() + 1, report.out.display());
            ExitCode::from(report.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
