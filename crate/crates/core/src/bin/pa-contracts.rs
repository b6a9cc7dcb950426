use std::process::ExitCode;

use clap::Parser;
use pa_contracts::cli::{run, Cli, RunOutput, RunSpec};

fn execute(cli: &Cli) -> pa_contracts::Result<RunOutput> {
    let spec = RunSpec::from_cli(cli)?;
    let out = run(&spec)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, content) in &out.files {
                std::fs::write(dir.join(name), content)?;
            }
            if !out.report.is_empty() {
                print!("{}", out.report);
            }
        }
        None => {
            for (name, content) in &out.files {
                if name.ends_with(".csv") {
                    print!("{content}");
                }
            }
            if !out.report.is_empty() {
                eprint!("{}", out.report);
            }
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(out) if out.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
