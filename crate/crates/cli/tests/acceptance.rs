//! All acceptance criteria at full resolution, one line per criterion.

use std::process::ExitCode;

use eqm_cli::suite::{Scale, Suite};

fn main() -> ExitCode {
    // `cargo test -- --list` and filters must not trigger the full run.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let suite = Suite::new(Scale::full());
    println!("acceptance ({} resolution)", suite.scale.label);
    let results = suite.run_all(|r| println!("{}", r.line()));
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} {}", r.id, r.name))
        .collect();
    if failed.is_empty() {
        println!("acceptance: {} of {} criteria passed", results.len(), results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
