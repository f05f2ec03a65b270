//! Full-scale acceptance run: one line per criterion, nonzero exit on any
//! failure. Set `TJM_ACCEPTANCE_SCALE=quick` for a fast smoke pass.

use std::process::ExitCode;

use tjm_core::validation::{run_all, Scale, CHECK_IDS};

fn main() -> ExitCode {
    let scale = match std::env::var("TJM_ACCEPTANCE_SCALE").as_deref() {
        Ok("quick") => Scale::Quick,
        _ => Scale::Full,
    };
    // `cargo test -- --list` and filters should not trigger a long run
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    println!("acceptance ({scale:?} scale)");
    let reports = run_all(scale);
    assert_eq!(reports.len(), CHECK_IDS.len());
    for r in &reports {
        println!("{}", r.summary_line());
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
