//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Pass criterion numbers after `--` to run a subset.

use std::process::ExitCode;

use kglab_validation::{run, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| picked.is_empty() || picked.contains(&c.id)) {
        let out = run(c);
        println!("{}", out.line());
        if !out.pass {
            failed.push(out.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {failed:?}");
        ExitCode::FAILURE
    }
}
