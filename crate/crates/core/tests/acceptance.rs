//! Acceptance criteria 1-8: one PASS/FAIL line each, nonzero exit on any FAIL.

use std::process::ExitCode;

use mpass::bench::{
    benchmark_params, criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
    criterion_7, criterion_8, BenchmarkSolve, CriterionResult,
};

fn report(r: CriterionResult) -> CriterionResult {
    println!("{r}");
    r
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters pass arguments; this target always runs in full
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let params = benchmark_params();
    let smooth = BenchmarkSolve::run("smooth_double_well", &params).expect("library problem");
    let nonsmooth = BenchmarkSolve::run("nonsmooth_twin_paraboloid", &params).expect("library problem");

    let results = [
        report(criterion_1(&smooth)),
        report(criterion_2(&nonsmooth)),
        report(criterion_3(&[&smooth, &nonsmooth])),
        report(criterion_4(100)),
        report(criterion_5(1000)),
        report(criterion_6(500, 100)),
        report(criterion_7(&[&smooth, &nonsmooth])),
        report(criterion_8()),
    ];
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
