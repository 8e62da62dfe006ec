use std::time::Instant;

use kdqe::synthetic_bench::{run_findings_suite, Scenario, SuiteConfig};

fn main() {
    let start = Instant::now();
    let report = run_findings_suite(&Scenario::default(), &SuiteConfig::default()).expect("suite");
    print!("{}", report.to_csv());
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
