//! The eight acceptance criteria, each at its stated tolerance and time limit.
//! Prints one PASS/FAIL line per criterion; runs without the libtest harness
//! so the lines always reach the log.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use kinetofluid::commands::{simulate, RunOptions};
use kinetofluid::golden::TOLERANCE;
use kinetofluid::suites::{criterion, Check};
use kinetofluid::RunConfig;

struct Outcome {
    n: u8,
    pass: bool,
    line: String,
}

fn property_criterion(n: u8, limit: Duration) -> Outcome {
    let start = Instant::now();
    let checks: Vec<Check> = criterion(n);
    let elapsed = start.elapsed();
    let failed: Vec<String> =
        checks.iter().filter(|c| !c.pass()).map(|c| format!("{} (margin {:e}: {})", c.name, c.margin, c.detail)).collect();
    let in_time = elapsed <= limit;
    let pass = failed.is_empty() && in_time;
    let mut line = format!("{} checks, {:.1}s of {}s", checks.len(), elapsed.as_secs_f64(), limit.as_secs());
    if !failed.is_empty() {
        line += &format!("; failed: {}", failed.join("; "));
    }
    if !in_time {
        line += "; over time limit";
    }
    Outcome { n, pass, line }
}

fn golden_criterion() -> Outcome {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("reference/reference.cfg");
    let out = tempfile::tempdir().expect("temp dir");
    let opts = RunOptions { out: Some(out.path().to_path_buf()), ..Default::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("single-thread pool");
    let result = pool.install(|| RunConfig::from_file(&cfg).map_err(Into::into).and_then(|p| simulate(&p, &opts)));
    match result {
        Ok(s) => match s.golden_diff {
            Some(d) if d <= TOLERANCE => Outcome { n: 8, pass: true, line: format!("max diff {d:e}") },
            Some(d) => Outcome { n: 8, pass: false, line: format!("max diff {d:e} above {TOLERANCE:e}") },
            None => Outcome { n: 8, pass: false, line: "reference config names no golden directory".into() },
        },
        Err(e) => Outcome { n: 8, pass: false, line: e.to_string() },
    }
}

fn main() {
    let limits = [(1, 5), (2, 10), (3, 60), (4, 120), (5, 60), (6, 600), (7, 600)];
    let mut outcomes: Vec<Outcome> =
        limits.iter().map(|&(n, secs)| property_criterion(n, Duration::from_secs(secs))).collect();
    outcomes.push(golden_criterion());
    for o in &outcomes {
        println!("criterion {}: {} ({})", o.n, if o.pass { "PASS" } else { "FAIL" }, o.line);
    }
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.pass).map(|o| o.n).collect();
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: {} of {} criteria pass", outcomes.len(), outcomes.len());
}
