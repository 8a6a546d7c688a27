//! Replicated experiment through the harness: metrics CSV, traces, manifest
//! and an aggregated report in a temporary directory.
//!
//! cargo run --release --example experiment_harness

use dualpref::harness::{report, run_experiment, RunConfig};
use dualpref::SelectorKind;

fn main() -> dualpref::Result<()> {
    let dir = std::env::temp_dir().join("dualpref_example_harness");
    let cfg = RunConfig {
        method: vec![SelectorKind::DualDOptimal, SelectorKind::Random],
        budget_t: vec![250, 500, 1000],
        batch_k: vec![50],
        replications: 5,
        n: 3000,
        n_eval: 500,
        output_dir: Some(dir.clone()),
        ..RunConfig::default()
    };
    let out = run_experiment(&cfg)?;
    println!(
        "{} rows, {} failures, C_phi = {:.3}",
        out.rows.len(),
        out.failures.len(),
        out.c_phi
    );

    let rep = report(&dir.join("metrics.csv"), &dir)?;
    print!("{}", rep.to_text());
    println!("files in {}", dir.display());
    Ok(())
}
