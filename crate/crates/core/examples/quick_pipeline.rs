//! End-to-end run on a reduced configuration: reference data from hidden
//! parameters, tuning, simulated data, three forward models, evaluation and
//! report.
//!
//! `cargo run --release --example quick_pipeline [config.toml]`
use castline::pipeline::{run_r2s2r, ExperimentConfig, RunOptions};

fn main() -> castline::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::from_toml(include_str!("../../../configs/quick.toml"))?,
    };
    let out = std::env::temp_dir().join("castline_quick");
    let m = run_r2s2r(&cfg, &out, &RunOptions::default())?;
    for (k, v) in &m.tuned_relative_errors {
        println!("tuned {k}: {:.2}% off", 100.0 * v);
    }
    for (name, p) in &m.policies {
        println!("{name:<14} median {:.1}% of cable length", 100.0 * p.median);
    }
    println!("outputs in {}", out.display());
    Ok(())
}
