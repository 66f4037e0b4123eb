//! Evaluate the cast-and-pull baseline with reset noise and write the
//! scatter plot with 95% ellipses.
use castline::pipeline::{eval_stage, render_svg, ExperimentConfig};
use castline::policy::CastAndPullPolicy;

fn main() -> castline::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.eval.n_targets = 6;
    cfg.eval.noise = 0.005;
    let rep = eval_stage(&cfg, &CastAndPullPolicy)?;
    println!(
        "median {:.1}%  IQR {:.1}-{:.1}% of cable length over {} trials",
        100.0 * rep.stats.median,
        100.0 * rep.stats.q1,
        100.0 * rep.stats.q3,
        rep.n_trials()
    );
    let path = std::env::temp_dir().join("castline_eval.svg");
    let w = cfg.workspace;
    std::fs::write(&path, render_svg(&rep, "cast and pull", &[w.r_min, w.r_max])).expect("write svg");
    println!("wrote {}", path.display());
    Ok(())
}
