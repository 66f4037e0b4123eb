//! Reflect a JSON-lines dataset across the symmetry axis and check that
//! reflecting twice gives the original records back.
use castline::actions::Action;
use castline::cablesim::{read_records, rollout, write_records, RolloutOptions, SimParams};
use castline::pipeline::mirror_dataset;

fn main() -> castline::Result<()> {
    let dir = std::env::temp_dir().join("castline_mirror");
    let opts = RolloutOptions::default();
    let recs: Vec<_> = [Action::new(0.6, 0.6, -0.8, 0.7, 0.6, 2.2), Action::new(0.4, 0.6, -0.2, 0.7, 0.0, 1.8)]
        .iter()
        .map(|a| rollout(a, &SimParams::default(), &opts))
        .collect::<castline::Result<_>>()?;
    let (a, b, c) = (dir.join("a.jsonl"), dir.join("b.jsonl"), dir.join("c.jsonl"));
    write_records(&a, &recs)?;
    mirror_dataset(&a, &b)?;
    mirror_dataset(&b, &c)?;
    println!("mirrored {} records; round trip exact: {}", recs.len(), read_records(&c)? == recs);
    Ok(())
}
