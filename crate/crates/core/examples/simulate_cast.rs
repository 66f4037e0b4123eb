//! Roll out a cast and print its 100 ms free-end waypoints.
use castline::actions::Action;
use castline::cablesim::{rollout, RolloutOptions, SimParams};

fn main() -> castline::Result<()> {
    let params = SimParams::default();
    let a = Action::new(0.6, 0.6, -0.8, 0.7, 0.6, 2.2);
    let rec = rollout(&a, &params, &RolloutOptions::default())?;
    for (k, w) in rec.waypoints.iter().enumerate() {
        println!("{:5} ms  ({:+.4}, {:+.4})", k * 100, w.x, w.y);
    }
    println!(
        "final ({:+.4}, {:+.4}) after {} ms, settled: {}",
        rec.final_pos.x, rec.final_pos.y, rec.duration_ms, rec.meta.settled
    );
    Ok(())
}
