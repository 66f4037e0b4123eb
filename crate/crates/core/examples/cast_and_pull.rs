//! The analytic baseline: rotate a reset cast to the target bearing, then
//! drag the cable straight in.
use castline::actions::{PolarPoint, Workspace};
use castline::cablesim::SimParams;
use castline::policy::cast_and_pull;

fn main() -> castline::Result<()> {
    let params = SimParams::default();
    let ws = Workspace::default();
    for r in [0.9, 1.1, 1.22] {
        let target = PolarPoint::new(r, 0.5)?;
        let rec = cast_and_pull(target, &params, 0.6, &ws)?;
        println!("target r={r:.2}: error {:.4} m", rec.final_pos.distance(target.to_cartesian()));
    }
    Ok(())
}
