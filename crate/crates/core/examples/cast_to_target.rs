//! Pick the grid action whose predicted endpoint is closest to each target,
//! using the simulator itself as the forward model.
use castline::actions::{ActionGrid, PolarPoint};
use castline::cablesim::{rollout, RolloutOptions, SimParams};
use castline::policy::{select_action, CandidateSet, SimulatorOracle};

fn main() -> castline::Result<()> {
    let opts = RolloutOptions::default();
    let params = SimParams::default();
    let cands = CandidateSet::from_grid(&ActionGrid::reference_default(), &opts)?;
    let oracle = SimulatorOracle { params, opts };
    for (r, deg) in [(0.8, 20.0), (1.0, -35.0), (1.1, 60.0)] {
        let target = PolarPoint::new(r, f64::to_radians(deg))?;
        let a = select_action(&oracle, &cands, target)?;
        let end = rollout(&a, &params, &opts)?.final_pos;
        println!("target r={r} theta={deg}deg -> error {:.4} m", end.distance(target.to_cartesian()));
    }
    Ok(())
}
