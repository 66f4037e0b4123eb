//! Turn one casting action into a jerk-limited gripper trajectory and check
//! it against the workspace limits.
use castline::actions::{build_trajectory, check_feasible, Action, Workspace};
use castline::cablesim::DT;

fn main() -> castline::Result<()> {
    let ws = Workspace::default();
    let a = Action::new(0.7, 0.6, -0.6, 0.8, 0.4, 2.0);
    let traj = build_trajectory(&a, 0.6, DT, &ws)?;
    println!(
        "{} samples over {:.3} s, arc switch at {:.3} s",
        traj.samples.len(),
        traj.duration,
        traj.t_switch
    );
    for t in [0.0, traj.t_switch, traj.duration] {
        let p = traj.plan.pose(t);
        println!(
            "t={t:.3}  theta={:+.4}  r={:.4}  omega={:+.2e}",
            p.theta,
            p.r,
            traj.plan.angular_velocity(t)
        );
    }
    let f = check_feasible(&traj, &ws);
    println!("feasible: {} {}", f.feasible, f.describe());
    Ok(())
}
