//! Hide a set of simulator parameters, generate reference casts with them and
//! recover them with differential evolution.
//!
//! `cargo run --release --example sim2sim_de [generations]`
use castline::actions::{grid_sample_actions, ActionGrid};
use castline::cablesim::{rollout, RolloutOptions, SimParams};
use castline::sysid::{subsample_tune_set, tune_de, DeSettings, ParamSpace};

fn main() -> castline::Result<()> {
    let generations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let opts = RolloutOptions::default();
    let truth = SimParams {
        bend_stiffness: 0.08,
        cable_mass: 0.065,
        endpoint_mass: 0.028,
        mu_d: 0.24,
        ..SimParams::default()
    };
    let actions = grid_sample_actions(&ActionGrid::reference_default())?;
    let refs: Vec<_> = actions.iter().filter_map(|a| rollout(a, &truth, &opts).ok()).collect();
    let tune_set = subsample_tune_set(&refs, 5, 7)?;
    let settings = DeSettings {
        popsize_factor: 4,
        max_generations: generations,
        seed: 1,
        ..DeSettings::default()
    };
    let res = tune_de(&tune_set, &ParamSpace::default(), &SimParams::default(), &opts, &settings)?;
    println!("waypoint error {:.3e} m after {} evaluations", res.best_error, res.evaluations);
    for ((name, x), rel) in res.names.iter().zip(&res.best).zip(res.relative_errors(&truth)) {
        println!("{:<14} {x:.5}  rel err {:.2}%", name.name(), 100.0 * rel);
    }
    Ok(())
}
