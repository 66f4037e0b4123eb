//! Train the small forward network on reference-grid casts and report its
//! held-out prediction error.
use castline::actions::{grid_sample_actions, ActionGrid};
use castline::cablesim::{rollout, RolloutOptions, SimParams};
use castline::regress::{nn_train, NNConfig, RegressionDataset};

fn main() -> castline::Result<()> {
    let opts = RolloutOptions::default();
    let params = SimParams::default();
    let actions = grid_sample_actions(&ActionGrid::reference_default())?;
    let recs: Vec<_> = actions.iter().filter_map(|a| rollout(a, &params, &opts).ok()).collect();
    let (train, test) = RegressionDataset::from_records(&recs).split(0.2, 1)?;
    let (model, report) = nn_train(&train, &NNConfig::reference_only())?;
    println!(
        "{} rows, {} epochs (best {}), loss {:.3e}",
        train.len(),
        report.epochs_run,
        report.best_epoch,
        report.final_loss
    );
    let mut errs = Vec::new();
    for (x, y) in test.inputs.iter().zip(&test.targets) {
        errs.push(model.predict(&castline::actions::Action::from_array(*x))?.distance(*y));
    }
    errs.sort_by(f64::total_cmp);
    println!("held-out median error {:.4} m over {} rows", errs[errs.len() / 2], errs.len());
    Ok(())
}
