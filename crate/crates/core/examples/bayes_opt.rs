//! Bayesian optimization with expected improvement on a 2-D test function.
use castline::sysid::{bayes_opt_ei, BoSettings};

fn main() -> castline::Result<()> {
    let branin = |x: &[f64]| {
        let (a, b, c) = (1.0, 5.1 / (4.0 * std::f64::consts::PI.powi(2)), 5.0 / std::f64::consts::PI);
        let (r, s, t) = (6.0, 10.0, 1.0 / (8.0 * std::f64::consts::PI));
        a * (x[1] - b * x[0] * x[0] + c * x[0] - r).powi(2) + s * (1.0 - t) * x[0].cos() + s
    };
    let settings = BoSettings {
        n_init: 10,
        n_iter: 40,
        seed: 4,
        ..BoSettings::default()
    };
    let res = bayes_opt_ei(branin, &[(-5.0, 10.0), (0.0, 15.0)], &settings)?;
    println!("best {:?} -> {:.4} (global minimum 0.3979)", res.x, res.fun);
    for h in res.history.iter().step_by(10) {
        println!("iter {:3}  best {:.4}", h.generation, h.best);
    }
    Ok(())
}
