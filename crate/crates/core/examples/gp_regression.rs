//! Exact GP regression with marginal-likelihood hyperparameter search.
use castline::regress::{GpRegressor, HyperSearch};

fn main() -> castline::Result<()> {
    let xs: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64 / 24.0 * 6.0]).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x[0].sin()).collect();
    let gp = GpRegressor::fit_optimized(&xs, &ys, &HyperSearch::default())?;
    for x in [0.5, 1.7, 3.3, 5.9, 7.0] {
        let (m, v) = gp.predict(&[x]);
        println!("x={x:.1}  mean {m:+.4}  sd {:.4}  sin {:+.4}", v.sqrt(), x.sin());
    }
    Ok(())
}
