use crate::error::{Error, Result};

/// Clamped cubic spline through `(0, r0)`, `(t_switch, r1)`, `(duration, r2)`
/// with zero slope at both ends and continuous first and second derivatives
/// at the interior knot.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpline {
    knots: [f64; 3],
    /// Local coefficients `c0 + c1 s + c2 s^2 + c3 s^3`, `s = t - knot`.
    coeffs: [[f64; 4]; 2],
}

pub fn radial_spline(r0: f64, r1: f64, r2: f64, t_switch: f64, duration: f64) -> Result<RadialSpline> {
    let h0 = t_switch;
    let h1 = duration - t_switch;
    if !(h0 > 0.0 && h1 > 0.0 && duration.is_finite()) {
        return Err(Error::invalid(format!(
            "radial spline needs 0 < t_switch < duration, got t_switch={t_switch}, duration={duration}"
        )));
    }
    if ![r0, r1, r2].iter().all(|r| r.is_finite()) {
        return Err(Error::invalid("radial spline knots must be finite"));
    }
    let d0 = (r1 - r0) / h0;
    let d1 = (r2 - r1) / h1;
    // C2 condition at the interior knot with clamped (zero) end slopes.
    let m1 = 3.0 * (h1 * d0 + h0 * d1) / (2.0 * (h0 + h1));
    Ok(RadialSpline {
        knots: [0.0, t_switch, duration],
        coeffs: [hermite(r0, r1, 0.0, m1, h0), hermite(r1, r2, m1, 0.0, h1)],
    })
}

fn hermite(y0: f64, y1: f64, m0: f64, m1: f64, h: f64) -> [f64; 4] {
    let d = (y1 - y0) / h;
    [y0, m0, (3.0 * d - 2.0 * m0 - m1) / h, (m0 + m1 - 2.0 * d) / (h * h)]
}

impl RadialSpline {
    pub fn knots(&self) -> [f64; 3] {
        self.knots
    }

    pub fn coefficients(&self) -> [[f64; 4]; 2] {
        self.coeffs
    }

    fn segment(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(0.0, self.knots[2]);
        if t < self.knots[1] {
            (0, t)
        } else {
            (1, t - self.knots[1])
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (i, s) = self.segment(t);
        let c = &self.coeffs[i];
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    }

    /// dr/dt; zero outside the spline's time span.
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.knots[2] {
            return 0.0;
        }
        let (i, s) = self.segment(t);
        let c = &self.coeffs[i];
        c[1] + s * (2.0 * c[2] + s * 3.0 * c[3])
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let (i, s) = self.segment(t);
        let c = &self.coeffs[i];
        2.0 * c[2] + 6.0 * c[3] * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Oracle: the same spline in the truncated power basis
    /// {1, t, t^2, t^3, (t - ts)_+^3}, which is C2 by construction; its five
    /// weights come from the five boundary conditions.
    fn truncated_power_oracle(r0: f64, r1: f64, r2: f64, ts: f64, dur: f64) -> impl Fn(f64) -> f64 {
        let basis = move |t: f64| {
            let tp = (t - ts).max(0.0);
            [1.0, t, t * t, t * t * t, tp * tp * tp]
        };
        let dbasis = move |t: f64| {
            let tp = (t - ts).max(0.0);
            [0.0, 1.0, 2.0 * t, 3.0 * t * t, 3.0 * tp * tp]
        };
        let rows = [basis(0.0), dbasis(0.0), basis(ts), basis(dur), dbasis(dur)];
        let a = DMatrix::from_fn(5, 5, |i, j| rows[i][j]);
        let b = DVector::from_vec(vec![r0, 0.0, r1, r2, 0.0]);
        let w = a.lu().solve(&b).expect("oracle system is regular");
        move |t| basis(t).iter().zip(w.iter()).map(|(b, w)| b * w).sum()
    }

    /// Least-squares cubic through dense samples of `f` on `[t0, t1]`, in the
    /// local variable `s = t - t0`.
    fn collocation_fit(f: &impl Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> [f64; 4] {
        let a = DMatrix::from_fn(n, 4, |i, j| {
            let s = (t1 - t0) * i as f64 / (n - 1) as f64;
            s.powi(j as i32)
        });
        let y = DVector::from_fn(n, |i, _| f(t0 + (t1 - t0) * i as f64 / (n - 1) as f64));
        let ata = a.transpose() * &a;
        let aty = a.transpose() * y;
        let c = ata.cholesky().expect("normal equations are SPD").solve(&aty);
        [c[0], c[1], c[2], c[3]]
    }

    #[test]
    fn equal_knots_give_a_constant() {
        let s = radial_spline(0.6, 0.6, 0.6, 0.8, 1.9).unwrap();
        for k in 0..50 {
            let t = 1.9 * k as f64 / 49.0;
            assert_eq!(s.eval(t), 0.6);
            assert_eq!(s.derivative(t), 0.0);
        }
    }

    #[test]
    fn interpolates_knots_and_clamps_ends() {
        let s = radial_spline(0.6, 0.5, 0.7, 1.0, 2.0).unwrap();
        assert!((s.eval(0.0) - 0.6).abs() < 1e-12);
        assert!((s.eval(1.0) - 0.5).abs() < 1e-12);
        assert!((s.eval(2.0) - 0.7).abs() < 1e-12);
        let c = s.coefficients();
        assert_eq!(c[0][1], 0.0);
        let h1 = 1.0;
        let end_slope = c[1][1] + 2.0 * c[1][2] * h1 + 3.0 * c[1][3] * h1 * h1;
        assert!(end_slope.abs() < 1e-12);
        // C1 and C2 across the switch
        let left_d = c[0][1] + 2.0 * c[0][2] + 3.0 * c[0][3];
        let left_dd = 2.0 * c[0][2] + 6.0 * c[0][3];
        assert!((left_d - c[1][1]).abs() < 1e-12);
        assert!((left_dd - 2.0 * c[1][2]).abs() < 1e-12);
    }

    #[test]
    fn coefficients_match_collocation_oracle() {
        let (r0, r1, r2, ts, dur) = (0.6, 0.5, 0.7, 1.0, 2.0);
        let s = radial_spline(r0, r1, r2, ts, dur).unwrap();
        let oracle = truncated_power_oracle(r0, r1, r2, ts, dur);
        let fit0 = collocation_fit(&oracle, 0.0, ts, 5_000);
        let fit1 = collocation_fit(&oracle, ts, dur, 5_000);
        let c = s.coefficients();
        for j in 0..4 {
            assert!((c[0][j] - fit0[j]).abs() < 1e-9, "seg0 c{j}: {} vs {}", c[0][j], fit0[j]);
            assert!((c[1][j] - fit1[j]).abs() < 1e-9, "seg1 c{j}: {} vs {}", c[1][j], fit1[j]);
        }
    }

    #[test]
    fn rejects_degenerate_segments() {
        assert!(radial_spline(0.6, 0.6, 0.6, 0.0, 1.0).is_err());
        assert!(radial_spline(0.6, 0.6, 0.6, 1.0, 1.0).is_err());
        assert!(radial_spline(0.6, 0.6, 0.6, -1.0, 1.0).is_err());
    }
}
