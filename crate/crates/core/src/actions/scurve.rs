//! Jerk-limited rest-to-rest angular profiles.

/// One constant-jerk phase of a profile, with the kinematic state at its start.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Phase {
    start: f64,
    duration: f64,
    jerk: f64,
    p0: f64,
    v0: f64,
    a0: f64,
}

impl Phase {
    #[inline]
    fn eval(&self, tau: f64) -> (f64, f64, f64) {
        let a = self.a0 + self.jerk * tau;
        let v = self.v0 + self.a0 * tau + 0.5 * self.jerk * tau * tau;
        let p = self.p0 + self.v0 * tau + 0.5 * self.a0 * tau * tau + self.jerk * tau * tau * tau / 6.0;
        (p, v, a)
    }
}

/// Seven-phase S-curve from rest to rest over a signed displacement.
///
/// Phases with zero length are kept so the layout is always
/// jerk-up, hold, jerk-down, cruise, jerk-down, hold, jerk-up.
#[derive(Debug, Clone, PartialEq)]
pub struct ScurveProfile {
    delta: f64,
    sign: f64,
    phases: [Phase; 7],
    duration: f64,
    peak_velocity: f64,
    peak_acceleration: f64,
}

/// Build the time-optimal jerk-limited profile covering `delta` radians.
///
/// The bounds are assumed positive; `delta == 0` yields an empty profile.
pub fn scurve_profile(delta: f64, v_max: f64, a_max: f64, j_max: f64) -> ScurveProfile {
    let dist = delta.abs();
    let sign = if delta < 0.0 { -1.0 } else { 1.0 };
    if dist == 0.0 {
        return ScurveProfile {
            delta,
            sign,
            phases: [Phase::default(); 7],
            duration: 0.0,
            peak_velocity: 0.0,
            peak_acceleration: 0.0,
        };
    }

    // Velocity above which the acceleration limit is reached.
    let v_knee = a_max * a_max / j_max;
    let accel_time = |v: f64| {
        if v >= v_knee {
            v / a_max + a_max / j_max
        } else {
            2.0 * (v / j_max).sqrt()
        }
    };

    let peak = if dist >= v_max * accel_time(v_max) {
        v_max
    } else {
        let b = v_knee;
        let vp = 0.5 * (-b + (b * b + 4.0 * dist * a_max).sqrt());
        if vp >= v_knee {
            vp
        } else {
            let tj = (dist / (2.0 * j_max)).cbrt();
            j_max * tj * tj
        }
    };

    let (t_jerk, a_peak) = if peak >= v_knee {
        (a_max / j_max, a_max)
    } else {
        let tj = (peak / j_max).sqrt();
        (tj, j_max * tj)
    };
    let t_hold = (peak / a_peak - t_jerk).max(0.0);
    let t_accel = 2.0 * t_jerk + t_hold;
    let t_cruise = ((dist - peak * t_accel) / peak).max(0.0);

    let plan = [
        (t_jerk, j_max),
        (t_hold, 0.0),
        (t_jerk, -j_max),
        (t_cruise, 0.0),
        (t_jerk, -j_max),
        (t_hold, 0.0),
        (t_jerk, j_max),
    ];
    let mut phases = [Phase::default(); 7];
    let (mut t, mut p, mut v, mut a) = (0.0, 0.0, 0.0, 0.0);
    for (phase, &(duration, jerk)) in phases.iter_mut().zip(plan.iter()) {
        *phase = Phase {
            start: t,
            duration,
            jerk,
            p0: p,
            v0: v,
            a0: a,
        };
        let (pn, vn, an) = phase.eval(duration);
        t += duration;
        p = pn;
        v = vn;
        a = an;
    }

    ScurveProfile {
        delta,
        sign,
        phases,
        duration: t,
        peak_velocity: peak,
        peak_acceleration: a_peak,
    }
}

impl ScurveProfile {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn peak_velocity(&self) -> f64 {
        self.sign * self.peak_velocity
    }

    pub fn peak_acceleration(&self) -> f64 {
        self.peak_acceleration
    }

    /// (jerk, duration) for each of the seven phases, unsigned.
    pub fn phase_plan(&self) -> [(f64, f64); 7] {
        self.phases.map(|p| (p.jerk, p.duration))
    }

    fn locate(&self, t: f64) -> Option<(&Phase, f64)> {
        if self.duration == 0.0 || t >= self.duration {
            return None;
        }
        let t = t.max(0.0);
        let idx = self
            .phases
            .iter()
            .rposition(|ph| ph.start <= t && ph.duration > 0.0)
            .unwrap_or(0);
        let ph = &self.phases[idx];
        Some((ph, (t - ph.start).min(ph.duration)))
    }

    /// Position, velocity and acceleration at time `t`; the profile holds its
    /// endpoints outside `[0, duration]`.
    pub fn state(&self, t: f64) -> (f64, f64, f64) {
        match self.locate(t) {
            Some((ph, tau)) => {
                let (p, v, a) = ph.eval(tau);
                (self.sign * p, self.sign * v, self.sign * a)
            }
            None if t <= 0.0 => (0.0, 0.0, 0.0),
            None => (self.delta, 0.0, 0.0),
        }
    }

    pub fn position(&self, t: f64) -> f64 {
        self.state(t).0
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.state(t).1
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        self.state(t).2
    }

    pub fn jerk(&self, t: f64) -> f64 {
        self.locate(t).map_or(0.0, |(ph, _)| self.sign * ph.jerk)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V: f64 = 2.0;
    const A: f64 = 8.0;
    const J: f64 = 80.0;

    /// Independent reference: a bang-bang jerk controller integrated with a
    /// fine fixed step. Jerk switches are decided from the running state, not
    /// from precomputed phase lengths. Braking mirrors the measured
    /// acceleration phase in time.
    fn integrate_bang_bang(dist: f64, v_max: f64, a_max: f64, j_max: f64) -> (f64, f64, f64) {
        let h = 1e-6;
        let (mut t, mut p, mut v, mut a) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut releasing = false;
        loop {
            if !releasing && v + a * a / (2.0 * j_max) >= v_max {
                releasing = true;
            }
            let jerk = if releasing {
                -j_max
            } else if a < a_max {
                j_max
            } else {
                0.0
            };
            let a_next = (a + jerk * h).min(a_max);
            if releasing && a_next <= 0.0 {
                break;
            }
            a = a_next;
            v += a * h;
            p += v * h;
            t += h;
        }
        let cruise = (dist - 2.0 * p) / v;
        (2.0 * t + cruise, t, p)
    }

    #[test]
    fn zero_displacement_has_zero_duration() {
        let p = scurve_profile(0.0, V, A, J);
        assert_eq!(p.duration(), 0.0);
        assert_eq!(p.position(0.3), 0.0);
    }

    #[test]
    fn cruise_duration_matches_bang_bang_integration() {
        let dist = 2.5;
        let prof = scurve_profile(dist, V, A, J);
        let (t_ref, t_acc, p_acc) = integrate_bang_bang(dist, V, A, J);
        assert!((prof.duration() - t_ref).abs() < 1e-4, "{} vs {}", prof.duration(), t_ref);
        assert!((prof.position(t_acc) - p_acc).abs() < 1e-4);
        assert!((prof.velocity(t_acc) - V).abs() < 1e-4);
        // closed form for the cruise case
        let closed = dist / V + V / A + A / J;
        assert!((prof.duration() - closed).abs() < 1e-12);
        assert!((prof.position(prof.duration()) - dist).abs() < 1e-12);
    }

    #[test]
    fn negative_delta_is_odd_image() {
        let pos = scurve_profile(1.3, V, A, J);
        let neg = scurve_profile(-1.3, V, A, J);
        assert_eq!(pos.duration(), neg.duration());
        for k in 0..=200 {
            let t = pos.duration() * k as f64 / 200.0;
            assert_eq!(neg.position(t), -pos.position(t));
            assert_eq!(neg.velocity(t), -pos.velocity(t));
        }
    }

    #[test]
    fn short_moves_degenerate_gracefully() {
        for &d in &[1e-4, 0.01, 0.05, 0.2, 0.5] {
            let p = scurve_profile(d, V, A, J);
            assert!(p.peak_velocity() <= V + 1e-12);
            assert!(p.peak_acceleration() <= A + 1e-12);
            assert!((p.position(p.duration()) - d).abs() < 1e-12);
            assert!(p.velocity(p.duration() - 1e-12).abs() < 1e-9);
            let (_, _, a_end) = p.state(p.duration() * (1.0 - 1e-12));
            assert!(a_end.abs() < 1e-6);
        }
    }

    #[test]
    fn limits_hold_on_dense_samples() {
        for &d in &[0.02, 0.3, 1.0, 2.8] {
            let p = scurve_profile(d, V, A, J);
            let n = 4000;
            for k in 0..=n {
                let t = p.duration() * k as f64 / n as f64;
                let (_, v, a) = p.state(t);
                assert!(v.abs() <= V * (1.0 + 1e-9));
                assert!(a.abs() <= A * (1.0 + 1e-9));
                assert!(p.jerk(t).abs() <= J);
            }
        }
    }
}
