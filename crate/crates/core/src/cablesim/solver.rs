use super::{CableState, SimParams, GRAVITY, ITERATIONS, V_STICK};
use crate::actions::{TrajectorySample, Vec2};
use crate::error::{Error, Result};

/// Per-parameter constants derived once from [`SimParams`].
#[derive(Debug, Clone)]
pub struct CableModel {
    params: SimParams,
    links: usize,
    link_length: f64,
    mass: Vec<f64>,
    inv_mass: Vec<f64>,
    /// Per-sweep bending stiffness giving `bend_stiffness` over a full step.
    bend_sweep: f64,
    /// Multiplicative decay of perpendicular relative velocity, per link.
    damp_factor: Vec<f64>,
}

impl CableModel {
    pub fn new(params: &SimParams, dt: f64) -> Result<Self> {
        params.validate()?;
        let links = params.effective_links();
        let particle = params.cable_mass / links as f64;
        let mut mass = vec![particle; links + 1];
        mass[links] = 0.5 * particle + params.endpoint_mass;
        let mut inv_mass: Vec<f64> = mass.iter().map(|m| 1.0 / m).collect();
        // held end and the clamped first link
        inv_mass[0] = 0.0;
        inv_mass[1] = 0.0;
        mass[0] = f64::INFINITY;
        mass[1] = f64::INFINITY;
        let damp_factor = (0..links)
            .map(|i| (-params.joint_damping * (inv_mass[i] + inv_mass[i + 1]) * dt).exp())
            .collect();
        let bend_sweep = 1.0 - (1.0 - params.bend_stiffness).powf(1.0 / ITERATIONS as f64);
        Ok(Self {
            params: *params,
            links,
            link_length: params.cable_length / links as f64,
            mass,
            inv_mass,
            bend_sweep,
            damp_factor,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn link_length(&self) -> f64 {
        self.link_length
    }

    pub fn particle_mass(&self, i: usize) -> f64 {
        self.mass[i]
    }

    /// Kinetic energy of the free particles.
    pub fn kinetic_energy(&self, state: &CableState) -> f64 {
        (2..=self.links)
            .map(|i| 0.5 * self.mass[i] * state.velocities[i].norm_sq())
            .sum()
    }
}

/// Relative joint rotation since the start of the step. `e` is the unit
/// turn direction at step start, `(x, y)` the current (dot, cross) pair.
/// Small rotations use `sin(delta) |a||b| / l^2`, which equals the angle to
/// first order without a division; past a quarter turn the exact angle is used.
#[inline]
fn joint_rotation(e: Vec2, x: f64, y: f64, inv_len2: f64) -> f64 {
    let c = e.x * x + e.y * y;
    let s = e.x * y - e.y * x;
    if c > 0.0 {
        s * inv_len2
    } else {
        s.atan2(c)
    }
}

/// Newton passes over the whole chain after the sweeps, restoring link
/// lengths that the local sweeps leave stretched under fast motion.
const FINAL_NEWTON: usize = 2;

/// Reusable buffers for [`step`].
#[derive(Debug, Clone, Default)]
struct Scratch {
    pred: Vec<Vec2>,
    /// Joint turn direction at the start of the step, as a unit vector.
    joint_ref: Vec<Vec2>,
    /// `k / (sum_i w_i |grad_i|^2)` per joint, frozen at step start.
    bend_gain: Vec<f64>,
    chain: ChainSolver,
}

/// Exact Newton projection of all link-length constraints at once. The
/// linearized system along a chain is tridiagonal, solved by the Thomas
/// algorithm.
#[derive(Debug, Clone, Default)]
struct ChainSolver {
    dir: Vec<Vec2>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
}

impl ChainSolver {
    /// One Newton step over links `first..n`; returns the largest absolute
    /// length error seen before the step.
    fn project(&mut self, pos: &mut [Vec2], w: &[f64], len: f64, first: usize) -> f64 {
        let n = pos.len() - 1;
        if first >= n {
            return 0.0;
        }
        let m = n - first;
        self.dir.clear();
        self.upper.clear();
        self.rhs.clear();
        let mut worst = 0.0f64;
        for i in first..n {
            let d = pos[i + 1] - pos[i];
            let dl = d.norm_sq().sqrt();
            let c = dl - len;
            worst = worst.max(c.abs());
            self.dir.push(if dl > 0.0 { d * (1.0 / dl) } else { Vec2::new(1.0, 0.0) });
            self.rhs.push(-c);
        }
        // forward elimination; diag_k = w_i + w_{i+1}, off_k = -w_{i+1} u_k.u_{k+1}
        let mut prev_c = 0.0;
        let mut prev_d = 0.0;
        for k in 0..m {
            let i = first + k;
            let diag = w[i] + w[i + 1];
            let sub = if k > 0 { -w[i] * self.dir[k - 1].dot(self.dir[k]) } else { 0.0 };
            let sup = if k + 1 < m { -w[i + 1] * self.dir[k].dot(self.dir[k + 1]) } else { 0.0 };
            let piv = diag - sub * prev_c;
            let inv = 1.0 / piv;
            prev_c = sup * inv;
            prev_d = (self.rhs[k] - sub * prev_d) * inv;
            self.upper.push(prev_c);
            self.rhs[k] = prev_d;
        }
        for k in (0..m.saturating_sub(1)).rev() {
            self.rhs[k] -= self.upper[k] * self.rhs[k + 1];
        }
        // dx_j = w_j (lambda_{j-1} u_{j-1} - lambda_j u_j)
        for k in 0..m {
            let i = first + k;
            let imp = self.dir[k] * self.rhs[k];
            pos[i] -= imp * w[i];
            pos[i + 1] += imp * w[i + 1];
        }
        worst
    }
}

/// Advance `state` one step with the held end placed at `pose`.
pub fn step(
    model: &CableModel,
    state: &mut CableState,
    pose: &TrajectorySample,
    dt: f64,
) -> Result<()> {
    let mut scratch = Scratch::default();
    step_with(model, state, pose, dt, &mut scratch)
}

fn step_with(
    model: &CableModel,
    state: &mut CableState,
    pose: &TrajectorySample,
    dt: f64,
    scratch: &mut Scratch,
) -> Result<()> {
    let n = model.links;
    if state.positions.len() != n + 1 || state.velocities.len() != n + 1 {
        return Err(Error::invalid(format!(
            "state has {} particles, model expects {}",
            state.positions.len(),
            n + 1
        )));
    }
    let p = &model.params;
    let w = &model.inv_mass;
    let x = &mut state.positions;
    let v = &mut state.velocities;

    let len2 = model.link_length * model.link_length;
    let inv_len2 = 1.0 / len2;
    let k_bend = model.bend_sweep;
    scratch.joint_ref.clear();
    scratch.bend_gain.clear();
    for j in 1..n {
        let (a, b) = (x[j] - x[j - 1], x[j + 1] - x[j]);
        let e = Vec2::new(a.dot(b), a.cross(b));
        let len = e.norm_sq().sqrt();
        scratch.joint_ref.push(if len > 0.0 {
            e * (1.0 / len)
        } else {
            Vec2::new(1.0, 0.0)
        });
        // gradients of the rotation w.r.t. the three particles, taken with
        // rest-length links
        let g_prev = a.perp() * inv_len2;
        let g_next = b.perp() * inv_len2;
        let g_mid = -(g_prev + g_next);
        let denom =
            w[j - 1] * g_prev.norm_sq() + w[j] * g_mid.norm_sq() + w[j + 1] * g_next.norm_sq();
        scratch
            .bend_gain
            .push(if denom > 0.0 { k_bend / denom } else { 0.0 });
    }

    let grip = Vec2::from_angle(pose.theta) * pose.r;
    let pred = &mut scratch.pred;
    pred.clear();
    pred.push(grip);
    pred.push(grip + Vec2::from_angle(pose.heading) * model.link_length);

    // planar Coulomb friction, then explicit prediction
    let dv_dyn = p.mu_d * GRAVITY * dt;
    let dv_stat = p.mu_s * GRAVITY * dt;
    for i in 2..=n {
        let s = v[i].norm_sq().sqrt();
        if s < V_STICK && s < dv_stat {
            v[i] = Vec2::ZERO;
        } else if s > 0.0 {
            v[i] = v[i] * ((s - dv_dyn).max(0.0) / s);
        }
        pred.push(x[i] + v[i] * dt);
    }

    // Colored Gauss-Seidel: constraints within a color share no particles.
    for _ in 0..ITERATIONS {
        for i in (0..n).step_by(2).chain((1..n).step_by(2)) {
            let (wi, wj) = (w[i], w[i + 1]);
            let wsum = wi + wj;
            if wsum == 0.0 {
                continue;
            }
            let d = pred[i + 1] - pred[i];
            // (|d|^2 - l^2) / (|d|^2 + l^2) matches 1 - l/|d| to first order
            // and shares its root, avoiding a square root per link
            let d2 = d.norm_sq();
            let corr = d * ((d2 - len2) / ((d2 + len2) * wsum));
            pred[i] += corr * wi;
            pred[i + 1] -= corr * wj;
        }
        if k_bend > 0.0 {
            let joints = (1..n).step_by(3).chain((2..n).step_by(3)).chain((3..n).step_by(3));
            for j in joints {
                let a = pred[j] - pred[j - 1];
                let b = pred[j + 1] - pred[j];
                let c = joint_rotation(scratch.joint_ref[j - 1], a.dot(b), a.cross(b), inv_len2);
                let g_prev = a.perp() * inv_len2;
                let g_next = b.perp() * inv_len2;
                let g_mid = -(g_prev + g_next);
                let s = -scratch.bend_gain[j - 1] * c;
                pred[j - 1] += g_prev * (s * w[j - 1]);
                pred[j] += g_mid * (s * w[j]);
                pred[j + 1] += g_next * (s * w[j + 1]);
            }
        }
    }

    // link 0 joins the two kinematic particles
    for _ in 0..FINAL_NEWTON {
        scratch.chain.project(pred, w, model.link_length, 1);
    }

    let inv_dt = 1.0 / dt;
    for i in 0..=n {
        v[i] = (pred[i] - x[i]) * inv_dt;
        x[i] = pred[i];
    }

    // damp relative rotation of each link; stretching is handled by projection
    if p.joint_damping > 0.0 {
        for i in 0..n {
            let wsum = w[i] + w[i + 1];
            if wsum == 0.0 {
                continue;
            }
            let d = x[i + 1] - x[i];
            let dl = d.norm_sq().sqrt();
            if dl < 1e-12 {
                continue;
            }
            let u = d * (1.0 / dl);
            let rel = v[i + 1] - v[i];
            let perp = rel - u * u.dot(rel);
            let dv = perp * (model.damp_factor[i] - 1.0);
            v[i + 1] += dv * (w[i + 1] / wsum);
            v[i] -= dv * (w[i] / wsum);
        }
    }

    state.time += dt;
    if !state.is_finite() {
        return Err(Error::SimulationDiverged {
            step: (state.time / dt).round() as usize,
        });
    }
    Ok(())
}

/// A cable model plus a live state, stepping with internal scratch buffers.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: CableModel,
    state: CableState,
    dt: f64,
    steps: usize,
    scratch: Scratch,
}

impl Simulator {
    pub fn new(params: &SimParams, state: CableState, dt: f64) -> Result<Self> {
        let model = CableModel::new(params, dt)?;
        if state.positions.len() != model.links + 1 {
            return Err(Error::invalid(format!(
                "state has {} particles, params imply {}",
                state.positions.len(),
                model.links + 1
            )));
        }
        if !state.is_finite() {
            return Err(Error::invalid("initial cable state is not finite"));
        }
        Ok(Self {
            model,
            state,
            dt,
            steps: 0,
            scratch: Scratch::default(),
        })
    }

    pub fn step(&mut self, pose: &TrajectorySample) -> Result<()> {
        self.steps += 1;
        step_with(&self.model, &mut self.state, pose, self.dt, &mut self.scratch).map_err(|e| {
            match e {
                Error::SimulationDiverged { .. } => Error::SimulationDiverged { step: self.steps },
                other => other,
            }
        })
    }

    pub fn state(&self) -> &CableState {
        &self.state
    }

    pub fn into_state(self) -> CableState {
        self.state
    }

    pub fn model(&self) -> &CableModel {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.model.kinetic_energy(&self.state)
    }
}
