//! Reduced-coordinate integrator with stable-PD actuation and impulse contacts.
//!
//! One [`Simulator::step`] advances a single control frame, made of
//! `substeps` semi-implicit Euler substeps. Each substep:
//!
//! 1. assembles the joint-space mass matrix and the gravity/velocity-product forces,
//! 2. adds stable-PD and passive damping torques, treating their velocity
//!    dependence implicitly (`(M + dt·D) Δv = dt·f`),
//! 3. resolves ground contacts with sequential impulses and Coulomb friction,
//! 4. integrates positions, clamps joint limits,
//! 5. projects the root velocity so total linear momentum matches the
//!    impulse-momentum balance of the substep.

use serde::{Deserialize, Serialize};

use super::kinematics::{rotate, Kinematics};
use super::linalg::{cholesky, cholesky_solve};
use super::{CharacterModel, PhysicsError, SimState};

/// Corner height below which a link counts as touching the ground (m).
pub const CONTACT_FLAG_HEIGHT: f64 = 0.003;
/// Corners closer than this to the ground enter the contact solver (m).
const CONTACT_MARGIN: f64 = 0.01;
const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// m/s², pointing down.
    pub gravity: f64,
    /// Control frames per second.
    pub control_hz: f64,
    /// Integration substeps per control frame.
    pub substeps: usize,
    pub friction: f64,
    pub solver_iterations: usize,
    pub contacts: bool,
    /// Penetration allowed before positional correction kicks in (m).
    pub contact_slop: f64,
    /// Fraction of penetration corrected per substep.
    pub baumgarte: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gravity: 9.81,
            control_hz: 30.0,
            substeps: 20,
            friction: 0.9,
            solver_iterations: 10,
            contacts: true,
            contact_slop: 5e-4,
            baumgarte: 0.2,
        }
    }
}

impl SimConfig {
    pub fn dt_sim(&self) -> f64 {
        1.0 / (self.control_hz * self.substeps as f64)
    }

    pub fn dt_control(&self) -> f64 {
        1.0 / self.control_hz
    }
}

/// An instantaneous impulse applied to a link at the start of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub link: usize,
    /// N·s, world frame.
    pub impulse: [f64; 2],
    pub frame: u64,
    /// Application point in the link frame; the centre of mass by default.
    #[serde(default)]
    pub local_point: [f64; 2],
}

/// Stable-PD torques `τ = −kp (q + q̇·dt − q̂) − kd q̇`, clamped to each joint's limit.
pub fn stable_pd_torques(
    model: &CharacterModel,
    state: &SimState,
    targets: &[f64],
    dt_sim: f64,
) -> Result<Vec<f64>, PhysicsError> {
    state.check_dims(model)?;
    if targets.len() != model.num_joints() {
        return Err(PhysicsError::DimensionMismatch { expected: model.num_joints(), found: targets.len() });
    }
    if let Some(j) = targets.iter().position(|t| !t.is_finite()) {
        return Err(PhysicsError::NonFiniteTarget { joint: j });
    }
    Ok(pd_raw(model, &state.q, &state.qd, targets, dt_sim)
        .into_iter()
        .zip(&model.joints)
        .map(|(tau, joint)| tau.clamp(-joint.torque_limit, joint.torque_limit))
        .collect())
}

fn pd_raw(model: &CharacterModel, q: &[f64], qd: &[f64], targets: &[f64], dt: f64) -> Vec<f64> {
    model
        .joints
        .iter()
        .enumerate()
        .map(|(j, joint)| -joint.kp * (q[j] + qd[j] * dt - targets[j]) - joint.kd * qd[j])
        .collect()
}

/// True iff a link outside `allowed_contacts` is touching the ground.
pub fn check_early_termination(model: &CharacterModel, state: &SimState, allowed_contacts: &[usize]) -> bool {
    (0..model.num_links()).any(|i| state.contacts.get(i).copied().unwrap_or(false) && !allowed_contacts.contains(&i))
}

/// Kinetic plus gravitational potential energy (J).
pub fn mechanical_energy(model: &CharacterModel, state: &SimState, gravity: f64) -> f64 {
    let kin = Kinematics::compute(model, &state.generalized_positions(), &state.generalized_velocities());
    model
        .links
        .iter()
        .enumerate()
        .map(|(i, link)| {
            let v = kin.vel[i];
            0.5 * link.mass * (v[0] * v[0] + v[1] * v[1])
                + 0.5 * link.inertia * kin.omega[i] * kin.omega[i]
                + link.mass * gravity * kin.poses[i].pos[1]
        })
        .sum()
}

/// Total linear momentum (kg·m/s).
pub fn linear_momentum(model: &CharacterModel, state: &SimState) -> [f64; 2] {
    Kinematics::compute(model, &state.generalized_positions(), &state.generalized_velocities()).momentum(model)
}

struct ContactRow {
    jn: Vec<f64>,
    jt: Vec<f64>,
    wn: Vec<f64>,
    wt: Vec<f64>,
    kn: f64,
    kt: f64,
    target: f64,
    lambda_n: f64,
    lambda_t: f64,
}

/// Deterministic planar character simulator.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: CharacterModel,
    config: SimConfig,
}

impl Simulator {
    pub fn new(model: CharacterModel, config: SimConfig) -> Result<Self, PhysicsError> {
        model.validate()?;
        Ok(Simulator { model, config })
    }

    pub fn model(&self) -> &CharacterModel {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Advances one control frame. `targets = None` switches the actuators
    /// off (passive damping still acts).
    pub fn step(
        &self,
        state: &SimState,
        targets: Option<&[f64]>,
        perturbations: &[Perturbation],
    ) -> Result<SimState, PhysicsError> {
        let model = &self.model;
        state.check_dims(model)?;
        if let Some(t) = targets {
            if t.len() != model.num_joints() {
                return Err(PhysicsError::DimensionMismatch { expected: model.num_joints(), found: t.len() });
            }
            if let Some(j) = t.iter().position(|v| !v.is_finite()) {
                return Err(PhysicsError::NonFiniteTarget { joint: j });
            }
        }
        for p in perturbations {
            if p.link >= model.num_links() {
                return Err(PhysicsError::UnknownLink(p.link));
            }
            if !(p.impulse[0].is_finite() && p.impulse[1].is_finite()) {
                return Err(PhysicsError::Divergence { frame: state.frame });
            }
        }

        let n = model.num_dofs();
        let dt = self.config.dt_sim();
        let total_mass = model.total_mass();
        let mut gpos = state.generalized_positions();
        let mut gvel = state.generalized_velocities();

        let mut momentum = Kinematics::compute(model, &gpos, &gvel).momentum(model);

        let active: Vec<&Perturbation> = perturbations.iter().filter(|p| p.frame == state.frame).collect();
        if !active.is_empty() {
            let kin = Kinematics::compute(model, &gpos, &gvel);
            let mut mass = self.mass_matrix(&kin);
            if !cholesky(&mut mass, n) {
                return Err(PhysicsError::Divergence { frame: state.frame });
            }
            for p in active {
                let pose = kin.poses[p.link];
                let r = rotate(p.local_point, pose.angle);
                let point = [pose.pos[0] + r[0], pose.pos[1] + r[1]];
                let (jx, jz) = kin.point_jacobian(p.link, point);
                let mut dv: Vec<f64> = (0..n).map(|k| jx[k] * p.impulse[0] + jz[k] * p.impulse[1]).collect();
                cholesky_solve(&mass, n, &mut dv);
                for k in 0..n {
                    gvel[k] += dv[k];
                }
                momentum[0] += p.impulse[0];
                momentum[1] += p.impulse[1];
            }
        }

        for _ in 0..self.config.substeps {
            let kin = Kinematics::compute(model, &gpos, &gvel);
            let mut system = self.mass_matrix(&kin);

            let mut force = vec![0.0; n];
            for (i, link) in model.links.iter().enumerate() {
                let gx = -link.mass * kin.bias[i][0];
                let gz = link.mass * (-self.config.gravity - kin.bias[i][1]);
                let rx = &kin.jv[2 * i * n..(2 * i + 1) * n];
                let rz = &kin.jv[(2 * i + 1) * n..(2 * i + 2) * n];
                for k in 0..n {
                    force[k] += rx[k] * gx + rz[k] * gz;
                }
            }

            let q = &gpos[3..];
            let qd = &gvel[3..];
            let raw = targets.map(|t| pd_raw(model, q, qd, t, dt));
            for (j, joint) in model.joints.iter().enumerate() {
                let mut tau = -joint.damping * qd[j];
                let mut implicit = joint.damping;
                if let Some(raw) = &raw {
                    let clamped = raw[j].clamp(-joint.torque_limit, joint.torque_limit);
                    if clamped == raw[j] {
                        implicit += joint.kp * dt + joint.kd;
                    }
                    tau += clamped;
                }
                force[3 + j] += tau;
                system[(3 + j) * n + 3 + j] += dt * implicit;
            }

            if !cholesky(&mut system, n) {
                return Err(PhysicsError::Divergence { frame: state.frame });
            }
            let mut dv: Vec<f64> = force.iter().map(|f| f * dt).collect();
            cholesky_solve(&system, n, &mut dv);
            for k in 0..n {
                gvel[k] += dv[k];
            }

            let mut in_contact = false;
            if self.config.contacts {
                if let Some(impulse) = self.solve_contacts(&kin, &system, &mut gvel, dt) {
                    momentum[0] += impulse[0];
                    momentum[1] += impulse[1];
                    in_contact = true;
                }
            }
            momentum[1] -= dt * total_mass * self.config.gravity;

            for k in 0..n {
                gpos[k] += dt * gvel[k];
            }
            for (j, joint) in model.joints.iter().enumerate() {
                let [lo, hi] = joint.limits;
                if gpos[3 + j] < lo {
                    gpos[3 + j] = lo;
                    gvel[3 + j] = gvel[3 + j].max(0.0);
                } else if gpos[3 + j] > hi {
                    gpos[3 + j] = hi;
                    gvel[3 + j] = gvel[3 + j].min(0.0);
                }
            }

            // The ground takes up momentum errors while in contact; in flight the
            // root velocity absorbs the configuration-change drift.
            let after = Kinematics::compute(model, &gpos, &gvel).momentum(model);
            if in_contact {
                momentum = after;
            } else {
                gvel[0] += (momentum[0] - after[0]) / total_mass;
                gvel[1] += (momentum[1] - after[1]) / total_mass;
            }

            if gpos.iter().chain(gvel.iter()).any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(PhysicsError::Divergence { frame: state.frame });
            }
        }

        let mut next = state.clone();
        next.set_generalized_positions(&gpos);
        next.set_generalized_velocities(&gvel);
        next.frame = state.frame + 1;
        next.contacts = self.contact_flags(&gpos);
        Ok(next)
    }

    fn mass_matrix(&self, kin: &Kinematics) -> Vec<f64> {
        let n = kin.n;
        let mut m = vec![0.0; n * n];
        for (i, link) in self.model.links.iter().enumerate() {
            let rx = &kin.jv[2 * i * n..(2 * i + 1) * n];
            let rz = &kin.jv[(2 * i + 1) * n..(2 * i + 2) * n];
            let rw = &kin.jw[i * n..(i + 1) * n];
            for a in 0..n {
                if rx[a] == 0.0 && rz[a] == 0.0 && rw[a] == 0.0 {
                    continue;
                }
                for b in 0..n {
                    m[a * n + b] += link.mass * (rx[a] * rx[b] + rz[a] * rz[b]) + link.inertia * rw[a] * rw[b];
                }
            }
        }
        m
    }

    /// Sequential-impulse ground contact. Returns the total world impulse
    /// applied, `None` when no corner is near the ground.
    fn solve_contacts(&self, kin: &Kinematics, factor: &[f64], gvel: &mut [f64], dt: f64) -> Option<[f64; 2]> {
        let n = kin.n;
        let cfg = &self.config;
        let mut rows = Vec::new();
        for (i, link) in self.model.links.iter().enumerate() {
            let pose = kin.poses[i];
            for c in link.corners() {
                let r = rotate(c, pose.angle);
                let point = [pose.pos[0] + r[0], pose.pos[1] + r[1]];
                let depth = point[1];
                if depth >= CONTACT_MARGIN {
                    continue;
                }
                let (jt, jn) = kin.point_jacobian(i, point);
                let mut wn = jn.clone();
                cholesky_solve(factor, n, &mut wn);
                let mut wt = jt.clone();
                cholesky_solve(factor, n, &mut wt);
                let kn: f64 = jn.iter().zip(&wn).map(|(a, b)| a * b).sum();
                let kt: f64 = jt.iter().zip(&wt).map(|(a, b)| a * b).sum();
                let target = if depth > 0.0 {
                    -depth / dt
                } else {
                    cfg.baumgarte * (-depth - cfg.contact_slop).max(0.0) / dt
                };
                rows.push(ContactRow { jn, jt, wn, wt, kn, kt, target, lambda_n: 0.0, lambda_t: 0.0 });
            }
        }
        if rows.is_empty() {
            return None;
        }
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        for _ in 0..cfg.solver_iterations {
            for row in rows.iter_mut() {
                let vn = dot(&row.jn, gvel);
                let new_n = (row.lambda_n + (row.target - vn) / row.kn).max(0.0);
                let delta = new_n - row.lambda_n;
                row.lambda_n = new_n;
                for k in 0..n {
                    gvel[k] += row.wn[k] * delta;
                }

                let vt = dot(&row.jt, gvel);
                let bound = cfg.friction * row.lambda_n;
                let new_t = (row.lambda_t - vt / row.kt).clamp(-bound, bound);
                let delta = new_t - row.lambda_t;
                row.lambda_t = new_t;
                for k in 0..n {
                    gvel[k] += row.wt[k] * delta;
                }
            }
        }
        Some(rows.iter().fold([0.0; 2], |acc, r| [acc[0] + r.lambda_t, acc[1] + r.lambda_n]))
    }

    fn contact_flags(&self, gpos: &[f64]) -> Vec<bool> {
        let poses = super::kinematics::link_poses(&self.model, [gpos[0], gpos[1]], gpos[2], &gpos[3..]);
        self.model
            .links
            .iter()
            .zip(&poses)
            .map(|(link, pose)| {
                link.corners()
                    .iter()
                    .any(|&c| pose.pos[1] + rotate(c, pose.angle)[1] < CONTACT_FLAG_HEIGHT)
            })
            .collect()
    }
}
