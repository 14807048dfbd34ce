//! Planar forward kinematics, link velocities and Jacobians.

use super::{CharacterModel, PhysicsError, SimState};

/// World pose of one link's centre of mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkPose {
    pub pos: [f64; 2],
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkVelocity {
    pub linear: [f64; 2],
    pub angular: f64,
}

#[inline]
pub fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Cross product of the out-of-plane unit axis with `v`.
#[inline]
pub fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

#[inline]
fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// World pose of every link. The root link takes the state's root pose.
pub fn forward_kinematics(model: &CharacterModel, state: &SimState) -> Result<Vec<LinkPose>, PhysicsError> {
    if state.q.len() != model.num_joints() {
        return Err(PhysicsError::DimensionMismatch {
            expected: model.num_joints(),
            found: state.q.len(),
        });
    }
    Ok(link_poses(model, state.root_pos, state.root_angle, &state.q))
}

pub(crate) fn link_poses(model: &CharacterModel, root_pos: [f64; 2], root_angle: f64, q: &[f64]) -> Vec<LinkPose> {
    let mut poses = vec![LinkPose { pos: root_pos, angle: root_angle }; model.num_links()];
    // joints are visited parent-first because links are topologically ordered
    let mut order: Vec<usize> = (0..model.num_joints()).collect();
    order.sort_by_key(|&j| model.joints[j].child);
    for j in order {
        let joint = &model.joints[j];
        let parent = poses[joint.parent];
        let angle = parent.angle + q[j];
        let anchor = add(parent.pos, rotate(joint.parent_anchor, parent.angle));
        poses[joint.child] = LinkPose { pos: sub(anchor, rotate(joint.child_anchor, angle)), angle };
    }
    poses
}

/// World linear and angular velocity of each link's centre of mass.
pub fn link_velocities(model: &CharacterModel, state: &SimState) -> Result<Vec<LinkVelocity>, PhysicsError> {
    state.check_dims(model)?;
    let kin = Kinematics::compute(model, &state.generalized_positions(), &state.generalized_velocities());
    Ok((0..model.num_links())
        .map(|i| LinkVelocity { linear: kin.vel[i], angular: kin.omega[i] })
        .collect())
}

/// Lowest world z of any link corner.
pub fn lowest_point(model: &CharacterModel, state: &SimState) -> f64 {
    let poses = link_poses(model, state.root_pos, state.root_angle, &state.q);
    let mut lowest = f64::INFINITY;
    for (link, pose) in model.links.iter().zip(&poses) {
        for c in link.corners() {
            lowest = lowest.min(pose.pos[1] + rotate(c, pose.angle)[1]);
        }
    }
    lowest
}

/// Kinematic quantities at one configuration, in generalized coordinates
/// `[x, z, θ, q_1 .. q_J]`.
#[derive(Debug, Clone)]
pub(crate) struct Kinematics {
    pub n: usize,
    pub poses: Vec<LinkPose>,
    /// World joint positions.
    pub anchors: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub omega: Vec<f64>,
    /// Velocity-product part of each COM acceleration.
    pub bias: Vec<[f64; 2]>,
    /// Linear Jacobian rows, `jv[(2 * link + axis) * n + dof]`.
    pub jv: Vec<f64>,
    /// Angular Jacobian, `jw[link * n + dof]`.
    pub jw: Vec<f64>,
    paths: Vec<Vec<usize>>,
}

impl Kinematics {
    pub fn compute(model: &CharacterModel, gpos: &[f64], gvel: &[f64]) -> Self {
        let n = model.num_dofs();
        let nl = model.num_links();
        let q = &gpos[3..];
        let poses = link_poses(model, [gpos[0], gpos[1]], gpos[2], q);

        let mut anchors = vec![[0.0; 2]; model.num_joints()];
        let mut vel = vec![[0.0; 2]; nl];
        let mut omega = vec![0.0; nl];
        let mut bias = vec![[0.0; 2]; nl];
        vel[0] = [gvel[0], gvel[1]];
        omega[0] = gvel[2];

        let mut order: Vec<usize> = (0..model.num_joints()).collect();
        order.sort_by_key(|&j| model.joints[j].child);
        for &j in &order {
            let joint = &model.joints[j];
            let (p, c) = (joint.parent, joint.child);
            let rp = rotate(joint.parent_anchor, poses[p].angle);
            let rc = rotate(joint.child_anchor, poses[c].angle);
            anchors[j] = add(poses[p].pos, rp);
            omega[c] = omega[p] + gvel[3 + j];
            let (wp, wc) = (omega[p], omega[c]);
            vel[c] = [
                vel[p][0] + wp * perp(rp)[0] - wc * perp(rc)[0],
                vel[p][1] + wp * perp(rp)[1] - wc * perp(rc)[1],
            ];
            bias[c] = [
                bias[p][0] - wp * wp * rp[0] + wc * wc * rc[0],
                bias[p][1] - wp * wp * rp[1] + wc * wc * rc[1],
            ];
        }

        let paths: Vec<Vec<usize>> = (0..nl).map(|i| model.joint_path(i)).collect();
        let mut jv = vec![0.0; 2 * nl * n];
        let mut jw = vec![0.0; nl * n];
        for i in 0..nl {
            let p = poses[i].pos;
            let row_x = 2 * i * n;
            let row_z = (2 * i + 1) * n;
            jv[row_x] = 1.0;
            jv[row_z + 1] = 1.0;
            let col = perp(sub(p, poses[0].pos));
            jv[row_x + 2] = col[0];
            jv[row_z + 2] = col[1];
            jw[i * n + 2] = 1.0;
            for &j in &paths[i] {
                let col = perp(sub(p, anchors[j]));
                jv[row_x + 3 + j] = col[0];
                jv[row_z + 3 + j] = col[1];
                jw[i * n + 3 + j] = 1.0;
            }
        }

        Kinematics { n, poses, anchors, vel, omega, bias, jv, jw, paths }
    }

    /// Linear Jacobian rows (x, z) of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, point: [f64; 2]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut jx = vec![0.0; n];
        let mut jz = vec![0.0; n];
        jx[0] = 1.0;
        jz[1] = 1.0;
        let col = perp(sub(point, self.poses[0].pos));
        jx[2] = col[0];
        jz[2] = col[1];
        for &j in &self.paths[link] {
            let col = perp(sub(point, self.anchors[j]));
            jx[3 + j] = col[0];
            jz[3 + j] = col[1];
        }
        (jx, jz)
    }

    /// Total linear momentum.
    pub fn momentum(&self, model: &CharacterModel) -> [f64; 2] {
        let mut p = [0.0; 2];
        for (link, v) in model.links.iter().zip(&self.vel) {
            p[0] += link.mass * v[0];
            p[1] += link.mass * v[1];
        }
        p
    }
}
