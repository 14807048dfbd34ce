//! Planar articulated rigid-body simulation of the character.

mod kinematics;
mod linalg;
mod model;
mod sim;
mod state;

use thiserror::Error;

pub use kinematics::{forward_kinematics, link_velocities, lowest_point, perp, rotate, LinkPose, LinkVelocity};
pub use model::{CharacterModel, Joint, Link};
pub use sim::{
    check_early_termination, linear_momentum, mechanical_energy, stable_pd_torques, Perturbation, SimConfig,
    Simulator, CONTACT_FLAG_HEIGHT,
};
pub use state::SimState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("state has {found} entries where the model needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite target for joint {joint}")]
    NonFiniteTarget { joint: usize },
    #[error("simulation diverged at frame {frame}")]
    Divergence { frame: u64 },
    #[error("no link with index {0}")]
    UnknownLink(usize),
    #[error("invalid character model: {0}")]
    InvalidModel(String),
    #[error("cannot parse character model: {0}")]
    Parse(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> Simulator {
        Simulator::new(CharacterModel::biped(), SimConfig::default()).unwrap()
    }

    #[test]
    fn pd_zero_at_target() {
        let m = CharacterModel::biped();
        let s = SimState::rest(&m, [0.0, 1.0]);
        let tau = stable_pd_torques(&m, &s, &s.q, 1.0 / 600.0).unwrap();
        assert!(tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn pd_formula_value() {
        let mut m = CharacterModel::biped();
        m.joints[0].kp = 100.0;
        m.joints[0].kd = 1e-300;
        let s = SimState::rest(&m, [0.0, 1.0]);
        let mut targets = vec![0.0; 6];
        targets[0] = 0.1;
        let tau = stable_pd_torques(&m, &s, &targets, 1.0 / 600.0).unwrap();
        assert!((tau[0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn pd_velocity_term_uses_predicted_position() {
        let m = CharacterModel::biped();
        let mut s = SimState::rest(&m, [0.0, 1.0]);
        s.qd[1] = 2.0;
        let dt = 1.0 / 600.0;
        let tau = stable_pd_torques(&m, &s, &[0.0; 6], dt).unwrap();
        let j = &m.joints[1];
        assert!((tau[1] - (-j.kp * 2.0 * dt - j.kd * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn pd_clamps_to_torque_limit() {
        let m = CharacterModel::biped();
        let s = SimState::rest(&m, [0.0, 1.0]);
        let tau = stable_pd_torques(&m, &s, &[3.0, -3.0, 0.0, 0.0, 0.0, 0.0], 1.0 / 600.0).unwrap();
        assert_eq!(tau[0], m.joints[0].torque_limit);
        assert_eq!(tau[1], -m.joints[1].torque_limit);
    }

    #[test]
    fn pd_rejects_non_finite_target() {
        let m = CharacterModel::biped();
        let s = SimState::rest(&m, [0.0, 1.0]);
        let err = stable_pd_torques(&m, &s, &[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0], 1.0 / 600.0);
        assert_eq!(err, Err(PhysicsError::NonFiniteTarget { joint: 1 }));
    }

    #[test]
    fn early_termination_cases() {
        let m = CharacterModel::biped();
        let allowed = m.allowed_contact_links();
        let mut s = SimState::rest(&m, [0.0, 1.0]);
        assert!(!check_early_termination(&m, &s, &allowed));
        s.contacts[3] = true;
        s.contacts[6] = true;
        assert!(!check_early_termination(&m, &s, &allowed));
        s.contacts[0] = true;
        assert!(check_early_termination(&m, &s, &allowed));
    }

    #[test]
    fn standing_pose_touches_ground() {
        let m = CharacterModel::biped();
        let s = SimState::standing(&m);
        assert!(lowest_point(&m, &s).abs() < 1e-12);
        let next = sim().step(&s, Some(&s.q.clone()), &[]).unwrap();
        assert!(next.contacts[3] && next.contacts[6]);
        assert!(!next.contacts[0]);
        assert_eq!(next.frame, 1);
    }

    #[test]
    fn divergence_reports_frame() {
        let m = CharacterModel::biped();
        let mut s = SimState::rest(&m, [0.0, 5.0]);
        s.frame = 7;
        s.root_vel = [2e6, 0.0];
        assert_eq!(sim().step(&s, None, &[]), Err(PhysicsError::Divergence { frame: 7 }));
    }

    #[test]
    fn perturbation_on_unknown_link_fails() {
        let m = CharacterModel::biped();
        let s = SimState::rest(&m, [0.0, 5.0]);
        let p = Perturbation { link: 99, impulse: [1.0, 0.0], frame: 0, local_point: [0.0; 2] };
        assert_eq!(sim().step(&s, None, &[p]), Err(PhysicsError::UnknownLink(99)));
    }
}
