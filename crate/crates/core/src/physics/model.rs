//! Character description: links, revolute joints, actuator gains.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PhysicsError;

/// A rigid box link. The link frame origin sits at its centre of mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    /// kg
    pub mass: f64,
    /// kg·m², about the centre of mass.
    pub inertia: f64,
    /// Half width along the link's local x axis and half height along local z (m).
    pub half_extents: [f64; 2],
    pub parent: Option<usize>,
}

impl Link {
    /// Solid box link with inertia derived from its mass and extents.
    pub fn solid_box(name: &str, mass: f64, half_extents: [f64; 2], parent: Option<usize>) -> Self {
        let (w, h) = (2.0 * half_extents[0], 2.0 * half_extents[1]);
        Link {
            name: name.to_string(),
            mass,
            inertia: mass * (w * w + h * h) / 12.0,
            half_extents,
            parent,
        }
    }

    /// Corner points in the link frame, counter-clockwise from bottom-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [hx, hz] = self.half_extents;
        [[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]]
    }
}

/// Revolute joint between `parent` and `child`. The joint angle is the child's
/// orientation relative to the parent, counter-clockwise positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    /// Joint position in the parent link frame (m).
    pub parent_anchor: [f64; 2],
    /// Joint position in the child link frame (m).
    pub child_anchor: [f64; 2],
    /// `[low, high]` angle limits (rad).
    pub limits: [f64; 2],
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
    /// N·m
    pub torque_limit: f64,
    /// Passive viscous damping, active even when the actuator is off (N·m·s/rad).
    #[serde(default)]
    pub damping: f64,
}

/// A planar articulated character: a tree of box links rooted at link 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<Joint>,
    /// Names of the links that may touch the ground without ending an episode.
    pub contact_allowed: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    character: CharacterModel,
}

impl CharacterModel {
    /// The default sagittal-plane biped: torso, two legs of thigh, shin and foot.
    /// 1.6 m tall, 45 kg.
    pub fn biped() -> Self {
        let torso = Link::solid_box("torso", 25.0, [0.1, 0.35], None);
        let mut links = vec![torso];
        let mut joints = Vec::new();
        for side in ["left", "right"] {
            let thigh = links.len();
            links.push(Link::solid_box(&format!("{side}_thigh"), 6.0, [0.06, 0.21], Some(0)));
            links.push(Link::solid_box(&format!("{side}_shin"), 3.0, [0.05, 0.21], Some(thigh)));
            links.push(Link::solid_box(&format!("{side}_foot"), 1.0, [0.12, 0.03], Some(thigh + 1)));
            joints.push(Joint {
                name: format!("{side}_hip"),
                parent: 0,
                child: thigh,
                parent_anchor: [0.0, -0.35],
                child_anchor: [0.0, 0.21],
                limits: [-1.0, 2.2],
                kp: 500.0,
                kd: 50.0,
                torque_limit: 300.0,
                damping: 1.0,
            });
            joints.push(Joint {
                name: format!("{side}_knee"),
                parent: thigh,
                child: thigh + 1,
                parent_anchor: [0.0, -0.21],
                child_anchor: [0.0, 0.21],
                limits: [-2.6, 0.0],
                kp: 500.0,
                kd: 50.0,
                torque_limit: 300.0,
                damping: 1.0,
            });
            joints.push(Joint {
                name: format!("{side}_ankle"),
                parent: thigh + 1,
                child: thigh + 2,
                parent_anchor: [0.0, -0.21],
                child_anchor: [-0.06, 0.03],
                limits: [-0.9, 0.9],
                kp: 300.0,
                kd: 30.0,
                torque_limit: 200.0,
                damping: 1.0,
            });
        }
        CharacterModel {
            name: "biped".to_string(),
            links,
            joints,
            contact_allowed: vec!["left_foot".to_string(), "right_foot".to_string()],
        }
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Generalized coordinates: root x, root z, root angle, then one per joint.
    pub fn num_dofs(&self) -> usize {
        3 + self.joints.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name.clone()).collect()
    }

    /// Link indices of [`CharacterModel::contact_allowed`].
    pub fn allowed_contact_links(&self) -> Vec<usize> {
        self.contact_allowed
            .iter()
            .filter_map(|n| self.link_index(n))
            .collect()
    }

    /// Index of the joint whose child is `link`, `None` for the root.
    pub fn joint_of_link(&self, link: usize) -> Option<usize> {
        self.joints.iter().position(|j| j.child == link)
    }

    /// Joint indices from the root down to (and including) the joint driving `link`.
    pub fn joint_path(&self, link: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = link;
        while let Some(j) = self.joint_of_link(cur) {
            path.push(j);
            cur = self.joints[j].parent;
        }
        path.reverse();
        path
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let invalid = |msg: String| Err(PhysicsError::InvalidModel(msg));
        if self.links.is_empty() {
            return invalid("model has no links".into());
        }
        if self.links[0].parent.is_some() {
            return invalid("link 0 must be the root".into());
        }
        for (i, link) in self.links.iter().enumerate() {
            if !(link.mass > 0.0 && link.inertia > 0.0) {
                return invalid(format!("link '{}' needs positive mass and inertia", link.name));
            }
            if !(link.half_extents[0] > 0.0 && link.half_extents[1] > 0.0) {
                return invalid(format!("link '{}' needs positive extents", link.name));
            }
            if i > 0 {
                match link.parent {
                    Some(p) if p < i => {}
                    _ => return invalid(format!("link '{}' must have a parent listed before it", link.name)),
                }
                let driving: Vec<_> = self.joints.iter().filter(|j| j.child == i).collect();
                if driving.len() != 1 {
                    return invalid(format!("link '{}' must be driven by exactly one joint", link.name));
                }
                if Some(driving[0].parent) != link.parent {
                    return invalid(format!("joint '{}' disagrees with link parent", driving[0].name));
                }
            }
        }
        for joint in &self.joints {
            if joint.child >= self.links.len() || joint.parent >= self.links.len() || joint.child == 0 {
                return invalid(format!("joint '{}' references a missing link", joint.name));
            }
            if !(joint.kp > 0.0 && joint.kd > 0.0 && joint.torque_limit > 0.0) {
                return invalid(format!("joint '{}' needs positive gains and torque limit", joint.name));
            }
            if joint.damping < 0.0 {
                return invalid(format!("joint '{}' has negative damping", joint.name));
            }
            if !(joint.limits[0] < joint.limits[1]) {
                return invalid(format!("joint '{}' limits must satisfy low < high", joint.name));
            }
        }
        for name in &self.contact_allowed {
            if self.link_index(name).is_none() {
                return invalid(format!("contact-allowed link '{name}' does not exist"));
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PhysicsError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| PhysicsError::Parse(e.to_string()))?;
        file.character.validate()?;
        Ok(file.character)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&ModelFile { character: self.clone() }).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PhysicsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PhysicsError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
