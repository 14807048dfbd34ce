pub mod physics;
pub mod motion;
pub mod nn;
pub mod adversarial;
pub mod rl;
pub mod service;
pub mod control;
