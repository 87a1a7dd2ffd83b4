//! Reactive grasping for arm-hand systems.
//!
//! Fingertip paths are planned globally in 3D, turned into task-space velocity
//! fields, and tracked locally by a joint-space QP that enforces collision,
//! joint-limit and velocity-limit constraints.

pub mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod kinematics;
pub mod pathopt;
pub mod qp;
pub mod scenario;
pub mod scenes;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};
pub use kinematics::{
    builtin_arm_hand, forward_kinematics, FingertipState, JointConfig, Kinematics, RobotModel,
};
