//! Signed distances to scene objects and robot collision distance stacks.

mod cloud;
mod collision;
mod sdf;

pub use cloud::PointCloud;
pub use collision::{
    gamma, gamma_from, min_clearances, object_distance_stack, object_distance_stack_from,
    CollisionPair, CollisionPairSet, DistanceStack, PairOther, MIN_SELF_PAIR_SEPARATION,
};
pub use sdf::{sdf_eval, DistanceResult, Role, SdfObject, Shape};
