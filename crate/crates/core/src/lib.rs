// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod fluoro;
pub mod force;
pub mod geom;
pub mod kinematics;
pub mod obb;
pub mod protocol;
pub mod scene;
pub mod script;
pub mod teleop;
pub mod trajectory;
