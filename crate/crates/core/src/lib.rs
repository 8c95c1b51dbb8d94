//! Shape instantiation of partially-deployed stent-graft segments from a
//! single 2D marker observation.
//!
//! A spectral graph convolutional network predicts the partially-deployed
//! 3D marker references from the fully-deployed ones; a rigid-geometry
//! stack (local frames, Procrustes alignment, perspective-n-point) places
//! them intra-operatively and a parametric cone mesh turns the pose into a
//! segment surface.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod gcn;
pub mod geometry;
pub mod graph;
pub mod mesh;
pub mod pipeline;
