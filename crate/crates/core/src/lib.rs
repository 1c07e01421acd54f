//! Disjunctive normal level sets.
//!
//! A level set function is modeled as the union of `N` soft convex polytopes,
//! each the intersection of `M` sigmoidal half-spaces:
//!
//! `f(x) = 1 - prod_i (1 - prod_j sigma(w_ij . x + b_ij))`.
//!
//! The half-space parameters are the only unknowns. Segmentation descends an
//! image energy with respect to them: the piecewise-constant two-phase energy
//! in [`twophase`], or a per-region deformation energy driven by K-means
//! labels in [`multiphase`]. Only the polytopes homed in the 3x3 grid cells
//! around a pixel take part in its evaluation.

mod accumulate;
pub mod bench;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod memory;
pub mod multiphase;
pub mod twophase;

pub use error::{Error, Result};
pub use geometry::{HalfSpace, LevelSetModel, ModelConfig, Point, Polytope};
pub use imaging::{GrayImage, LabelMap, Mask};
pub use multiphase::{segment_multiphase, InitStrategy, MultiphaseConfig, MultiphaseResult, RegionModel};
pub use twophase::{segment_two_phase, EvolutionConfig, Polarity, RegionStats, SegmentationResult};
