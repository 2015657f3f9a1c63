//! Planning, simulation and imaging toolkit for Reflectance Transformation
//! Imaging with a light-carrying and a camera-carrying UAV.
//!
//! The pipeline stages are:
//!
//! 1. **Lighting plan** – light positions on a spherical cap around the
//!    object, either a Fibonacci lattice or the row-structured predictable grid.
//! 2. **Sequencing** – a closed visit order, by the predictable boustrophedon
//!    procedure or by ETSP local search.
//! 3. **Trajectory and MPC** – sampled reference with hover holds, tracked by
//!    a point-mass vehicle under position and orientation MPC.
//! 4. **Capture** – software-rendered images of a heightfield scene with
//!    optional localization noise on the recorded light poses.
//! 5. **PTM** – per-pixel biquadratic fitting, relighting and normal maps.
//! 6. **Experiments** – path-length and localization-noise studies.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod capture;
pub mod config;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod image;
pub mod lighting_plan;
pub mod mpc;
pub mod pipeline;
pub mod ptm;
pub mod sequencing;
pub mod trajectory;

pub use error::{Error, Result};
pub use geometry::{CameraModel, LightingVector, Vec3};
