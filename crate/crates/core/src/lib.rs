//! Geometry-integrated projection synthesis for cone-beam X-ray imaging.
//!
//! The crate is organized around a small number of concrete stages:
//!
//! * [`volume`] / [`phantom`]: attenuation volumes on regular grids, file I/O,
//!   preprocessing, and procedural ellipsoid phantoms for testing.
//! * [`geometry`]: circular-orbit cone-beam geometry (source positions,
//!   detector plane, per-pixel rays).
//! * [`projector`]: a matched forward/back-projection operator pair. The
//!   back-projector is the exact linear transpose of the forward projector,
//!   which the test suite verifies through inner-product identities.
//! * [`transform`]: lifts detector-plane feature images into a volume,
//!   optionally refines them, and re-projects them into novel views.
//! * [`synthesis`]: the end-to-end pipeline (encode, transform, generate)
//!   with pluggable stages and deterministic reference implementations.
//! * [`losses`] / [`metrics`]: training-style objectives and image quality
//!   metrics used to evaluate synthesized views.
//!
//! # Conventions
//!
//! Volume metadata (`dims`, `spacing`, `origin`) is ordered `(z, y, x)`;
//! world-space points and directions are `(x, y, z)` in millimeters. Angles
//! are in degrees, counter-clockwise about `+z` when viewed from above, with
//! the source at `(0, -sad, 0)` for angle 0.
//!
//! All randomized constructions take explicit seeds, and every parallel code
//! path is deterministic: results are bit-identical regardless of thread
//! count.

pub mod error;
mod fileio;
pub mod geometry;
pub mod grid;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod projection;
pub mod projector;
pub mod synthesis;
pub mod transform;
pub mod vec3;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{ConeBeamGeometry, Ray};
pub use grid::GridSpec;
pub use losses::LossWeights;
pub use metrics::MetricReport;
pub use phantom::PhantomSpec;
pub use projection::Projection;
pub use projector::FeatureVolume;
pub use vec3::Vec3;
pub use volume::Volume;
