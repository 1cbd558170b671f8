//! Predicts whether air pockets in a vacuum-debulked composite ply flatten
//! into an acceptable surface or lock into a crease.
//!
//! The pipeline: an organized scan of the draped ply is denoised and turned
//! into a heightmap over the mold reference surface; connected regions above
//! a cut height become air-pocket patches; each patch is meshed as a
//! pin-jointed net of inextensible fiber segments; the net's potential energy
//! (bending, in-plane shear, friction, gravity, vacuum pressure) is minimized
//! subject to segment inextensibility and mold non-penetration; the settled
//! net is post-processed with a geometric ridge model and classified as
//! crease or cease by the RMS of the residual height field.
//!
//! All geometry I/O is in millimeters; the energy model and solver work in
//! SI units (meters, Pascals, kilograms) internally.

pub mod cloud;
pub mod energy;
pub mod error;
pub mod geom;
pub mod grid;
pub mod meshing;
pub mod optimizer;
pub mod pipeline;
pub mod postprocess;
pub mod segmentation;
pub mod synth;
pub mod wrinkle2d;

pub use error::{Error, Result};
