//! Backprojection arrays for light-field deconvolution.
//!
//! A light-field PSF `H(s, t, x, y, z)` stores one sensor pattern per voxel
//! phase of the elementary cell. The backprojection array `H'` holds, for each
//! pixel phase, the object-space pattern that pixel sees. [`transform`]
//! computes `H'` from `H` by copying elements along a closed-form index map;
//! [`oracle`] gets the same array the slow way, by simulating the forward
//! projection. [`projector`] uses both arrays for forward projection,
//! backprojection and Richardson-Lucy deconvolution.

pub mod array;
pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod oracle;
pub mod projector;
pub mod synth;
pub mod transform;

pub use array::{BackprojArray, Dims5, Image, Plane, PsfArray, Volume};
pub use error::{Error, Result};
pub use io::{Dtype, LoadOptions, Lf5};
pub use oracle::{oracle_backprojection, oracle_backprojection_into};
pub use projector::{backproject_adjoint, backproject_via_ht, forward_project, normalizer, rl_run, RlOptions, RlState};
pub use synth::{random_psf, synth_psf, LayoutKind, MlaLayout, Optics};
pub use transform::{compute_backprojection, compute_backprojection_into, compute_psf_from_backprojection, SourceWindow};
