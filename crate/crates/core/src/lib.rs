//! Embedding multiplane images (MPIs) into ordinary JPEG images.
//!
//! An embedding network hides a 32-plane RGBA MPI inside a 3-channel image
//! that looks like the scene's reference photo. The image survives 8-bit
//! quantization, JPEG compression, colour edits and cropping; a restoration
//! network recovers the planes, which are then warped and composited into
//! novel views.
//!
//! Each pixel of the embedding image carries
//! [`EMBEDDING_BITS_PER_PIXEL`] bits of MPI payload:
//!
//! ```
//! use mpijpeg::{EMBEDDING_BITS_PER_PIXEL, NUM_PLANES};
//!
//! // planes x RGBA channels x bits per channel
//! assert_eq!(NUM_PLANES * 4 * 8, 1024);
//! assert_eq!(EMBEDDING_BITS_PER_PIXEL, 1024);
//! ```

pub mod error;
pub mod image;
pub mod jpeg;
pub mod losses;
pub mod metrics;
pub mod mpi;
pub mod nets;
pub mod perturb;
pub mod train;
pub mod weights;

pub use error::{Error, Result};
pub use image::Image;
pub use mpi::{CameraModel, MpiStack, RelativePose};

pub use mpijpeg_tensor as tensor;

/// Planes of a standard MPI.
pub const NUM_PLANES: usize = 32;

/// Planes of a dense stack before merging groups of four.
pub const PREMERGE_PLANES: usize = 128;

/// MPI payload per embedding-image pixel: 32 planes of 8-bit RGBA.
pub const EMBEDDING_BITS_PER_PIXEL: usize = NUM_PLANES * 4 * 8;
