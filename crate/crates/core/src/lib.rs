//! Boundary-conditioned diffusion over vectorized floorplans.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: polygons, floorplans, containment, adjacency extraction and rasterization.
//! - [`dataset`]: bubble graphs, JSON-lines records, the drift and pentagon constructions,
//!   corner-count histograms and coordinate quantization.
//! - [`diffusion`]: the cosine noise schedule, forward corruption, guidance blending and the
//!   ancestral sampler.
//! - [`denoiser`]: the masked-attention transformer with boundary cross-attention, its
//!   hand-written backward pass, training loop and checkpoints.
//! - [`metrics`]: feature extractors, FID, diversity score, graph and boundary compatibility.

pub mod dataset;
pub mod denoiser;
pub mod diffusion;
mod error;
pub mod geometry;
pub mod metrics;
pub(crate) mod rng;

pub use error::{Error, Result};
