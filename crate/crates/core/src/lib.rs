//! Dual-domain metal artifact reduction for CT, self-contained at desk scale.
//!
//! A corrupted axial slice is restored in both the projection domain and the
//! image domain:
//!
//! 1. threshold the high-density object out of the image,
//! 2. Radon-transform the image and the object mask,
//! 3. cut the object's trace out of the sinogram,
//! 4. fill the hole with a partial-convolution UNet (or linear interpolation
//!    for the classic baseline),
//! 5. reconstruct with filtered back-projection,
//! 6. clean residual streaks with an image-to-image UNet,
//! 7. paste the object back.
//!
//! Training is self-supervised: artifact-free phantoms are corrupted with
//! randomly generated object masks, so no paired clinical data is needed.
//!
//! Module map: [`tomo`] (Radon/FBP), [`shapegen`] (random object masks),
//! [`phantom`] (synthetic head volumes), [`corruption`] (steps 1-3 and 7),
//! [`limar`] (baseline), [`nn`] (tensor ops with exact gradients),
//! [`models`] (the two UNets), [`pipeline`] (orchestration, training,
//! evaluation), [`metrics`] (MAE/MSE/SSIM in HU), [`io`] (tensor container,
//! run config, PGM previews), [`selftest`] (oracle suites behind the
//! `selftest` CLI subcommand).

pub mod corruption;
pub mod error;
pub mod io;
pub mod limar;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod selftest;
pub mod shapegen;
pub mod tomo;

pub use error::{MarError, Result};
