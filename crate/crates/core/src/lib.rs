#![cfg_attr(not(feature = "std"), no_std)]

//! Numerical core of the `spkver` speaker-verification toolkit.
//!
//! Everything here is a pure function of its inputs and only needs an
//! allocator: MFCC front-end, the TDNN embedding network with hand-written
//! backward pass, softmax / A-softmax / triplet criteria, the SGD trainer,
//! cosine / Euclidean / PLDA scoring, EER and DET evaluation, and a
//! synthetic speaker generator. File formats, the CLI and the pipeline live in
//! the `spkver` crate.
//!
//! ```
//! use spkver_core::losses::phi;
//!
//! // theta = pi with margin 2 gives 1 - 2m.
//! let (value, k) = phi(-1.0, 2);
//! assert_eq!(k, 1);
//! assert!((value + 3.0).abs() < 1e-12);
//! ```

extern crate alloc;

pub mod backend;
pub mod error;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod losses;
pub mod net;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
