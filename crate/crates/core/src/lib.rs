//! Learnable nonlinear compression of STFT magnitude spectrograms for
//! speaker verification front-ends.

pub mod compressors;
pub mod error;
pub mod eval;
pub mod frontend;
pub mod gradcheck;
pub mod io;
pub mod trainer;

pub use error::{Error, Result};
