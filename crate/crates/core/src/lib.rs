pub mod bench;
pub mod cfa;
pub mod codec;
pub mod decorrelate;
pub mod entropy;
pub mod error;
pub mod instrument;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod plane;
pub mod quantize;
pub mod wavelet;

pub use error::{Error, Result};
pub use plane::Plane;
