//! Three-party inference for binarized neural networks over replicated
//! secret shares.
//!
//! The data owner `P0` holds the input, the model owner `P1` holds the
//! weights and `P2` helps. Values live in `Z_{2^l}` with a fixed-point
//! interpretation; see [`ring`]. Protocols are built bottom-up:
//! [`sharing`] → [`ot`] → [`linear`] / [`nonlinear`], and are driven layer by
//! layer by [`engine`] from a plan produced by [`model`].

pub mod cost;
pub mod engine;
pub mod error;
pub mod io;
pub mod linear;
pub mod model;
pub mod nonlinear;
pub mod oracle;
pub mod ot;
pub mod party;
pub mod report;
pub mod ring;
pub mod sharing;
pub mod stats;
pub mod tensor;
pub mod train;
pub mod transport;
pub mod zoo;

pub use error::{Error, Result};
pub use party::Party;
pub use ring::{FixedPointCodec, Ring, RingElem};
pub use tensor::Tensor;
