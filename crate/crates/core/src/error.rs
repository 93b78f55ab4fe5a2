use thiserror::Error;

use crate::transport::PartyId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RingError {
    #[error("unsupported ring width {0}; expected a multiple of 8 in 8..=64")]
    UnsupportedWidth(u32),
    #[error("{frac_bits} fractional bits do not fit a {ring_bits}-bit ring")]
    FracBitsTooLarge { frac_bits: u32, ring_bits: u32 },
    #[error("value {value} is outside the encodable range (|x| < {limit})")]
    Overflow { value: f64, limit: f64 },
    #[error("word buffer of {len} bytes is not a multiple of {width}")]
    BadWordBuffer { len: usize, width: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShapeError {
    #[error("shape {shape:?} implies {expected} elements but {got} were given")]
    Length {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    Mismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShareError {
    #[error("shares come from the same party {0}")]
    SameParty(PartyId),
    #[error("replicated component {component} disagrees between parties (first at element {index})")]
    Inconsistent { component: usize, index: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("timed out waiting for tag {tag} from {from}")]
    Timeout { from: PartyId, tag: u16 },
    #[error("protocol desync: expected tag {expected} from {from}, got {got}")]
    TagMismatch {
        from: PartyId,
        expected: u16,
        got: u16,
    },
    #[error("connection to {0} lost")]
    Disconnected(PartyId),
    #[error("cannot send to self ({0})")]
    SelfSend(PartyId),
    #[error("payload of {got} bytes does not hold {expected} ring words")]
    PayloadSize { expected: usize, got: usize },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}

/// Failure inside a running protocol.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error("{0}")]
    Precondition(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("layer {layer} ({kind}): {msg}")]
    Invalid {
        layer: usize,
        kind: &'static str,
        msg: String,
    },
    #[error("layer {layer}: batch-norm channel {channel} has non-positive scale {gamma}; a Sign threshold cannot absorb it")]
    NonPositiveGamma {
        layer: usize,
        channel: usize,
        gamma: f64,
    },
    #[error("layer {layer} ({kind}): worst-case magnitude {bound:.4e} raw exceeds the budget {budget:.4e}")]
    RangeBudget {
        layer: usize,
        kind: &'static str,
        bound: f64,
        budget: f64,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Ring(#[from] RingError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("unexpected end of data at byte {offset} (needed {needed} more)")]
    Truncated { offset: usize, needed: usize },
    #[error("bad magic {found:?} at byte 0")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("checksum mismatch over body (bytes {start}..{end})")]
    Checksum { start: usize, end: usize },
    #[error("invalid data at byte {offset}: {msg}")]
    Invalid { offset: usize, msg: String },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset error: {0}")]
    Data(String),
    #[error("cross-entropy undefined: q[{index}] = 0 while p[{index}] = {p}")]
    Domain { index: usize, p: f64 },
}

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ring(#[from] RingError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("party {party} failed: {source}")]
    Party {
        party: PartyId,
        #[source]
        source: Box<Error>,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

impl From<TransportError> for Error {
    fn from(e: TransportError) -> Self {
        Error::Protocol(e.into())
    }
}

impl Error {
    /// The transport-level cause, if this error ultimately came from the wire.
    pub fn transport_cause(&self) -> Option<&TransportError> {
        match self {
            Error::Protocol(ProtocolError::Transport(t)) => Some(t),
            Error::Party { source, .. } => source.transport_cause(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
