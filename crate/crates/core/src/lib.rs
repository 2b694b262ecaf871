//! Two-stage decoding of the rotated toric code under phenomenological
//! phase-flip noise: a local greedy pre-decoder followed by exact
//! minimum-weight perfect matching.

pub mod analysis;
pub mod bits;
pub mod codec;
pub mod error;
pub mod evaluation;
pub mod lattice;
pub mod matching;
pub mod noise;
pub mod predecoder;
pub mod rare_event;

pub use codec::{CodecError, CompressedSyndrome};
pub use error::{Error, Result};
pub use evaluation::{FailureStats, Pipeline, StopRule};
pub use lattice::{CodeLattice, EdgeId, VertexId};
pub use noise::{ErrorConfig, NoiseParams, SyndromeHistory};
pub use predecoder::PredecoderParams;
