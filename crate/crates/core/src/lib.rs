//! Lossy compression for the state-change traffic of data-parallel training.
//!
//! The codec pipeline has three stages:
//!
//! 1. [`quant3`]: 3-value quantization with a sparsity multiplier `s`, fed
//!    through a per-tensor error-accumulation buffer.
//! 2. [`encode::quartic_encode`]: packs five ternary digits into one byte
//!    (values `0..=242`).
//! 3. [`encode::zre_encode`]: collapses runs of the all-zero byte `121` into
//!    the run codes `243..=255`.
//!
//! [`blob`] wraps the result in a self-describing container, [`baselines`]
//! provides the comparison codecs that share that container, and [`psim`]
//! runs a deterministic parameter-server training simulation on top of all
//! of them.

pub mod baselines;
pub mod blob;
pub mod encode;
pub mod error;
pub mod metrics;
pub mod psim;
pub mod quant3;
pub mod tensor;

pub use baselines::{CodecKind, TensorCodec};
pub use blob::{compress, decompress, CompressedBlob};
pub use error::{Error, Result};
pub use metrics::{summarize, MetricsLog, StepRecord, TrafficSummary};
pub use psim::{run, SimConfig, SimState};
pub use quant3::{ErrorContext, QuantConfig, TernaryTensor};
pub use tensor::DenseTensor;
