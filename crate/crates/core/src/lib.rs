//! Tensor networks with exact leverage-score sampling and sampled ALS.
//!
//! The crate is organized bottom-up:
//!
//! * [`tensor`] — dense tensors/matrices, index maps, matrix products, and a
//!   PSD pseudoinverse.
//! * [`network`] — tensor networks, contraction planning and execution, and
//!   the derived networks (Gram, marginal, design) used by the sampler.
//! * [`bruteforce`] — independent reference implementations used as oracles
//!   by tests and the `verify` suites.
//! * [`sampler`] — leverage-score distributions over tensor-network matrix
//!   rows, drawn exactly by sequential conditional sampling, plus the
//!   sketching operator built from the draws.
//! * [`format`] — decomposition format descriptions (topology templates),
//!   including canonical CP and tensor-ring constructors and a TOML schema.
//! * [`als`] — exact and sketched alternating least squares over a format.
//! * [`io`] — the `TNSR1` dense tensor file format.
//! * [`verify`] — runnable verification suites (exactness, sketching
//!   guarantee, oracle cross-checks).

pub mod als;
pub mod bruteforce;
pub mod error;
pub mod format;
pub mod io;
pub mod network;
pub mod sampler;
pub mod tensor;
pub mod verify;

pub use als::{
    als, cp_decompose, relative_error, sampled_als, tr_decompose, AlsConfig, AlsMode,
    DecompositionResult, JSpec, TensorSource,
};
pub use error::{Error, Result};
pub use format::{cp_format, tr_format, FormatKind, TnFormat};
pub use network::{ContractionPlan, Slot, TNMatrix, TensorNetwork};
pub use sampler::{PhiMatrix, SampleDraw, SketchSpec};
pub use tensor::{DenseMatrix, DenseTensor};
