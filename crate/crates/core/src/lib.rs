//! Blind single-channel speech dereverberation.
//!
//! The reverberant magnitude spectrogram is modeled as a per-frequency
//! convolution of the clean spectrogram with a non-negative sub-band
//! filter, optionally combined with an NMF dictionary model of clean
//! speech. Three estimators are provided:
//!
//! - [`run_baseline`]: filter and clean spectrogram alternate under a
//!   sparsity-regularized KL cost.
//! - [`run_integrated`]: the clean spectrogram is constrained to a
//!   dictionary product `w·x` inside the convolutive cost; supports
//!   frame stacking for temporal structure.
//! - [`run_weighted`]: keeps an explicit clean-spectrogram estimate and
//!   blends the convolutive fit with the dictionary fit through a
//!   weight ρ, solving each entry in closed form via Lambert W.
//!
//! All three produce a time-frequency gain that is applied to the
//! reverberant STFT and inverted with the reverberant phase. Everything
//! is deterministic given a seed, including under row-parallel
//! execution.

pub mod config;
pub mod error;
pub mod integrated;
pub mod metrics;
pub mod nctf;
pub mod nmf;
mod ops;
pub mod report;
pub mod signal;
pub mod stack;
pub mod stft;
pub mod synth;
pub mod weighted;

pub use config::{BasisMode, EngineConfig};
pub use error::{DerevError, Result};
pub use integrated::{run_integrated, IntegratedRun};
pub use metrics::{
    cepstral_distance, kl_fit, log_spectral_distance, synthesize_rir, MetricReport, RirSpec,
};
pub use nctf::{
    kl_divergence, rowwise_convolve, run_baseline, BaselineRun, RirModel, SparsityConfig, EPS,
};
pub use nmf::{nmf_factorize, read_basis, write_basis, NmfModel};
pub use report::{CostRow, FitReport};
pub use signal::{convolve_time, read_wav, write_wav, Signal};
pub use stack::{stack, StackedSpectrogram};
pub use stft::{
    apply_gain_and_synthesize, full_overlap_region, magnitude, stft_forward, ComplexSpectrogram,
    Spectrogram, StftConfig,
};
pub use weighted::{lambert_w0, run_weighted, WeightedRun, WeightedState};
