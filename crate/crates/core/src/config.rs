//! Engine configuration shared by the baseline, integrated and weighted
//! runners.

use crate::error::{DerevError, Result};
use crate::nctf::EPS;
use crate::stft::Spectrogram;
use serde::{Deserialize, Serialize};

/// Where the spectral basis comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    /// Basis learned on the reverberant input itself, updated per sweep.
    Online,
    /// Fixed low-rank basis trained offline on clean speech.
    FixedLowRank,
    /// Fixed overcomplete basis sampled from clean-speech frames.
    FixedOvercomplete,
}

impl BasisMode {
    pub fn is_fixed(self) -> bool {
        !matches!(self, BasisMode::Online)
    }
}

/// All tunables of a run. `lambda: None` selects the automatic rule
/// `0.1/(K·T)·Σy`, evaluated once on the input spectrogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Number of basis vectors R.
    pub rank: usize,
    /// Sweeps of the alternating updates.
    pub iterations: usize,
    /// Filter length in STFT frames (10 frames = 320 ms at the default
    /// 64 ms / 32 ms framing).
    pub lh: usize,
    /// Spectrogram exponent: 1 magnitude, 2 power.
    pub power_p: u8,
    /// Sparsity weight; `None` = automatic data-dependent rule.
    pub lambda: Option<f64>,
    /// Activation sharpening exponent applied after each sweep in
    /// production mode.
    pub phi_x: f64,
    /// Denominator guard.
    pub eps: f64,
    /// Seed for every random draw in the run.
    pub seed: u64,
    pub basis_mode: BasisMode,
    /// Temporal stacking window in frames; 1 disables stacking.
    pub t_st: usize,
    /// Blend weight of the weighted engine, strictly inside (0, 1).
    pub rho: f64,
    /// Disable normalization, clamping and sharpening so the descent
    /// theorems hold literally.
    pub pure_mode: bool,
    /// Plain NMF refinement sweeps used to initialize W and X.
    pub init_nmf_iters: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            rank: 100,
            iterations: 20,
            lh: 10,
            power_p: 1,
            lambda: None,
            phi_x: 1.02,
            eps: EPS,
            seed: 0,
            basis_mode: BasisMode::Online,
            t_st: 1,
            rho: 0.75,
            pure_mode: false,
            init_nmf_iters: 10,
        }
    }
}

impl EngineConfig {
    /// Defaults adjusted for a basis variant: the overcomplete basis is
    /// much larger and prefers a smaller blend weight.
    pub fn for_basis_mode(mode: BasisMode) -> Self {
        let mut cfg = EngineConfig::default();
        cfg.basis_mode = mode;
        if mode == BasisMode::FixedOvercomplete {
            cfg.rank = 3000;
            cfg.rho = 0.45;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(DerevError::InvalidSpec("iterations must be ≥ 1".into()));
        }
        if self.lh < 1 || self.t_st < 1 || self.rank < 1 {
            return Err(DerevError::InvalidSpec(format!(
                "lh = {}, t_st = {}, rank = {} must all be ≥ 1",
                self.lh, self.t_st, self.rank
            )));
        }
        if self.power_p != 1 && self.power_p != 2 {
            return Err(DerevError::InvalidSpec(format!(
                "power_p {} must be 1 or 2",
                self.power_p
            )));
        }
        if !(self.phi_x.is_finite() && self.phi_x >= 1.0) {
            return Err(DerevError::InvalidSpec(format!(
                "phi_x {} must be a finite value ≥ 1",
                self.phi_x
            )));
        }
        if !(self.eps > 0.0) {
            return Err(DerevError::InvalidSpec("eps must be > 0".into()));
        }
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(DerevError::InvalidSpec(format!(
                    "lambda {l} must be finite and ≥ 0"
                )));
            }
        }
        Ok(())
    }

    /// The effective sparsity weight for this input.
    pub fn resolve_lambda(&self, y: &Spectrogram) -> f64 {
        match self.lambda {
            Some(l) => l,
            None => {
                let (k, t) = y.values.dim();
                0.1 / (k as f64 * t as f64) * y.values.sum()
            }
        }
    }
}
