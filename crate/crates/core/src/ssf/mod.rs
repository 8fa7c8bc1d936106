//! Dual-polarization WDM split-step Fourier simulation used as an
//! independent check of the analytic channel models.
//!
//! Units: time in ps, frequency in THz, distance in km, field in √mW.

mod fiber;
mod receiver;
mod transmitter;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::LinkConfig;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub use fiber::{propagate, Propagator};
pub use receiver::{calibrate_coefficients, mi_from_samples, receive, write_received_dump, ReceivedSymbols};
pub use transmitter::{modulate, rrc_amplitude, TxRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsfConfig {
    #[serde(skip)]
    pub link: LinkConfig,
    pub samples_per_symbol: usize,
    pub symbols_per_channel: usize,
    pub steps_per_span: usize,
    pub rrc_rolloff: f64,
    pub seed: u64,
}

impl Default for SsfConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            samples_per_symbol: 16,
            symbols_per_channel: 1 << 14,
            steps_per_span: 300,
            rrc_rolloff: 0.05,
            seed: 1,
        }
    }
}

impl SsfConfig {
    pub fn validate(&self) -> Result<()> {
        let fs = self.sample_rate_ghz();
        let bw = self.link.wdm_channels as f64 * self.link.channel_spacing_ghz;
        if fs < bw {
            return Err(Error::Aliasing { sample_rate_ghz: fs, wdm_bandwidth_ghz: bw });
        }
        if self.steps_per_span < 10 {
            return Err(Error::Config(format!("ssf.steps_per_span must be at least 10, got {}", self.steps_per_span)));
        }
        if self.symbols_per_channel < 16 {
            return Err(Error::Config("ssf.symbols_per_channel must be at least 16".into()));
        }
        if !(0.0..=1.0).contains(&self.rrc_rolloff) {
            return Err(Error::Config(format!("ssf.rrc_rolloff must be in [0, 1], got {}", self.rrc_rolloff)));
        }
        Ok(())
    }

    pub fn sample_rate_ghz(&self) -> f64 {
        self.samples_per_symbol as f64 * self.link.symbol_rate_gbd
    }

    pub fn samples(&self) -> usize {
        self.samples_per_symbol * self.symbols_per_channel
    }

    /// Frequency offset of WDM channel `k` from the grid center, GHz.
    pub fn channel_offset_ghz(&self, k: usize) -> f64 {
        (k as f64 - (self.link.wdm_channels as f64 - 1.0) / 2.0) * self.link.channel_spacing_ghz
    }

    pub fn center_channel(&self) -> usize {
        self.link.wdm_channels / 2
    }
}

/// Sampled dual-polarization field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_rate_ghz: f64,
    /// Optical frequency the baseband is referenced to, THz.
    pub center_frequency_thz: f64,
}

impl FieldGrid {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate_ghz: f64, center_frequency_thz: f64) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::InvalidArgument(format!("polarization lengths {} and {} differ or are empty", x.len(), y.len())));
        }
        Ok(Self { x, y, sample_rate_ghz, center_frequency_thz })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sum of `|x|² + |y|²` over samples.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum()
    }

    /// Mean power over samples, mW.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Sample spacing, ps.
    pub fn dt_ps(&self) -> f64 {
        1e3 / self.sample_rate_ghz
    }

    /// Angular frequency of FFT bin `k`, rad/ps.
    pub fn omega(&self, k: usize) -> f64 {
        let n = self.len();
        let df_thz = self.sample_rate_ghz * 1e-3 / n as f64;
        let kk = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
        2.0 * std::f64::consts::PI * kk * df_thz
    }
}

/// Transmits `constellation` at `launch_power_mw` per channel over
/// `cfg.link` and returns the received center channel. ASE is injected
/// when `with_noise` is set. Seeds are derived from `cfg.seed`.
pub fn simulate(constellation: &Constellation, cfg: &SsfConfig, launch_power_mw: f64, with_noise: bool) -> Result<ReceivedSymbols> {
    let (field, record) = modulate(constellation, cfg, launch_power_mw, cfg.seed)?;
    let noise_seed = with_noise.then(|| derive_seed(cfg.seed, 4, 0));
    let out = propagate(field, &cfg.link, cfg.steps_per_span, noise_seed)?;
    receive(&out, cfg, &record)
}

/// RMS of `a − b` relative to the RMS of `b`, over both polarizations.
pub fn relative_rms_difference(a: &FieldGrid, b: &FieldGrid) -> f64 {
    let num: f64 = a.x.iter().zip(&b.x).chain(a.y.iter().zip(&b.y)).map(|(p, q)| (p - q).norm_sqr()).sum();
    (num / b.energy()).sqrt()
}
