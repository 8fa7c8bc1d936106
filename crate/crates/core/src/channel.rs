//! Differentiable GN and NLIN fiber channel models.
//!
//! The constellation always has unit mean energy per complex symbol; the
//! launch power only enters through the noise term `σ²_total / P`. Powers and
//! variances are in mW. NLIN coefficients χ are in W⁻².

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const LIGHT_SPEED: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gn,
    Nlin,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gn => "gn",
            ModelKind::Nlin => "nlin",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gn" => Ok(ModelKind::Gn),
            "nlin" => Ok(ModelKind::Nlin),
            _ => Err(Error::Config(format!("unknown model kind {s:?} (expected gn or nlin)"))),
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Physical description of a multi-span amplified link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub span_count: usize,
    pub span_length_km: f64,
    pub attenuation_db_per_km: f64,
    pub dispersion_ps_per_nm_km: f64,
    pub nonlinear_coefficient_per_w_km: f64,
    pub symbol_rate_gbd: f64,
    pub channel_spacing_ghz: f64,
    pub wdm_channels: usize,
    pub center_wavelength_nm: f64,
    pub noise_figure_db: f64,
}

impl Default for LinkConfig {
    /// 5 × 32 GBd channels on a 50 GHz grid over 20 × 100 km of standard fiber.
    fn default() -> Self {
        Self {
            span_count: 20,
            span_length_km: 100.0,
            attenuation_db_per_km: 0.2,
            dispersion_ps_per_nm_km: 16.46,
            nonlinear_coefficient_per_w_km: 1.3,
            symbol_rate_gbd: 32.0,
            channel_spacing_ghz: 50.0,
            wdm_channels: 5,
            center_wavelength_nm: 1550.0,
            noise_figure_db: 5.0,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("span_length_km", self.span_length_km),
            ("symbol_rate_gbd", self.symbol_rate_gbd),
            ("channel_spacing_ghz", self.channel_spacing_ghz),
            ("center_wavelength_nm", self.center_wavelength_nm),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("link.{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("nonlinear_coefficient_per_w_km", self.nonlinear_coefficient_per_w_km),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("link.{name} must be non-negative, got {v}")));
            }
        }
        for (name, v) in [("dispersion_ps_per_nm_km", self.dispersion_ps_per_nm_km), ("noise_figure_db", self.noise_figure_db)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("link.{name} must be finite, got {v}")));
            }
        }
        if self.span_count < 1 {
            return Err(Error::Config("link.span_count must be at least 1".into()));
        }
        if self.wdm_channels < 1 {
            return Err(Error::Config("link.wdm_channels must be at least 1".into()));
        }
        Ok(())
    }

    pub fn span_loss_db(&self) -> f64 {
        self.attenuation_db_per_km * self.span_length_km
    }

    /// Amplifier power gain that exactly compensates one span.
    pub fn span_gain(&self) -> f64 {
        10f64.powf(self.span_loss_db() / 10.0)
    }

    /// Power attenuation coefficient in 1/km.
    pub fn alpha_per_km(&self) -> f64 {
        self.attenuation_db_per_km * std::f64::consts::LN_10 / 10.0
    }

    /// Group-velocity dispersion β₂ in ps²/km.
    pub fn beta2_ps2_per_km(&self) -> f64 {
        let lambda = self.center_wavelength_nm * 1e-9;
        let d_s_per_m2 = self.dispersion_ps_per_nm_km * 1e-6;
        -d_s_per_m2 * lambda * lambda / (2.0 * std::f64::consts::PI * LIGHT_SPEED) * 1e27
    }

    /// Effective nonlinear length of one span in km.
    pub fn effective_length_km(&self) -> f64 {
        let a = self.alpha_per_km();
        if a == 0.0 {
            self.span_length_km
        } else {
            (1.0 - (-a * self.span_length_km).exp()) / a
        }
    }

    pub fn photon_energy_j(&self) -> f64 {
        PLANCK * LIGHT_SPEED / (self.center_wavelength_nm * 1e-9)
    }

    pub fn noise_figure_linear(&self) -> f64 {
        10f64.powf(self.noise_figure_db / 10.0)
    }

    pub fn total_length_km(&self) -> f64 {
        self.span_count as f64 * self.span_length_km
    }
}

/// ASE noise variance in mW accumulated over all spans within the
/// symbol-rate bandwidth: `spans · (G − 1) · hν · NF · R_s`.
pub fn ase_variance(link: &LinkConfig) -> f64 {
    let per_span_w = (link.span_gain() - 1.0)
        * link.photon_energy_j()
        * link.noise_figure_linear()
        * link.symbol_rate_gbd
        * 1e9;
    link.span_count as f64 * per_span_w * 1e3
}

/// Per-link coefficients of `σ²_NLIN = P³ (χ₁ + χ₂ (κ − 2) + χ₃ κ₃)`, in W⁻².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NlinCoefficients {
    pub chi1: f64,
    pub chi2: f64,
    pub chi3: f64,
}

impl NlinCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.chi1.is_finite() && self.chi1 > 0.0) {
            return Err(Error::Config(format!("chi1 must be positive, got {}", self.chi1)));
        }
        if !self.chi2.is_finite() || !self.chi3.is_finite() {
            return Err(Error::Config("chi2 and chi3 must be finite".into()));
        }
        Ok(())
    }

    /// Illustrative coefficient set for the default 5 × 32 GBd link with
    /// `spans` spans of 100 km. The modulation-dependent terms grow more
    /// slowly with distance than the modulation-independent one.
    pub fn default_for_spans(spans: usize) -> Self {
        let r = spans as f64 / 20.0;
        Self { chi1: 8.0e3 * r.powf(1.1), chi2: 4.0e3 * r.powf(0.6), chi3: 4.0e2 * r.powf(0.6) }
    }

    /// Same coefficients scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { chi1: self.chi1 * factor, chi2: self.chi2 * factor, chi3: self.chi3 * factor }
    }

    /// `χ₁ + χ₂ (κ − 2) + χ₃ κ₃` for the NLIN kind, `χ₁` for GN.
    pub fn eta(&self, kind: ModelKind, kappa: f64, kappa3: f64) -> f64 {
        match kind {
            ModelKind::Gn => self.chi1,
            ModelKind::Nlin => self.chi1 - 2.0 * self.chi2 + self.chi2 * kappa + self.chi3 * kappa3,
        }
    }
}

/// χ coefficients keyed by span count.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChiTable(pub BTreeMap<usize, NlinCoefficients>);

impl ChiTable {
    pub fn default_for(spans: &[usize]) -> Self {
        Self(spans.iter().map(|&n| (n, NlinCoefficients::default_for_spans(n))).collect())
    }

    pub fn get(&self, spans: usize) -> Result<NlinCoefficients> {
        self.0
            .get(&spans)
            .copied()
            .ok_or_else(|| Error::Config(format!("no chi coefficients for {spans} spans")))
    }
}

/// Everything the noise model needs at one operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams {
    pub kind: ModelKind,
    /// Launch power per channel, mW.
    pub launch_power_mw: f64,
    /// ASE variance, mW.
    pub sigma2_ase_mw: f64,
    pub coefficients: NlinCoefficients,
}

impl ChannelParams {
    pub fn new(kind: ModelKind, launch_power_mw: f64, sigma2_ase_mw: f64, coefficients: NlinCoefficients) -> Result<Self> {
        let p = Self { kind, launch_power_mw, sigma2_ase_mw, coefficients };
        p.validate()?;
        Ok(p)
    }

    /// Operating point of `link` at `power_dbm`.
    pub fn for_link(kind: ModelKind, link: &LinkConfig, power_dbm: f64, coefficients: NlinCoefficients) -> Result<Self> {
        Self::new(kind, dbm_to_mw(power_dbm), ase_variance(link), coefficients)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.launch_power_mw.is_finite() && self.launch_power_mw > 0.0) {
            return Err(Error::Config(format!("launch power must be positive, got {} mW", self.launch_power_mw)));
        }
        if !(self.sigma2_ase_mw.is_finite() && self.sigma2_ase_mw > 0.0) {
            return Err(Error::Config(format!("ASE variance must be positive, got {} mW", self.sigma2_ase_mw)));
        }
        self.coefficients.validate()
    }

    pub fn with_kind(self, kind: ModelKind) -> Self {
        Self { kind, ..self }
    }

    /// `P³` converted so that `P³ · χ[W⁻²]` comes out in mW.
    fn cube_factor(&self) -> f64 {
        self.launch_power_mw.powi(3) * 1e-6
    }

    /// Total noise variance `σ²_ASE + σ²_NLIN` in mW.
    pub fn total_variance(&self, kappa: f64, kappa3: f64) -> Result<f64> {
        Ok(self.sigma2_ase_mw + nlin_variance(self.launch_power_mw, kappa, kappa3, &self.coefficients, self.kind)?)
    }

    /// Noise variance per complex dimension at unit signal power.
    pub fn normalized_variance(&self, kappa: f64, kappa3: f64) -> Result<f64> {
        Ok(self.total_variance(kappa, kappa3)? / self.launch_power_mw)
    }
}

/// Normalized 4th and 6th order moments of a plain `[M × N]` point table.
pub fn moments_of(points: &[f64], dims: usize) -> Result<(f64, f64)> {
    if dims == 0 || !dims.is_multiple_of(2) || !points.len().is_multiple_of(dims) {
        return Err(Error::InvalidShape(format!("{} values do not form rows of {dims} real dims", points.len())));
    }
    let e: Vec<f64> = points.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).collect();
    let n = e.len() as f64;
    let e2 = e.iter().sum::<f64>() / n;
    if e2 == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let e4 = e.iter().map(|v| v * v).sum::<f64>() / n;
    let e6 = e.iter().map(|v| v * v * v).sum::<f64>() / n;
    Ok((e4 / (e2 * e2), e6 / (e2 * e2 * e2)))
}

/// `κ = E|x|⁴ / E[|x|²]²` and `κ₃ = E|x|⁶ / E[|x|²]³` on the tape, treating
/// each consecutive pair of real columns as one complex symbol.
pub fn moments(tape: &mut Tape, points: Var) -> Result<(Var, Var)> {
    let e = tape.abs2_pairs(points)?;
    let e2 = tape.mean(e)?;
    if tape.value(e2).item() == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let e_sq = tape.square(e)?;
    let e4 = tape.mean(e_sq)?;
    let e_cu = tape.mul(e_sq, e)?;
    let e6 = tape.mean(e_cu)?;
    let e2_sq = tape.square(e2)?;
    let e2_cu = tape.mul(e2_sq, e2)?;
    let kappa = tape.div(e4, e2_sq)?;
    let kappa3 = tape.div(e6, e2_cu)?;
    Ok((kappa, kappa3))
}

/// `σ²_NLIN` in mW. GN drops the moment terms.
pub fn nlin_variance(power_mw: f64, kappa: f64, kappa3: f64, coeffs: &NlinCoefficients, kind: ModelKind) -> Result<f64> {
    let v = power_mw.powi(3) * 1e-6 * coeffs.eta(kind, kappa, kappa3);
    if v < 0.0 {
        return Err(negative(v, kappa, kappa3, coeffs));
    }
    if !v.is_finite() {
        return Err(Error::NonFiniteVariance(v));
    }
    Ok(v)
}

fn negative(v: f64, kappa: f64, kappa3: f64, c: &NlinCoefficients) -> Error {
    Error::NegativeVariance { variance: v, kappa, kappa3, chi1: c.chi1, chi2: c.chi2, chi3: c.chi3 }
}

/// `σ²_NLIN` recorded on the tape as an affine function of κ and κ₃.
pub fn nlin_variance_on_tape(tape: &mut Tape, params: &ChannelParams, kappa: Var, kappa3: Var) -> Result<Var> {
    let f = params.cube_factor();
    let c = params.coefficients;
    let out = match params.kind {
        ModelKind::Gn => tape.constant(Tensor::scalar(f * c.chi1)),
        ModelKind::Nlin => {
            let base = tape.constant(Tensor::scalar(f * (c.chi1 - 2.0 * c.chi2)));
            let tk = tape.scale(kappa, f * c.chi2)?;
            let tk3 = tape.scale(kappa3, f * c.chi3)?;
            let s = tape.add(base, tk)?;
            tape.add(s, tk3)?
        }
    };
    let v = tape.value(out).item();
    if v < 0.0 {
        return Err(negative(v, tape.value(kappa).item(), tape.value(kappa3).item(), &c));
    }
    if !v.is_finite() {
        return Err(Error::NonFiniteVariance(v));
    }
    Ok(out)
}

/// Standard complex Gaussian noise: `N(0, 1/2)` per real dimension.
pub fn complex_gaussian(rows: usize, dims: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let data = (0..rows * dims)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        })
        .collect();
    Tensor::matrix(rows, dims, data).expect("rows*dims values")
}

/// `y = x + sqrt(σ²_total / P) · ε` with ε drawn from `noise_seed`.
///
/// Gradient flows into `x` and, through `σ_total`, into κ and κ₃.
pub fn channel_apply(
    tape: &mut Tape,
    x: Var,
    params: &ChannelParams,
    kappa: Var,
    kappa3: Var,
    noise_seed: u64,
) -> Result<Var> {
    let nlin = nlin_variance_on_tape(tape, params, kappa, kappa3)?;
    let ase = tape.constant(Tensor::scalar(params.sigma2_ase_mw));
    let total = tape.add(ase, nlin)?;
    let tv = tape.value(total).item();
    if !tv.is_finite() {
        return Err(Error::NonFiniteVariance(tv));
    }
    let normalized = tape.scale(total, 1.0 / params.launch_power_mw)?;
    let sigma = tape.sqrt(normalized)?;
    let (rows, dims) = tape.value(x).dims2();
    let eps = tape.constant(complex_gaussian(rows, dims, noise_seed));
    let noise = tape.mul(eps, sigma)?;
    tape.add(x, noise)
}

/// `10 log₁₀(P / (σ²_ASE + σ²_NLIN))` in dB.
pub fn effective_snr_db(params: &ChannelParams, kappa: f64, kappa3: f64) -> Result<f64> {
    Ok(10.0 * (params.launch_power_mw / params.total_variance(kappa, kappa3)?).log10())
}
