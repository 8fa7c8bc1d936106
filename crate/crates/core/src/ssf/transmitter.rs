use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use super::{FieldGrid, SsfConfig};
use crate::channel::LIGHT_SPEED;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Symbols sent on every channel and polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct TxRecord {
    pub constellation: Constellation,
    pub launch_power_mw: f64,
    /// `indices[channel][pol][symbol]`
    pub indices: Vec<[Vec<usize>; 2]>,
}

/// Root-raised-cosine amplitude response at `f_ghz`, scaled to `sps` in
/// the passband so that the shaped waveform keeps the symbol energy.
pub fn rrc_amplitude(f_ghz: f64, symbol_rate_gbd: f64, rolloff: f64, sps: f64) -> f64 {
    let f = f_ghz.abs();
    let lo = (1.0 - rolloff) * symbol_rate_gbd / 2.0;
    let hi = (1.0 + rolloff) * symbol_rate_gbd / 2.0;
    let rc = if f <= lo {
        1.0
    } else if f >= hi {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI / (rolloff * symbol_rate_gbd) * (f - lo)).cos())
    };
    sps * rc.sqrt()
}

/// Frequency of FFT bin `k` of an `n`-point grid at `fs_ghz`, GHz.
pub(crate) fn bin_frequency_ghz(k: usize, n: usize, fs_ghz: f64) -> f64 {
    let kk = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    kk * fs_ghz / n as f64
}

/// RRC-shaped WDM waveform with independent uniform symbols per channel
/// and polarization, `P/2` per polarization.
pub fn modulate(constellation: &Constellation, cfg: &SsfConfig, launch_power_mw: f64, data_seed: u64) -> Result<(FieldGrid, TxRecord)> {
    cfg.validate()?;
    if constellation.dims() != 2 {
        return Err(Error::InvalidArgument(format!(
            "split-step simulation takes 2-D constellations, got {} dims",
            constellation.dims()
        )));
    }
    let n = cfg.samples();
    let sps = cfg.samples_per_symbol;
    let fs = cfg.sample_rate_ghz();
    let amp = (launch_power_mw / 2.0).sqrt();
    let filter: Vec<f64> = (0..n)
        .map(|k| rrc_amplitude(bin_frequency_ghz(k, n, fs), cfg.link.symbol_rate_gbd, cfg.rrc_rolloff, sps as f64))
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut pols = [vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); n]];
    let mut indices = Vec::with_capacity(cfg.link.wdm_channels);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];

    for ch in 0..cfg.link.wdm_channels {
        let f_off = cfg.channel_offset_ghz(ch);
        let mut per_pol: [Vec<usize>; 2] = [vec![], vec![]];
        for (pol, out) in pols.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(data_seed, 0x7478, (ch * 2 + pol) as u64));
            let idx: Vec<usize> = (0..cfg.symbols_per_channel).map(|_| rng.gen_range(0..constellation.order())).collect();
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (s, &i) in idx.iter().enumerate() {
                let p = constellation.point(i);
                buf[s * sps] = Complex64::new(p[0], p[1]) * amp;
            }
            fwd.process(&mut buf);
            for (v, h) in buf.iter_mut().zip(&filter) {
                *v *= h / n as f64;
            }
            inv.process(&mut buf);
            for (k, (o, v)) in out.iter_mut().zip(&buf).enumerate() {
                let phase = 2.0 * std::f64::consts::PI * f_off * k as f64 / fs;
                *o += v * Complex64::from_polar(1.0, phase);
            }
            per_pol[pol] = idx;
        }
        indices.push(per_pol);
    }
    let [x, y] = pols;
    let center_thz = LIGHT_SPEED / (cfg.link.center_wavelength_nm * 1e-9) * 1e-12;
    let field = FieldGrid::new(x, y, fs, center_thz)?;
    Ok((field, TxRecord { constellation: constellation.clone(), launch_power_mw, indices }))
}
