use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::transmitter::{bin_frequency_ghz, rrc_amplitude, TxRecord};
use super::{FieldGrid, SsfConfig};
use crate::channel::{nlin_variance, ModelKind, NlinCoefficients};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::metrics::{mi_from_received, MiEstimate};

/// Below this normalized correlation between received and sent symbols the
/// receiver reports a synchronization failure.
const MIN_CORRELATION: f64 = 0.2;

/// Fewest symbols accepted by [`mi_from_samples`].
const MIN_SYMBOLS: usize = 1000;

/// Center-channel symbols after the receiver, scaled so the transmitted
/// constellation has unit mean energy.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedSymbols {
    pub constellation: Constellation,
    pub launch_power_mw: f64,
    pub symbols: [Vec<Complex64>; 2],
    pub sent: [Vec<usize>; 2],
}

impl ReceivedSymbols {
    pub fn len(&self) -> usize {
        self.symbols[0].len() + self.symbols[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sent_point(&self, i: usize) -> Complex64 {
        let p = self.constellation.point(i);
        Complex64::new(p[0], p[1])
    }

    /// Fitted circular Gaussian noise variance per polarization.
    pub fn noise_variance(&self) -> [f64; 2] {
        let fit = |pol: usize| {
            let s = &self.symbols[pol];
            s.iter().zip(&self.sent[pol]).map(|(r, &i)| (r - self.sent_point(i)).norm_sqr()).sum::<f64>() / s.len().max(1) as f64
        };
        [fit(0), fit(1)]
    }

    /// Total noise variance over both polarizations, mW, comparable with
    /// the analytic channel model.
    pub fn total_variance_mw(&self) -> f64 {
        let [a, b] = self.noise_variance();
        (a + b) / 2.0 * self.launch_power_mw
    }

    /// Constellation text followed by `pol sent re im` rows.
    pub fn to_text(&self) -> String {
        let mut s = self.constellation.to_text();
        let _ = writeln!(s, "# launch_power_mw: {:e}", self.launch_power_mw);
        let _ = writeln!(s, "# received symbols: pol sent re im");
        let _ = writeln!(s, "{}", self.len());
        for pol in 0..2 {
            for (r, &i) in self.symbols[pol].iter().zip(&self.sent[pol]) {
                let _ = writeln!(s, "{pol} {i} {:e} {:e}", r.re, r.im);
            }
        }
        s
    }
}

pub fn write_received_dump(path: &Path, received: &ReceivedSymbols) -> Result<()> {
    write_atomic(path, received.to_text().as_bytes())
}

/// Rotates `rx` by the data-aided mean phase against `tx` and returns the
/// normalized correlation magnitude.
pub(crate) fn remove_mean_phase(rx: &mut [Complex64], tx: &[Complex64]) -> f64 {
    let c: Complex64 = rx.iter().zip(tx).map(|(r, t)| r * t.conj()).sum();
    let er: f64 = rx.iter().map(|r| r.norm_sqr()).sum();
    let et: f64 = tx.iter().map(|t| t.norm_sqr()).sum();
    let rot = Complex64::from_polar(1.0, -c.arg());
    for r in rx.iter_mut() {
        *r *= rot;
    }
    c.norm() / (er * et).sqrt().max(f64::MIN_POSITIVE)
}

/// Ideal coherent receiver for the center channel: frequency shift, full
/// CD compensation, matched RRC filter, symbol-rate sampling and
/// data-aided phase removal per polarization.
pub fn receive(field: &FieldGrid, cfg: &SsfConfig, record: &TxRecord) -> Result<ReceivedSymbols> {
    cfg.validate()?;
    let n = field.len();
    if n != cfg.samples() || record.indices.len() != cfg.link.wdm_channels {
        return Err(Error::InvalidArgument(format!(
            "field of {n} samples and {} channels does not match the configuration",
            record.indices.len()
        )));
    }
    let ch = cfg.center_channel();
    let sps = cfg.samples_per_symbol;
    let fs = field.sample_rate_ghz;
    let f_off = cfg.channel_offset_ghz(ch);
    let beta2 = cfg.link.beta2_ps2_per_km();
    let length = cfg.link.total_length_km();
    let w_off = 2.0 * std::f64::consts::PI * f_off * 1e-3;
    let filter: Vec<Complex64> = (0..n)
        .map(|k| {
            let w = field.omega(k) + w_off;
            let h = rrc_amplitude(bin_frequency_ghz(k, n, fs), cfg.link.symbol_rate_gbd, cfg.rrc_rolloff, sps as f64);
            Complex64::from_polar(h / (sps * n) as f64, -beta2 / 2.0 * w * w * length)
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let scale = 1.0 / (record.launch_power_mw / 2.0).sqrt();
    let c = &record.constellation;
    let mut symbols: [Vec<Complex64>; 2] = [vec![], vec![]];
    for (pol, src) in [&field.x, &field.y].into_iter().enumerate() {
        let mut buf: Vec<Complex64> = src
            .iter()
            .enumerate()
            .map(|(k, v)| v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_off * k as f64 / fs))
            .collect();
        fwd.process(&mut buf);
        for (v, h) in buf.iter_mut().zip(&filter) {
            *v *= h;
        }
        inv.process(&mut buf);
        let mut rx: Vec<Complex64> = buf.iter().step_by(sps).map(|v| v * scale).collect();
        let tx: Vec<Complex64> = record.indices[ch][pol]
            .iter()
            .map(|&i| {
                let p = c.point(i);
                Complex64::new(p[0], p[1])
            })
            .collect();
        let corr = remove_mean_phase(&mut rx, &tx);
        if corr.is_nan() || corr < MIN_CORRELATION {
            return Err(Error::Synchronization { pol, correlation: corr });
        }
        symbols[pol] = rx;
    }
    Ok(ReceivedSymbols {
        constellation: c.clone(),
        launch_power_mw: record.launch_power_mw,
        symbols,
        sent: record.indices[ch].clone(),
    })
}

/// MI in bit/4D with a mismatched Gaussian receiver whose variance is
/// fitted per polarization, evaluated on the received samples.
pub fn mi_from_samples(received: &ReceivedSymbols) -> Result<MiEstimate> {
    if received.len() < MIN_SYMBOLS {
        return Err(Error::TooFewSymbols { needed: MIN_SYMBOLS, got: received.len() });
    }
    let sigma2 = received.noise_variance();
    let est: Vec<MiEstimate> = (0..2)
        .map(|pol| {
            let flat: Vec<f64> = received.symbols[pol].iter().flat_map(|r| [r.re, r.im]).collect();
            mi_from_received(&received.constellation, &flat, &received.sent[pol], sigma2[pol])
        })
        .collect();
    let per2d = (est[0].per2d + est[1].per2d) / 2.0;
    Ok(MiEstimate {
        value: 2.0 * per2d,
        per2d,
        std_error: (est[0].std_error.powi(2) + est[1].std_error.powi(2)).sqrt() / 2.0,
        samples: received.len(),
        sigma2: (sigma2[0] + sigma2[1]) / 2.0,
    })
}

/// Scales all NLIN coefficients by one common factor so that the model
/// predicts `measured_nli_mw` for a constellation with moments `kappa`,
/// `kappa3` at `power_mw`.
pub fn calibrate_coefficients(
    base: &NlinCoefficients,
    kappa: f64,
    kappa3: f64,
    power_mw: f64,
    measured_nli_mw: f64,
) -> Result<NlinCoefficients> {
    let model = nlin_variance(power_mw, kappa, kappa3, base, ModelKind::Nlin)?;
    if !(measured_nli_mw.is_finite() && measured_nli_mw > 0.0) || model <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "cannot calibrate: measured NLI {measured_nli_mw:e} mW, model {model:e} mW"
        )));
    }
    let out = base.scaled(measured_nli_mw / model);
    out.validate()?;
    Ok(out)
}
