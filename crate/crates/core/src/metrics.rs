//! Mutual information of a constellation over a Gaussian channel, baseline
//! QAM constellations, and per-operating-point evaluation rows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_snr_db, ChannelParams};
pub use crate::constellation::{Constellation, Provenance};
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Number of independent batches used for the standard error.
const MI_BATCHES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiEstimate {
    /// bit per 4D (two polarizations).
    pub value: f64,
    /// bit per complex symbol.
    pub per2d: f64,
    /// Standard error of `value`, bit per 4D.
    pub std_error: f64,
    pub samples: usize,
    /// Noise variance per complex dimension at unit signal power.
    pub sigma2: f64,
}

impl MiEstimate {
    /// Builds the estimate from per-batch means of bit per constellation point.
    fn from_batches(batch_means: &[f64], dims: usize, samples: usize, sigma2: f64) -> Self {
        let nb = batch_means.len() as f64;
        let mean = batch_means.iter().sum::<f64>() / nb;
        let var = if batch_means.len() > 1 {
            batch_means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (nb - 1.0)
        } else {
            0.0
        };
        let per2d = mean / (dims / 2) as f64;
        let to4d = 2.0 / (dims / 2) as f64;
        Self { value: 2.0 * per2d, per2d, std_error: to4d * (var / nb).sqrt(), samples, sigma2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiSettings {
    pub samples: usize,
    pub seed: u64,
}

impl Default for MiSettings {
    fn default() -> Self {
        Self { samples: 200_000, seed: 0x5eed }
    }
}

/// Square M-QAM with unit mean energy, points in lexicographic order.
pub fn qam(order: usize) -> Result<Constellation> {
    let side = (order as f64).sqrt().round() as usize;
    if order < 4 || side * side != order || !order.is_power_of_two() {
        return Err(Error::InvalidArgument(format!("square QAM needs M in {{4, 16, 64, 256, ...}}, got {order}")));
    }
    let level = |i: usize| (2 * i) as f64 - (side - 1) as f64;
    let pts: Vec<f64> = (0..side).flat_map(|i| (0..side).flat_map(move |q| [level(i), level(q)])).collect();
    Constellation::new(order, 2, pts, format!("qam{order}"), Provenance::Qam).map(|mut c| {
        c.renormalized = false;
        c
    })
}

/// `log₂ Σⱼ exp((‖y − xᵢ‖² − ‖y − xⱼ‖²) / σ²)` for one received point.
#[inline]
pub(crate) fn penalty_bits(c: &Constellation, y: &[f64], sent: &[f64], inv_sigma2: f64) -> f64 {
    let d_sent: f64 = y.iter().zip(sent).map(|(a, b)| (a - b) * (a - b)).sum();
    // streaming log-sum-exp; the sent point contributes exp(0), so max ≥ 0
    let (mut mx, mut s) = (0.0f64, 0.0f64);
    for x in c.points().chunks_exact(c.dims()) {
        let d: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        let e = (d_sent - d) * inv_sigma2;
        if e > mx {
            s = s * (mx - e).exp() + 1.0;
            mx = e;
        } else {
            s += (e - mx).exp();
        }
    }
    (mx + s.ln()) * std::f64::consts::LOG2_E
}

/// Monte-Carlo MI of `c` over complex AWGN with variance `sigma2` per
/// complex dimension, assuming equiprobable points and an optimal receiver.
pub fn mi_montecarlo(c: &Constellation, sigma2: f64, samples: usize, seed: u64) -> MiEstimate {
    let m = c.order();
    let d = c.dims();
    let per_point = (samples.max(1)).div_ceil(m * MI_BATCHES).max(1);
    let inv = 1.0 / sigma2.max(1e-300);
    let std = (sigma2 / 2.0).sqrt();
    let means: Vec<f64> = (0..MI_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x4d49, b as u64));
            let mut y = vec![0.0; d];
            let mut acc = 0.0;
            for i in 0..m {
                let x = c.point(i);
                for _ in 0..per_point {
                    for (yk, xk) in y.iter_mut().zip(x) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *yk = xk + std * z;
                    }
                    acc += penalty_bits(c, &y, x, inv);
                }
            }
            c.bits() - acc / (m * per_point) as f64
        })
        .collect();
    MiEstimate::from_batches(&means, d, MI_BATCHES * m * per_point, sigma2)
}

/// MI with the noise variance fitted by a mismatched Gaussian receiver,
/// evaluated on given received samples. `sent[k]` indexes the point that
/// produced `received[k]` (rows of `c.dims()` values).
pub fn mi_from_received(c: &Constellation, received: &[f64], sent: &[usize], sigma2: f64) -> MiEstimate {
    let d = c.dims();
    let inv = 1.0 / sigma2.max(1e-300);
    let n = sent.len();
    let nb = MI_BATCHES.min(n).max(1);
    let chunk = n.div_ceil(nb);
    let means: Vec<f64> = (0..nb)
        .into_par_iter()
        .filter_map(|b| {
            let lo = b * chunk;
            let hi = ((b + 1) * chunk).min(n);
            (lo < hi).then(|| {
                let acc: f64 = (lo..hi).map(|k| penalty_bits(c, &received[k * d..(k + 1) * d], c.point(sent[k]), inv)).sum();
                c.bits() - acc / (hi - lo) as f64
            })
        })
        .collect();
    MiEstimate::from_batches(&means, d, n, sigma2)
}

/// One evaluated operating point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRow {
    pub mi: MiEstimate,
    pub kappa: f64,
    pub kappa3: f64,
    pub eff_snr_db: f64,
}

/// MI of `c` at the channel's noise level, where the NLIN part of the noise
/// is driven by `c`'s own moments.
pub fn evaluate(c: &Constellation, channel: &ChannelParams, settings: &MiSettings) -> Result<EvalRow> {
    let (kappa, kappa3) = c.moments();
    let sigma2 = channel.normalized_variance(kappa, kappa3)?;
    Ok(EvalRow {
        mi: mi_montecarlo(c, sigma2, settings.samples, settings.seed),
        kappa,
        kappa3,
        eff_snr_db: effective_snr_db(channel, kappa, kappa3)?,
    })
}

/// MI gain of `candidate` over `reference` in bit/4D.
pub fn gain(candidate: &EvalRow, reference: &EvalRow) -> f64 {
    candidate.mi.value - reference.mi.value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{LinkConfig, ModelKind, NlinCoefficients};

    #[test]
    fn qam_geometry() {
        let q4 = qam(4).unwrap();
        assert!((q4.min_distance().powi(2) - 2.0).abs() < 1e-12);
        let q16 = qam(16).unwrap();
        let (k, k3) = q16.moments();
        assert!((k - 1.32).abs() < 1e-12 && (k3 - 1.96).abs() < 1e-12);
        let q64 = qam(64).unwrap();
        assert_eq!(q64.order(), 64);
        assert!((q64.mean_energy() - 1.0).abs() < 1e-12);
        assert!(q64.min_distance() > 0.1);
        assert!(qam(8).is_err());
        assert!(qam(32).is_err());
        assert!(qam(2).is_err());
    }

    #[test]
    fn noiseless_limit() {
        for m in [4, 16, 64, 256] {
            let c = qam(m).unwrap();
            let e = mi_montecarlo(&c, 1e-12, 20_000, 1);
            assert!((e.per2d - (m as f64).log2()).abs() < 1e-3, "M={m}: {}", e.per2d);
            assert!((e.value - 2.0 * e.per2d).abs() < 1e-15);
        }
    }

    #[test]
    fn independence_limit() {
        let c = qam(16).unwrap();
        let e = mi_montecarlo(&c, 1e3, 50_000, 2);
        assert!(e.per2d < 0.01, "{}", e.per2d);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = qam(16).unwrap();
        assert_eq!(mi_montecarlo(&c, 0.1, 10_000, 9), mi_montecarlo(&c, 0.1, 10_000, 9));
        assert_ne!(mi_montecarlo(&c, 0.1, 10_000, 9).value, mi_montecarlo(&c, 0.1, 10_000, 10).value);
    }

    #[test]
    fn qam_at_30_db_is_near_capacity_of_alphabet() {
        for m in [4, 16, 64] {
            let c = qam(m).unwrap();
            let e = mi_montecarlo(&c, 1e-3, 50_000, 3);
            assert!(e.per2d >= 0.999 * (m as f64).log2(), "M={m}: {}", e.per2d);
        }
    }

    #[test]
    fn gn_eval_snr_ignores_shape() {
        let link = LinkConfig::default();
        let ch = ChannelParams::for_link(ModelKind::Gn, &link, 2.0, NlinCoefficients::default_for_spans(20)).unwrap();
        let s = MiSettings { samples: 5_000, seed: 1 };
        let a = evaluate(&qam(16).unwrap(), &ch, &s).unwrap();
        let b = evaluate(&qam(4).unwrap(), &ch, &s).unwrap();
        assert_eq!(a.eff_snr_db, b.eff_snr_db);
        assert_eq!(a.mi.sigma2, b.mi.sigma2);
    }

    #[test]
    fn nlin_eval_snr_rewards_low_kappa() {
        let link = LinkConfig::default();
        let ch = ChannelParams::for_link(ModelKind::Nlin, &link, 2.0, NlinCoefficients::default_for_spans(20)).unwrap();
        let s = MiSettings { samples: 5_000, seed: 1 };
        let a = evaluate(&qam(16).unwrap(), &ch, &s).unwrap();
        let b = evaluate(&qam(4).unwrap(), &ch, &s).unwrap();
        assert!(b.kappa < a.kappa);
        assert!(b.eff_snr_db > a.eff_snr_db);
        assert!((gain(&a, &b) - (a.mi.value - b.mi.value)).abs() < 1e-15);
    }

    #[test]
    fn received_sample_mi_noiseless() {
        let c = qam(16).unwrap();
        let sent: Vec<usize> = (0..2000).map(|k| (k * 7) % 16).collect();
        let rx: Vec<f64> = sent.iter().flat_map(|&i| c.point(i).to_vec()).collect();
        let e = mi_from_received(&c, &rx, &sent, 0.0);
        assert!((e.per2d - 4.0).abs() < 1e-3);
    }
}
