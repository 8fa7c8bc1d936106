use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};

use super::FieldGrid;
use crate::channel::LinkConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Dual-polarization factor of the Manakov equation.
const MANAKOV: f64 = 8.0 / 9.0;

/// Symmetric split-step integrator for one link, with FFT plans and the
/// linear step operators cached for a fixed grid.
pub struct Propagator {
    link: LinkConfig,
    steps_per_span: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    /// γ·h_eff·8/9 in 1/mW.
    nl_phase_per_mw: f64,
    ase_sample_variance_mw: f64,
}

impl Propagator {
    pub fn new(link: &LinkConfig, steps_per_span: usize, grid: &FieldGrid) -> Result<Self> {
        link.validate()?;
        if steps_per_span == 0 {
            return Err(Error::InvalidArgument("steps_per_span must be positive".into()));
        }
        let n = grid.len();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());

        let h = link.span_length_km / steps_per_span as f64;
        let alpha = link.alpha_per_km();
        let beta2 = link.beta2_ps2_per_km();
        // the 1/n of the inverse transform is folded into the operators
        let op = |len: f64| -> Vec<Complex64> {
            (0..n)
                .map(|k| {
                    let w = grid.omega(k);
                    Complex64::new(-alpha / 2.0 * len, beta2 / 2.0 * w * w * len).exp() / n as f64
                })
                .collect()
        };
        let h_eff = if alpha > 0.0 { (1.0 - (-alpha * h).exp()) / alpha * (alpha * h / 2.0).exp() } else { h };
        let gamma_per_mw_km = link.nonlinear_coefficient_per_w_km * 1e-3;

        // per polarization: (G − 1)·hν·NF/2 W/Hz over fs
        let g = link.span_gain();
        let psd_w_per_hz = (g - 1.0) * link.photon_energy_j() * link.noise_figure_linear() / 2.0;
        let ase = psd_w_per_hz * grid.sample_rate_ghz * 1e9 * 1e3;

        Ok(Self {
            link: link.clone(),
            steps_per_span,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            half: op(h / 2.0),
            full: op(h),
            nl_phase_per_mw: MANAKOV * gamma_per_mw_km * h_eff,
            ase_sample_variance_mw: ase,
        })
    }

    fn linear(&mut self, field: &mut FieldGrid, full: bool) {
        let op = if full { &self.full } else { &self.half };
        for pol in [&mut field.x, &mut field.y] {
            self.fwd.process_with_scratch(pol, &mut self.scratch);
            for (v, o) in pol.iter_mut().zip(op) {
                *v *= o;
            }
            self.inv.process_with_scratch(pol, &mut self.scratch);
        }
    }

    fn nonlinear(&self, field: &mut FieldGrid) {
        let c = self.nl_phase_per_mw;
        for (a, b) in field.x.iter_mut().zip(field.y.iter_mut()) {
            let rot = Complex64::from_polar(1.0, c * (a.norm_sqr() + b.norm_sqr()));
            *a *= rot;
            *b *= rot;
        }
    }

    /// Lumped amplifier: gain `e^{αL}` plus ASE when `rng` is given.
    fn amplify(&self, field: &mut FieldGrid, rng: Option<&mut ChaCha8Rng>) {
        let amp = self.link.span_gain().sqrt();
        for v in field.x.iter_mut().chain(field.y.iter_mut()) {
            *v *= amp;
        }
        if let Some(rng) = rng {
            let std = (self.ase_sample_variance_mw / 2.0).sqrt();
            for v in field.x.iter_mut().chain(field.y.iter_mut()) {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *v += Complex64::new(re, im) * std;
            }
        }
    }

    /// One span without amplification. `span` is only used for error reports.
    pub fn span(&mut self, field: &mut FieldGrid, span: usize) -> Result<()> {
        self.linear(field, false);
        for step in 0..self.steps_per_span {
            let before = field.energy();
            self.nonlinear(field);
            let last = step + 1 == self.steps_per_span;
            self.linear(field, !last);
            let after = field.energy();
            if !after.is_finite() || after > 10.0 * before {
                return Err(Error::NumericalBlowUp { span, step, growth: after / before });
            }
        }
        Ok(())
    }

    /// Propagates over every span, amplifying after each one. ASE is added
    /// only when `noise_seed` is given.
    pub fn run(&mut self, mut field: FieldGrid, noise_seed: Option<u64>) -> Result<FieldGrid> {
        if field.len() != self.full.len() {
            return Err(Error::InvalidArgument(format!(
                "propagator built for {} samples, field has {}",
                self.full.len(),
                field.len()
            )));
        }
        if !field.energy().is_finite() {
            return Err(Error::InvalidArgument("field energy is not finite".into()));
        }
        for s in 0..self.link.span_count {
            self.span(&mut field, s)?;
            let mut rng = noise_seed.map(|seed| ChaCha8Rng::seed_from_u64(derive_seed(seed, 4, s as u64)));
            self.amplify(&mut field, rng.as_mut());
        }
        Ok(field)
    }
}

/// Propagates `field` through `link` with `steps_per_span` uniform steps
/// per span.
pub fn propagate(field: FieldGrid, link: &LinkConfig, steps_per_span: usize, noise_seed: Option<u64>) -> Result<FieldGrid> {
    Propagator::new(link, steps_per_span, &field)?.run(field, noise_seed)
}
