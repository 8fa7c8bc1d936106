//! End-to-end training of encoder → power normalization → channel → decoder
//! with a cross-entropy loss, and sweeps over (launch power × span count).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::channel::{self, ChannelParams, ChiTable, LinkConfig, ModelKind};
use crate::constellation::{Constellation, Provenance};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalRow, MiSettings};
use crate::nn::{decode, encode, Mlp, MlpSpec, MlpVars, Optimizer, OptimizerConfig};
use crate::seed::derive_seed;

const STREAM_ENCODER: u64 = 1;
const STREAM_DECODER: u64 = 2;
const STREAM_BATCH: u64 = 3;
const STREAM_NOISE: u64 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Constellation order M.
    pub order: usize,
    /// Real dimensions N per point.
    pub dims: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub model_kind: ModelKind,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Loss trace sampling interval.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            order: 64,
            dims: 2,
            batch_size: 512,
            iterations: 20_000,
            optimizer: OptimizerConfig::default(),
            seed: 1,
            model_kind: ModelKind::Nlin,
            encoder_hidden: vec![32, 32],
            decoder_hidden: vec![32, 32],
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(4..=1024).contains(&self.order) {
            return Err(Error::Config(format!("train.order must be in 4..=1024, got {}", self.order)));
        }
        if self.dims == 0 || !self.dims.is_multiple_of(2) {
            return Err(Error::Config(format!("train.dims must be a positive even number, got {}", self.dims)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&w| w == 0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(self.optimizer.learning_rate >= 0.0 && self.optimizer.learning_rate.is_finite()) {
            return Err(Error::Config("train.optimizer.learning_rate must be finite and non-negative".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("train.log_every must be positive".into()));
        }
        Ok(())
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec::encoder(self.order, self.dims, &self.encoder_hidden, derive_seed(self.seed, STREAM_ENCODER, 0))
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        MlpSpec::decoder(self.dims, self.order, &self.decoder_hidden, derive_seed(self.seed, STREAM_DECODER, 0))
    }
}

/// Launch powers (dBm) × span counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub launch_powers_dbm: Vec<f64>,
    pub span_counts: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { launch_powers_dbm: (-5..=5).map(f64::from).collect(), span_counts: vec![20] }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.launch_powers_dbm.is_empty() || self.span_counts.is_empty() {
            return Err(Error::Config("sweep lists must be non-empty".into()));
        }
        if let Some(p) = self.launch_powers_dbm.iter().find(|p| !(-10.0..=10.0).contains(*p)) {
            return Err(Error::Config(format!("launch power {p} dBm outside [-10, 10]")));
        }
        if self.span_counts.contains(&0) {
            return Err(Error::Config("span counts must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid points in span-major order.
    pub fn grid(&self) -> Vec<(f64, usize)> {
        self.span_counts
            .iter()
            .flat_map(|&n| self.launch_powers_dbm.iter().map(move |&p| (p, n)))
            .collect()
    }
}

/// `M` one-hot rows drawn uniformly, deterministic given `seed`.
pub fn sample_one_hot(order: usize, batch: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; batch * order];
    for row in data.chunks_exact_mut(order) {
        row[rng.gen_range(0..order)] = 1.0;
    }
    Tensor::matrix(batch, order, data).expect("batch*order values")
}

/// Scales points to unit mean energy per complex symbol, on the tape.
pub fn normalize_power(tape: &mut Tape, points: Var) -> Result<Var> {
    let e = tape.abs2_pairs(points)?;
    let mean = tape.mean(e)?;
    if tape.value(mean).item() == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let rms = tape.sqrt(mean)?;
    tape.div(points, rms)
}

/// Handles into one recorded loss graph.
pub struct LossGraph {
    pub tape: Tape,
    pub loss: Var,
    /// Normalized codebook `[M × N]`.
    pub points: Var,
    pub kappa: Var,
    pub kappa3: Var,
    pub encoder: MlpVars,
    pub decoder: MlpVars,
}

impl LossGraph {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).item()
    }
}

/// Records `L(s, g(c(f(s))))` for one batch of one-hot rows.
///
/// The whole codebook is encoded and normalized so that κ and κ₃ reflect the
/// constellation rather than the batch; the batch then selects its points by
/// a one-hot product.
pub fn build_loss_graph(
    encoder: &Mlp,
    decoder: &Mlp,
    batch: &Tensor,
    channel: &ChannelParams,
    noise_seed: u64,
) -> Result<LossGraph> {
    let order = encoder.input_width();
    let mut tape = Tape::new();
    let enc = encoder.bind(&mut tape);
    let dec = decoder.bind(&mut tape);
    let codebook = tape.constant(Tensor::identity(order));
    let raw = encode(&mut tape, &enc, codebook, false)?;
    let points = normalize_power(&mut tape, raw)?;
    let (kappa, kappa3) = channel::moments(&mut tape, points)?;
    let s = tape.constant(batch.clone());
    let x = tape.matmul(s, points)?;
    let y = channel::channel_apply(&mut tape, x, channel, kappa, kappa3, noise_seed)?;
    let logits = decode(&mut tape, &dec, y)?;
    let loss = tape.softmax_cross_entropy(logits, s)?;
    Ok(LossGraph { tape, loss, points, kappa, kappa3, encoder: enc, decoder: dec })
}

/// Encoder, decoder and optimizer state of one training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub encoder: Mlp,
    pub decoder: Mlp,
    encoder_opt: Optimizer,
    decoder_opt: Optimizer,
    pub iteration: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub loss: f64,
    pub kappa: f64,
    pub kappa3: f64,
    /// Total noise variance, mW.
    pub sigma2: f64,
}

fn param_sizes(m: &Mlp) -> Vec<usize> {
    m.layers.iter().flat_map(|l| [l.weights.len(), l.bias.len()]).collect()
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let encoder = Mlp::init(&config.encoder_spec())?;
        let decoder = Mlp::init(&config.decoder_spec())?;
        Ok(Self {
            encoder_opt: Optimizer::new(config.optimizer, &param_sizes(&encoder)),
            decoder_opt: Optimizer::new(config.optimizer, &param_sizes(&decoder)),
            encoder,
            decoder,
            iteration: 0,
        })
    }

    /// One forward pass, one backward pass and one optimizer update.
    pub fn train_step(&mut self, batch: &Tensor, channel: &ChannelParams, noise_seed: u64) -> Result<StepReport> {
        let g = build_loss_graph(&self.encoder, &self.decoder, batch, channel, noise_seed)?;
        let kappa = g.tape.value(g.kappa).item();
        let kappa3 = g.tape.value(g.kappa3).item();
        let loss = g.loss_value();
        let sigma2 = channel.total_variance(kappa, kappa3).unwrap_or(f64::NAN);
        if !loss.is_finite() {
            return Err(Error::Divergence { iteration: self.iteration, loss, kappa, kappa3, sigma2, trace: vec![] });
        }
        let grads = g.tape.backward(g.loss)?;
        let enc_grads: Vec<Tensor> = g.encoder.params().into_iter().map(|v| grads.wrt(v)).collect();
        let dec_grads: Vec<Tensor> = g.decoder.params().into_iter().map(|v| grads.wrt(v)).collect();
        self.encoder_opt.update(&mut self.encoder.params_mut(), &enc_grads);
        self.decoder_opt.update(&mut self.decoder.params_mut(), &dec_grads);
        self.iteration += 1;
        Ok(StepReport { loss, kappa, kappa3, sigma2 })
    }

    /// Current encoder image of the one-hot codebook, unit power.
    pub fn constellation(&self, label: impl Into<String>, kind: ModelKind) -> Result<Constellation> {
        let order = self.encoder.input_width();
        let raw = self.encoder.eval(&Tensor::identity(order))?;
        let dims = raw.shape()[1];
        let mut tape = Tape::new();
        let p = tape.constant(raw);
        let n = normalize_power(&mut tape, p)?;
        Constellation::new(order, dims, tape.value(n).data().to_vec(), label, Provenance::Learned(kind))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedResult {
    /// Canonicalized learned constellation.
    pub constellation: Constellation,
    pub loss_trace: Vec<(usize, f64)>,
    pub kappa: f64,
    pub kappa3: f64,
    pub config: TrainConfig,
    pub channel: ChannelParams,
}

pub fn batch_seed(config: &TrainConfig, iteration: usize) -> u64 {
    derive_seed(config.seed, STREAM_BATCH, iteration as u64)
}

pub fn noise_seed(config: &TrainConfig, iteration: usize) -> u64 {
    derive_seed(config.seed, STREAM_NOISE, iteration as u64)
}

/// Trains a fresh auto-encoder for `config.iterations` steps. The channel's
/// model kind is taken from `config.model_kind`.
pub fn train(config: &TrainConfig, channel: &ChannelParams) -> Result<TrainedResult> {
    train_labeled(config, channel, &format!("{}-m{}", config.model_kind.as_str(), config.order))
}

pub fn train_labeled(config: &TrainConfig, channel: &ChannelParams, label: &str) -> Result<TrainedResult> {
    let channel = channel.with_kind(config.model_kind);
    channel.validate()?;
    let mut state = TrainState::new(config)?;
    let mut trace = Vec::with_capacity(config.iterations / config.log_every + 1);
    for it in 0..config.iterations {
        let batch = sample_one_hot(config.order, config.batch_size, batch_seed(config, it));
        match state.train_step(&batch, &channel, noise_seed(config, it)) {
            Ok(r) => {
                if it % config.log_every == 0 || it + 1 == config.iterations {
                    trace.push((it, r.loss));
                    log::debug!("{label} iteration {it}: loss {:.5}, kappa {:.4}, kappa3 {:.4}", r.loss, r.kappa, r.kappa3);
                }
            }
            Err(Error::Divergence { iteration, loss, kappa, kappa3, sigma2, .. }) => {
                trace.push((iteration, loss));
                return Err(Error::Divergence { iteration, loss, kappa, kappa3, sigma2, trace });
            }
            Err(e) => return Err(e),
        }
    }
    let mut constellation = state.constellation(label, config.model_kind)?;
    constellation.canonicalize();
    let (kappa, kappa3) = constellation.moments();
    Ok(TrainedResult { constellation, loss_trace: trace, kappa, kappa3, config: config.clone(), channel })
}

/// Shared inputs of a sweep.
#[derive(Clone, Debug)]
pub struct SweepBase {
    pub train: TrainConfig,
    pub link: LinkConfig,
    pub chi: ChiTable,
    /// Channel model used to score the trained constellations.
    pub eval_kind: ModelKind,
    pub mi: MiSettings,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub power_dbm: f64,
    pub span_count: usize,
    pub outcome: std::result::Result<(TrainedResult, EvalRow), String>,
}

/// Label used for a constellation trained at one grid point.
pub fn grid_label(kind: ModelKind, order: usize, power_dbm: f64, spans: usize, seed: u64) -> String {
    format!("{}-m{order}-p{power_dbm:+.2}dBm-n{spans}-s{seed}", kind.as_str())
}

/// Trains and evaluates one model per grid point. Failures are recorded per
/// point and do not stop the sweep. Points run on the current rayon pool.
pub fn sweep(spec: &SweepSpec, base: &SweepBase) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    base.train.validate()?;
    base.link.validate()?;
    let grid = spec.grid();
    Ok(grid
        .par_iter()
        .map(|&(power_dbm, span_count)| {
            let outcome = train_point(base, power_dbm, span_count).map_err(|e| e.to_string());
            SweepPoint { power_dbm, span_count, outcome }
        })
        .collect())
}

pub fn train_point(base: &SweepBase, power_dbm: f64, span_count: usize) -> Result<(TrainedResult, EvalRow)> {
    let link = LinkConfig { span_count, ..base.link.clone() };
    let coeffs = base.chi.get(span_count)?;
    let channel = ChannelParams::for_link(base.train.model_kind, &link, power_dbm, coeffs)?;
    let label = grid_label(base.train.model_kind, base.train.order, power_dbm, span_count, base.train.seed);
    let result = train_labeled(&base.train, &channel, &label)?;
    let row = evaluate(&result.constellation, &channel.with_kind(base.eval_kind), &base.mi)?;
    Ok((result, row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::NlinCoefficients;

    fn small_config(order: usize) -> TrainConfig {
        TrainConfig {
            order,
            batch_size: 64,
            iterations: 50,
            encoder_hidden: vec![16],
            decoder_hidden: vec![16],
            ..Default::default()
        }
    }

    fn channel(dbm: f64) -> ChannelParams {
        ChannelParams::for_link(ModelKind::Nlin, &LinkConfig::default(), dbm, NlinCoefficients::default_for_spans(20)).unwrap()
    }

    #[test]
    fn one_hot_rows() {
        let b = sample_one_hot(8, 100, 3);
        for r in 0..100 {
            let row = b.row(r);
            assert_eq!(row.iter().sum::<f64>(), 1.0);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
        }
        assert_eq!(b, sample_one_hot(8, 100, 3));
        assert_ne!(b, sample_one_hot(8, 100, 4));
    }

    #[test]
    fn one_hot_frequencies_are_uniform() {
        let (m, n) = (16, 1_000_000);
        let b = sample_one_hot(m, n, 17);
        let mut counts = vec![0usize; m];
        for r in 0..n {
            counts[b.row(r).iter().position(|&v| v == 1.0).unwrap()] += 1;
        }
        let p = 1.0 / m as f64;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd * 1.5, "{c}");
        }
    }

    #[test]
    fn normalize_power_properties() {
        let raw = vec![0.3, -1.0, 2.0, 0.5, -0.7, 0.1, 1.1, 1.2];
        let run = |d: Vec<f64>| {
            let mut t = Tape::new();
            let p = t.param(Tensor::matrix(4, 2, d).unwrap());
            let n = normalize_power(&mut t, p).unwrap();
            t.value(n).clone()
        };
        let a = run(raw.clone());
        let e: f64 = a.data().iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!((e - 1.0).abs() < 1e-15);
        let b = run(raw.iter().map(|v| 7.0 * v).collect());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        let c = run(a.data().to_vec());
        for (x, y) in a.data().iter().zip(c.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        let mut t = Tape::new();
        let z = t.param(Tensor::zeros(&[4, 2]));
        assert!(matches!(normalize_power(&mut t, z), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut cfg = small_config(8);
        cfg.optimizer.learning_rate = 0.0;
        let mut st = TrainState::new(&cfg).unwrap();
        let before = (st.encoder.clone(), st.decoder.clone());
        let b = sample_one_hot(8, 64, 1);
        st.train_step(&b, &channel(0.0), 2).unwrap();
        assert_eq!((st.encoder.clone(), st.decoder.clone()), before);
    }

    #[test]
    fn initial_loss_near_log_m() {
        let cfg = TrainConfig { order: 16, ..Default::default() };
        let mut st = TrainState::new(&cfg).unwrap();
        let b = sample_one_hot(16, 512, 1);
        let r = st.train_step(&b, &channel(0.0), 2).unwrap();
        let l = (16f64).ln();
        assert!((r.loss - l).abs() < 0.15 * l, "{} vs {l}", r.loss);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = small_config(8);
        let a = train(&cfg, &channel(0.0)).unwrap();
        let b = train(&cfg, &channel(0.0)).unwrap();
        assert_eq!(a, b);
        assert!((a.constellation.mean_energy() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let base = SweepBase {
            train: TrainConfig { iterations: 5, ..small_config(4) },
            link: LinkConfig::default(),
            chi: ChiTable::default_for(&[20]),
            eval_kind: ModelKind::Nlin,
            mi: MiSettings { samples: 2000, seed: 1 },
        };
        let spec = SweepSpec { launch_powers_dbm: vec![-1.0, 0.0, 1.0], span_counts: vec![20, 30] };
        let pts = sweep(&spec, &base).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts.iter().filter(|p| p.outcome.is_ok()).count(), 3);
        assert!(pts.iter().filter(|p| p.span_count == 30).all(|p| p.outcome.is_err()));
    }

    #[test]
    fn sweep_spec_validation() {
        assert!(SweepSpec { launch_powers_dbm: vec![], span_counts: vec![20] }.validate().is_err());
        assert!(SweepSpec { launch_powers_dbm: vec![12.0], span_counts: vec![20] }.validate().is_err());
        assert_eq!(SweepSpec::default().grid().len(), 11);
    }
}
