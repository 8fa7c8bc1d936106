pub mod evaluate;
pub mod figures;
pub mod ssf_validate;
pub mod train;

use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gcs_core::channel::{ChannelParams, LinkConfig};
use gcs_core::io::{EvalPath, ResultRow, RunConfig};
use gcs_core::metrics::{qam, EvalRow, MiEstimate};
use gcs_core::{Constellation, Provenance};

use crate::output::OutDir;
use crate::Common;

/// Loads the configuration, applies the command-line overrides, validates
/// it and sizes the worker pool. Returns `None` after a dry run.
pub fn prepare(common: &Common, command: &str) -> Result<Option<(RunConfig, OutDir)>> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::with_defaults(gcs_core::ModelKind::Nlin),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate().context("invalid configuration")?;
    if common.dry_run {
        println!("{command}: configuration ok (seed {}, hash {})", cfg.seed, cfg.hash());
        return Ok(None);
    }
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let out = OutDir::create(&cfg.out_dir)?;
    Ok(Some((cfg, out)))
}

/// Constellation files plus QAM baselines. Files that fail to parse are
/// reported and skipped; duplicate labels are an error.
pub fn load_constellations(paths: &[PathBuf], qam_orders: &[usize]) -> Result<(Vec<Constellation>, Vec<String>)> {
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for p in paths {
        match Constellation::load(p) {
            Ok(c) => {
                if c.renormalized {
                    log::warn!("{}: points rescaled to unit mean energy", p.display());
                }
                out.push(c);
            }
            Err(e) => {
                log::error!("{e}");
                failures.push(e.to_string());
            }
        }
    }
    for &m in qam_orders {
        out.push(qam(m)?);
    }
    let mut seen = BTreeSet::new();
    for c in &out {
        if !seen.insert(c.label.clone()) {
            bail!("duplicate constellation label `{}`", c.label);
        }
    }
    if out.is_empty() && failures.is_empty() {
        bail!("no constellations given; pass files or --qam M");
    }
    Ok((out, failures))
}

pub fn link_for(cfg: &RunConfig, spans: usize) -> LinkConfig {
    LinkConfig { span_count: spans, ..cfg.link.clone() }
}

pub fn channel_for(cfg: &RunConfig, power_dbm: f64, spans: usize) -> Result<ChannelParams> {
    let coeffs = cfg.chi_table()?.get(spans)?;
    Ok(ChannelParams::for_link(cfg.channel.kind, &link_for(cfg, spans), power_dbm, coeffs)?)
}

fn source_of(c: &Constellation) -> (&'static str, &'static str) {
    let source = match c.provenance {
        Provenance::Learned(_) => "learned",
        Provenance::Qam => "qam",
        Provenance::External => "external",
    };
    (source, c.provenance.kind_str())
}

pub fn result_row(
    cfg: &RunConfig,
    c: &Constellation,
    power_dbm: f64,
    spans: usize,
    mi: &MiEstimate,
    eval: &EvalRow,
    path: EvalPath,
) -> ResultRow {
    let (source, kind) = source_of(c);
    ResultRow {
        power_dbm,
        span_count: spans,
        model_kind: kind.into(),
        source: source.into(),
        label: c.label.clone(),
        order: c.order(),
        mi_bits_4d: mi.value,
        mi_std_err: mi.std_error,
        kappa: eval.kappa,
        kappa3: eval.kappa3,
        eff_snr_db: eval.eff_snr_db,
        path,
        mi_delta_vs_model: None,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    }
}

/// Power formatted for file names, e.g. `p-1.50dBm`.
pub fn point_tag(power_dbm: f64, spans: usize) -> String {
    format!("p{power_dbm:+.2}dBm-n{spans}")
}
