use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gcs_core::channel::{ase_variance, dbm_to_mw, ChannelParams, NlinCoefficients};
use gcs_core::io::results::results_bytes;
use gcs_core::io::{EvalPath, RunConfig};
use gcs_core::metrics::evaluate;
use gcs_core::ssf::{calibrate_coefficients, mi_from_samples, simulate, SsfConfig};
use gcs_core::Constellation;
use rayon::prelude::*;
use serde::Serialize;

use super::{link_for, load_constellations, point_tag, prepare, result_row};
use crate::Common;

#[derive(Serialize)]
struct Calibration {
    span_count: usize,
    power_dbm: f64,
    label: String,
    measured_total_mw: f64,
    ase_mw: f64,
    factor: f64,
    chi: NlinCoefficients,
}

fn ssf_config(cfg: &RunConfig, spans: usize) -> SsfConfig {
    SsfConfig { link: link_for(cfg, spans), ..cfg.ssf.clone() }
}

fn calibrate(cfg: &RunConfig, c: &Constellation, power_dbm: f64, spans: usize) -> Result<Calibration> {
    let base = cfg.chi_table()?.get(spans)?;
    let ssf = ssf_config(cfg, spans);
    let rx = simulate(c, &ssf, dbm_to_mw(power_dbm), true)?;
    let measured = rx.total_variance_mw();
    let ase = ase_variance(&ssf.link);
    let (k, k3) = c.moments();
    let chi = calibrate_coefficients(&base, k, k3, dbm_to_mw(power_dbm), measured - ase)
        .with_context(|| format!("calibrating at {power_dbm} dBm, {spans} spans"))?;
    Ok(Calibration {
        span_count: spans,
        power_dbm,
        label: c.label.clone(),
        measured_total_mw: measured,
        ase_mw: ase,
        factor: chi.chi1 / base.chi1,
        chi,
    })
}

pub fn run(common: &Common, qam: &[usize], files: &[PathBuf], calibrate_dbm: Option<f64>, dump: bool) -> Result<()> {
    let Some((cfg, out)) = prepare(common, "ssf-validate")? else {
        return Ok(());
    };
    let (constellations, failures) = load_constellations(files, qam)?;
    if let Some(c) = constellations.iter().find(|c| c.dims() != 2) {
        bail!("{}: split-step validation needs 2-D constellations, got {} dims", c.label, c.dims());
    }
    let mut chi = cfg.chi_table()?;
    if let Some(p) = calibrate_dbm {
        let first = constellations.first().context("calibration needs at least one constellation")?;
        let cals = cfg
            .sweep
            .span_counts
            .par_iter()
            .map(|&n| calibrate(&cfg, first, p, n))
            .collect::<Result<Vec<_>>>()?;
        let mut table = BTreeMap::new();
        for cal in &cals {
            log::info!("calibration at {} spans: factor {:.4}", cal.span_count, cal.factor);
            chi.0.insert(cal.span_count, cal.chi);
            table.insert(cal.span_count.to_string(), cal);
        }
        out.write("calibration.toml", toml::to_string(&table)?.as_bytes())?;
    }

    let grid = cfg.sweep.grid();
    let jobs: Vec<(usize, f64, usize)> =
        (0..constellations.len()).flat_map(|i| grid.iter().map(move |&(p, n)| (i, p, n))).collect();
    log::info!("split-step runs: {}", jobs.len());
    let rows = jobs
        .par_iter()
        .map(|&(i, p, n)| {
            let c = &constellations[i];
            let tag = format!("{} {}", c.label, point_tag(p, n));
            let ssf = ssf_config(&cfg, n);
            let rx = simulate(c, &ssf, dbm_to_mw(p), true).with_context(|| tag.clone())?;
            let mi = mi_from_samples(&rx).with_context(|| tag.clone())?;
            if dump {
                out.write(&format!("symbols/{}-{}.txt", c.label, point_tag(p, n)), rx.to_text().as_bytes())?;
            }
            let ch = ChannelParams::for_link(cfg.channel.kind, &ssf.link, p, chi.get(n)?)?;
            let model = evaluate(c, &ch, &cfg.metrics).with_context(|| tag.clone())?;
            let model_row = result_row(&cfg, c, p, n, &model.mi, &model, EvalPath::Model);
            let mut ssf_row = result_row(&cfg, c, p, n, &mi, &model, EvalPath::Ssf);
            ssf_row.mi_delta_vs_model = Some(mi.value - model.mi.value);
            log::info!("{tag}: ssf {:.4}, model {:.4} bit/4D", mi.value, model.mi.value);
            Ok([model_row, ssf_row])
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    out.write("results.csv", &results_bytes(&rows)?)?;
    out.finish("ssf-validate", &cfg)?;
    if !failures.is_empty() {
        bail!("{} constellation file(s) could not be read:\n  {}", failures.len(), failures.join("\n  "));
    }
    Ok(())
}
