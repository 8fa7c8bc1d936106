use anyhow::{bail, Result};
use gcs_core::io::results::{csv_bytes, results_bytes};
use gcs_core::io::{EvalPath, RunConfig};
use gcs_core::trainer::{grid_label, sweep, SweepBase};
use gcs_core::TrainedResult;
use serde::Serialize;

use super::{prepare, result_row};
use crate::Common;

#[derive(Serialize)]
struct PointMeta<'a> {
    label: &'a str,
    power_dbm: f64,
    span_count: usize,
    seed: u64,
    config_hash: String,
    kappa: f64,
    kappa3: f64,
    final_loss: f64,
    mi_bits_4d: f64,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct LossRow {
    iteration: usize,
    loss: f64,
}

pub fn run(common: &Common) -> Result<()> {
    let Some((cfg, out)) = prepare(common, "train")? else {
        return Ok(());
    };
    let base = SweepBase {
        train: cfg.train.clone(),
        link: cfg.link.clone(),
        chi: cfg.chi_table()?,
        eval_kind: cfg.channel.kind,
        mi: cfg.metrics,
    };
    let grid = cfg.sweep.grid();
    log::info!(
        "training {} grid points, M={}, {} iterations, {} model",
        grid.len(),
        cfg.train.order,
        cfg.train.iterations,
        cfg.train.model_kind.as_str()
    );
    let points = sweep(&cfg.sweep, &base)?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for p in &points {
        let label = grid_label(cfg.train.model_kind, cfg.train.order, p.power_dbm, p.span_count, cfg.seed);
        match &p.outcome {
            Ok((result, eval)) => {
                write_point(&out, &cfg, &label, p.power_dbm, p.span_count, result, eval.mi.value)?;
                rows.push(result_row(&cfg, &result.constellation, p.power_dbm, p.span_count, &eval.mi, eval, EvalPath::Model));
                log::info!("{label}: MI {:.4} bit/4D, kappa {:.4}", eval.mi.value, result.kappa);
            }
            Err(e) => {
                log::error!("{label}: {e}");
                out.write(&format!("{label}/error.txt"), format!("{e}\n").as_bytes())?;
                failed.push(label);
            }
        }
    }
    out.write("results.csv", &results_bytes(&rows)?)?;
    out.finish("train", &cfg)?;
    if !failed.is_empty() {
        bail!("{} of {} grid points failed: {}", failed.len(), points.len(), failed.join(", "));
    }
    Ok(())
}

fn write_point(
    out: &crate::output::OutDir,
    cfg: &RunConfig,
    label: &str,
    power_dbm: f64,
    span_count: usize,
    result: &TrainedResult,
    mi: f64,
) -> Result<()> {
    out.write(&format!("{label}/constellation.txt"), result.constellation.to_text().as_bytes())?;
    let loss: Vec<LossRow> = result.loss_trace.iter().map(|&(iteration, loss)| LossRow { iteration, loss }).collect();
    out.write(&format!("{label}/loss.csv"), &csv_bytes(&loss)?)?;
    let meta = PointMeta {
        label,
        power_dbm,
        span_count,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        kappa: result.kappa,
        kappa3: result.kappa3,
        final_loss: result.loss_trace.last().map(|t| t.1).unwrap_or(f64::NAN),
        mi_bits_4d: mi,
        config: cfg,
    };
    out.write(&format!("{label}/meta.toml"), toml::to_string(&meta)?.as_bytes())
}
