use std::path::PathBuf;

use anyhow::{Context, Result};
use gcs_core::io::figures::{gain_vs_power, gain_vs_spans, mi_vs_power, moments_vs_power};
use gcs_core::io::read_results;
use gcs_core::io::results::csv_bytes;

use super::prepare;
use crate::Common;

pub fn run(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let Some((cfg, out)) = prepare(common, "figures")? else {
        return Ok(());
    };
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_results(p).with_context(|| format!("reading {}", p.display()))?);
    }
    out.write("fig2_mi_vs_power.csv", &csv_bytes(&mi_vs_power(&rows))?)?;
    out.write("fig3_gain_vs_power.csv", &csv_bytes(&gain_vs_power(&rows))?)?;
    out.write("fig4_moments_vs_power.csv", &csv_bytes(&moments_vs_power(&rows))?)?;
    out.write("fig4_gain_vs_spans.csv", &csv_bytes(&gain_vs_spans(&rows))?)?;
    out.finish("figures", &cfg)?;
    log::info!("figure tables from {} rows written to {}", rows.len(), cfg.out_dir.display());
    Ok(())
}
