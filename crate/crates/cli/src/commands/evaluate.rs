use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use gcs_core::io::results::results_bytes;
use gcs_core::io::EvalPath;
use gcs_core::metrics::evaluate;
use rayon::prelude::*;

use super::{channel_for, load_constellations, prepare, result_row};
use crate::Common;

pub fn run(common: &Common, qam: &[usize], files: &[PathBuf]) -> Result<()> {
    let Some((cfg, out)) = prepare(common, "evaluate")? else {
        return Ok(());
    };
    let (constellations, failures) = load_constellations(files, qam)?;
    let grid = cfg.sweep.grid();
    let jobs: Vec<(usize, f64, usize)> =
        (0..constellations.len()).flat_map(|i| grid.iter().map(move |&(p, n)| (i, p, n))).collect();
    log::info!("evaluating {} constellations at {} grid points", constellations.len(), grid.len());
    let rows = jobs
        .par_iter()
        .map(|&(i, p, n)| {
            let c = &constellations[i];
            let ch = channel_for(&cfg, p, n)?;
            let e = evaluate(c, &ch, &cfg.metrics).with_context(|| format!("{} at {p} dBm, {n} spans", c.label))?;
            Ok(result_row(&cfg, c, p, n, &e.mi, &e, EvalPath::Model))
        })
        .collect::<Result<Vec<_>>>()?;
    out.write("results.csv", &results_bytes(&rows)?)?;
    out.finish("evaluate", &cfg)?;
    if !failures.is_empty() {
        bail!("{} constellation file(s) could not be read:\n  {}", failures.len(), failures.join("\n  "));
    }
    Ok(())
}
