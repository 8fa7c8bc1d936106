//! Tidy plot-data tables derived from result rows. Every bundle is sorted
//! canonically so it does not depend on the order of its inputs.

use std::collections::BTreeMap;

use serde::Serialize;

use super::results::{EvalPath, ResultRow};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MiVsPower {
    pub path: EvalPath,
    pub source: String,
    pub model_kind: String,
    pub label: String,
    pub span_count: usize,
    pub power_dbm: f64,
    pub mi_bits_4d: f64,
    pub mi_std_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainVsPower {
    pub model_kind: String,
    pub label: String,
    pub order: usize,
    pub span_count: usize,
    pub power_dbm: f64,
    pub mi_learned: f64,
    pub mi_qam: f64,
    pub gain_bits_4d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentsVsPower {
    pub model_kind: String,
    pub label: String,
    pub span_count: usize,
    pub power_dbm: f64,
    pub kappa: f64,
    pub kappa3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GainVsSpans {
    pub model_kind: String,
    pub order: usize,
    pub span_count: usize,
    pub best_power_learned_dbm: f64,
    pub mi_learned: f64,
    pub best_power_qam_dbm: f64,
    pub mi_qam: f64,
    pub gain_bits_4d: f64,
}

fn is_learned(r: &ResultRow) -> bool {
    r.source == "learned"
}

/// Power as an exact map key; sweep powers are short decimals.
fn power_key(p: f64) -> i64 {
    (p * 1e6).round() as i64
}

pub fn mi_vs_power(rows: &[ResultRow]) -> Vec<MiVsPower> {
    let mut out: Vec<MiVsPower> = rows
        .iter()
        .map(|r| MiVsPower {
            path: r.path,
            source: r.source.clone(),
            model_kind: r.model_kind.clone(),
            label: r.label.clone(),
            span_count: r.span_count,
            power_dbm: r.power_dbm,
            mi_bits_4d: r.mi_bits_4d,
            mi_std_err: r.mi_std_err,
        })
        .collect();
    out.sort_by(|a, b| {
        (a.path, &a.label, a.span_count)
            .cmp(&(b.path, &b.label, b.span_count))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
    out
}

/// Learned model-path rows joined with the QAM row of the same order at
/// the same power and span count. Rows without a QAM partner are skipped.
pub fn gain_vs_power(rows: &[ResultRow]) -> Vec<GainVsPower> {
    let qam: BTreeMap<(usize, usize, i64), f64> = rows
        .iter()
        .filter(|r| r.source == "qam" && r.path == EvalPath::Model)
        .map(|r| ((r.order, r.span_count, power_key(r.power_dbm)), r.mi_bits_4d))
        .collect();
    let mut out: Vec<GainVsPower> = rows
        .iter()
        .filter(|r| is_learned(r) && r.path == EvalPath::Model)
        .filter_map(|r| {
            let q = *qam.get(&(r.order, r.span_count, power_key(r.power_dbm)))?;
            Some(GainVsPower {
                model_kind: r.model_kind.clone(),
                label: r.label.clone(),
                order: r.order,
                span_count: r.span_count,
                power_dbm: r.power_dbm,
                mi_learned: r.mi_bits_4d,
                mi_qam: q,
                gain_bits_4d: r.mi_bits_4d - q,
            })
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.model_kind, &a.label, a.span_count)
            .cmp(&(&b.model_kind, &b.label, b.span_count))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
    out
}

pub fn moments_vs_power(rows: &[ResultRow]) -> Vec<MomentsVsPower> {
    let mut out: Vec<MomentsVsPower> = rows
        .iter()
        .filter(|r| is_learned(r) && r.path == EvalPath::Model)
        .map(|r| MomentsVsPower {
            model_kind: r.model_kind.clone(),
            label: r.label.clone(),
            span_count: r.span_count,
            power_dbm: r.power_dbm,
            kappa: r.kappa,
            kappa3: r.kappa3,
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.model_kind, a.span_count, &a.label)
            .cmp(&(&b.model_kind, b.span_count, &b.label))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
    out
}

fn best(a: Option<(f64, f64)>, r: &ResultRow) -> Option<(f64, f64)> {
    match a {
        Some((p, mi)) if mi > r.mi_bits_4d || (mi == r.mi_bits_4d && p <= r.power_dbm) => Some((p, mi)),
        _ => Some((r.power_dbm, r.mi_bits_4d)),
    }
}

/// Gain at the respective optimal launch power: best learned MI over all
/// powers minus best QAM MI of the same order, one row per training model
/// and span count.
pub fn gain_vs_spans(rows: &[ResultRow]) -> Vec<GainVsSpans> {
    let mut learned: BTreeMap<(String, usize, usize), Option<(f64, f64)>> = BTreeMap::new();
    let mut qam: BTreeMap<(usize, usize), Option<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.path == EvalPath::Model) {
        if is_learned(r) {
            let e = learned.entry((r.model_kind.clone(), r.order, r.span_count)).or_default();
            *e = best(*e, r);
        } else if r.source == "qam" {
            let e = qam.entry((r.order, r.span_count)).or_default();
            *e = best(*e, r);
        }
    }
    learned
        .into_iter()
        .filter_map(|((kind, order, spans), l)| {
            let (pl, ml) = l?;
            let (pq, mq) = (*qam.get(&(order, spans))?)?;
            Some(GainVsSpans {
                model_kind: kind,
                order,
                span_count: spans,
                best_power_learned_dbm: pl,
                mi_learned: ml,
                best_power_qam_dbm: pq,
                mi_qam: mq,
                gain_bits_4d: ml - mq,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::results::tests::row;

    fn sample() -> Vec<ResultRow> {
        let mut rows = vec![];
        for (i, p) in [-1.0, 0.0, 1.0, 2.0].into_iter().enumerate() {
            let bump = [0.0, 0.3, 0.2, -0.4][i];
            rows.push(row("qam64", "qam", "none", p, 8.0 + bump));
            rows.push(row(&format!("nlin-{p}"), "learned", "nlin", p, 8.2 + bump + 0.05 * i as f64));
            let mut g = row(&format!("gn-{p}"), "learned", "gn", p, 8.1 + bump);
            g.kappa = 1.5;
            rows.push(g);
        }
        let mut far = row("qam64", "qam", "none", 0.0, 7.0);
        far.span_count = 40;
        rows.push(far);
        let mut far = row("nlin-40", "learned", "nlin", 1.0, 7.3);
        far.span_count = 40;
        rows.push(far);
        rows
    }

    #[test]
    fn gain_is_row_aligned_difference() {
        let g = gain_vs_power(&sample());
        assert_eq!(g.len(), 8);
        for r in &g {
            assert_eq!(r.gain_bits_4d, r.mi_learned - r.mi_qam);
        }
        let n0 = g.iter().find(|r| r.label == "nlin-0").unwrap();
        assert!((n0.gain_bits_4d - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gain_vs_spans_has_one_row_per_span_and_kind() {
        let g = gain_vs_spans(&sample());
        let keys: Vec<(String, usize)> = g.iter().map(|r| (r.model_kind.clone(), r.span_count)).collect();
        assert_eq!(keys, vec![("gn".into(), 20), ("nlin".into(), 20), ("nlin".into(), 40)]);
        let n20 = &g[1];
        assert_eq!(n20.best_power_qam_dbm, 0.0);
        assert_eq!(n20.mi_qam, 8.3);
        assert!((n20.mi_learned - 8.55).abs() < 1e-12);
        assert!((g[2].gain_bits_4d - 0.3).abs() < 1e-12);
    }

    #[test]
    fn bundles_ignore_input_order() {
        let rows = sample();
        let mut rev = rows.clone();
        rev.reverse();
        assert_eq!(mi_vs_power(&rows), mi_vs_power(&rev));
        assert_eq!(gain_vs_power(&rows), gain_vs_power(&rev));
        assert_eq!(moments_vs_power(&rows), moments_vs_power(&rev));
        assert_eq!(gain_vs_spans(&rows), gain_vs_spans(&rev));
        assert_eq!(moments_vs_power(&rows).len(), 9);
    }
}
