use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::write_atomic;
use crate::error::{Error, Result};

/// How an MI value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPath {
    Model,
    Ssf,
}

/// One evaluated (grid point × constellation × path).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub power_dbm: f64,
    pub span_count: usize,
    /// `gn` or `nlin` for learned constellations, `none` otherwise.
    pub model_kind: String,
    /// `learned`, `qam` or `external`.
    pub source: String,
    pub label: String,
    pub order: usize,
    pub mi_bits_4d: f64,
    pub mi_std_err: f64,
    pub kappa: f64,
    pub kappa3: f64,
    pub eff_snr_db: f64,
    pub path: EvalPath,
    /// SSF MI minus model MI at the same point, on `ssf` rows.
    pub mi_delta_vs_model: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

pub const RESULT_COLUMNS: [&str; 15] = [
    "power_dbm",
    "span_count",
    "model_kind",
    "source",
    "label",
    "order",
    "mi_bits_4d",
    "mi_std_err",
    "kappa",
    "kappa3",
    "eff_snr_db",
    "path",
    "mi_delta_vs_model",
    "seed",
    "config_hash",
];

/// Sorts rows by path, label, span count and power.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.path, &a.label, a.span_count)
            .cmp(&(b.path, &b.label, b.span_count))
            .then(a.power_dbm.total_cmp(&b.power_dbm))
    });
}

/// Serializes any rows with a header line to CSV bytes.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

/// CSV bytes of result rows in canonical order.
pub fn results_bytes(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    csv_bytes(&rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, &results_bytes(rows)?)
}

pub fn parse_results(source: &str, text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers()?.clone();
    if let Some(missing) = RESULT_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(Error::Parse { path: source.into(), line: 1, message: format!("missing column `{missing}`") });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| {
            rec.map_err(|e| Error::Parse { path: source.into(), line: i + 2, message: e.to_string() })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path)?;
    parse_results(&path.display().to_string(), &text)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn row(label: &str, source: &str, kind: &str, p: f64, mi: f64) -> ResultRow {
        ResultRow {
            power_dbm: p,
            span_count: 20,
            model_kind: kind.into(),
            source: source.into(),
            label: label.into(),
            order: 64,
            mi_bits_4d: mi,
            mi_std_err: 0.001,
            kappa: 1.38,
            kappa3: 2.2,
            eff_snr_db: 15.0,
            path: EvalPath::Model,
            mi_delta_vs_model: None,
            seed: 1,
            config_hash: "00ff".into(),
        }
    }

    #[test]
    fn csv_round_trip_keeps_full_precision() {
        let mut a = row("qam64", "qam", "none", -1.0, 8.123456789012345);
        a.mi_delta_vs_model = Some(-1.0 / 3.0);
        let b = row("nlin-a", "learned", "nlin", 0.1 + 0.2, std::f64::consts::PI);
        let bytes = csv_bytes(&[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().next().unwrap(), RESULT_COLUMNS.join(","));
        let back = parse_results("mem", &text).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn missing_column_is_named() {
        let text = "power_dbm,span_count\n1,20\n";
        let err = parse_results("r.csv", text).unwrap_err();
        assert!(err.to_string().contains("model_kind"), "{err}");
    }

    #[test]
    fn canonical_order() {
        let mut rows = vec![
            row("b", "qam", "none", 1.0, 1.0),
            row("a", "qam", "none", 2.0, 1.0),
            row("a", "qam", "none", -1.0, 1.0),
        ];
        sort_rows(&mut rows);
        let keys: Vec<(String, f64)> = rows.iter().map(|r| (r.label.clone(), r.power_dbm)).collect();
        assert_eq!(keys, vec![("a".into(), -1.0), ("a".into(), 2.0), ("b".into(), 1.0)]);
    }
}
