use std::fmt::Write as _;
use std::path::Path;

use crate::channel::{moments_of, ModelKind};
use crate::error::{Error, Result};
use crate::io::text::{source_name, write_atomic, DataLines};

/// Where a constellation came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Provenance {
    Learned(ModelKind),
    Qam,
    External,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Learned(ModelKind::Gn) => "learned-gn",
            Provenance::Learned(ModelKind::Nlin) => "learned-nlin",
            Provenance::Qam => "qam",
            Provenance::External => "external",
        }
    }

    /// Training model kind, `"none"` for reference constellations.
    pub fn kind_str(self) -> &'static str {
        match self {
            Provenance::Learned(k) => k.as_str(),
            _ => "none",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "learned-gn" => Provenance::Learned(ModelKind::Gn),
            "learned-nlin" => Provenance::Learned(ModelKind::Nlin),
            "qam" => Provenance::Qam,
            "external" => Provenance::External,
            _ => return None,
        })
    }
}

/// `M` points in `N` real dimensions (`N/2` complex symbols per point),
/// normalized to unit mean energy per complex symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    order: usize,
    dims: usize,
    points: Vec<f64>,
    pub label: String,
    pub provenance: Provenance,
    /// Set when the input had to be rescaled to unit power.
    pub renormalized: bool,
}

/// Mean energy per complex symbol of a flat point table.
pub fn mean_energy(points: &[f64]) -> f64 {
    let pairs = points.len() / 2;
    points.chunks_exact(2).map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>() / pairs as f64
}

impl Constellation {
    /// Builds a constellation, rescaling to unit power if needed.
    pub fn new(order: usize, dims: usize, points: Vec<f64>, label: impl Into<String>, provenance: Provenance) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidArgument(format!("constellation order {order} < 2")));
        }
        if dims == 0 || !dims.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("dims must be a positive even number, got {dims}")));
        }
        if points.len() != order * dims {
            return Err(Error::InvalidShape(format!("{order} x {dims} constellation with {} values", points.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("constellation has non-finite coordinates".into()));
        }
        let e = mean_energy(&points);
        if e == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        let mut c = Self { order, dims, points, label: label.into(), provenance, renormalized: false };
        if (e - 1.0).abs() > 1e-12 {
            let s = e.sqrt().recip();
            c.points.iter_mut().for_each(|v| *v *= s);
            c.renormalized = true;
        }
        Ok(c)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dims..(i + 1) * self.dims]
    }

    pub fn bits(&self) -> f64 {
        (self.order as f64).log2()
    }

    pub fn mean_energy(&self) -> f64 {
        mean_energy(&self.points)
    }

    pub fn moments(&self) -> (f64, f64) {
        moments_of(&self.points, self.dims).expect("validated at construction")
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.order {
            for j in i + 1..self.order {
                let d: f64 = self.point(i).iter().zip(self.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                best = best.min(d);
            }
        }
        best.sqrt()
    }

    /// Rotates each complex pair so that the highest-energy point lies on the
    /// positive real axis, then sorts points lexicographically.
    pub fn canonicalize(&mut self) {
        let d = self.dims;
        let energy = |p: &[f64]| p.iter().map(|v| v * v).sum::<f64>();
        let top = (0..self.order)
            .max_by(|&a, &b| energy(self.point(a)).total_cmp(&energy(self.point(b))).then(b.cmp(&a)))
            .unwrap_or(0);
        let reference = self.point(top).to_vec();
        for pair in 0..d / 2 {
            let phi = reference[2 * pair + 1].atan2(reference[2 * pair]);
            let (s, c) = (-phi).sin_cos();
            for p in self.points.chunks_exact_mut(d) {
                let (x, y) = (p[2 * pair], p[2 * pair + 1]);
                p[2 * pair] = c * x - s * y;
                p[2 * pair + 1] = s * x + c * y;
            }
        }
        let mut rows: Vec<Vec<f64>> = self.points.chunks_exact(d).map(<[f64]>::to_vec).collect();
        rows.sort_by(|a, b| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        self.points = rows.concat();
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# label: {}", self.label).unwrap();
        writeln!(s, "# provenance: {}", self.provenance.as_str()).unwrap();
        writeln!(s, "{} {}", self.order, self.dims).unwrap();
        for p in self.points.chunks_exact(self.dims) {
            writeln!(s, "{}", p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")).unwrap();
        }
        s
    }

    /// Parses `M N` followed by `M` rows of `N` floats. `#` lines are
    /// comments; `# label:` and `# provenance:` comments are picked up when
    /// present, otherwise `default_label` is used.
    pub fn from_text(source: &str, text: &str, default_label: &str) -> Result<Self> {
        let mut label = default_label.to_string();
        let mut provenance = Provenance::External;
        for l in text.lines().map(str::trim) {
            if let Some(v) = l.strip_prefix("# label:") {
                label = v.trim().to_string();
            } else if let Some(v) = l.strip_prefix("# provenance:") {
                provenance = Provenance::parse(v.trim()).unwrap_or(Provenance::External);
            }
        }
        let mut lines = DataLines::new(source, text);
        let (n, head) = lines.expect("header `M N`")?;
        let mut toks = head.split_whitespace();
        let order = lines.usize_field(n, toks.next(), "M")?;
        let dims = lines.usize_field(n, toks.next(), "N")?;
        if toks.next().is_some() {
            return Err(lines.error(n, "header must be `M N`"));
        }
        if order < 2 || dims == 0 || dims % 2 != 0 {
            return Err(lines.error(n, format!("unsupported header M={order} N={dims}")));
        }
        let mut pts = Vec::with_capacity(order * dims);
        let mut last = n;
        for _ in 0..order {
            let (n, row) = lines.expect("point row")?;
            pts.extend(lines.floats(n, row, dims)?);
            last = n;
        }
        lines.finish()?;
        Self::new(order, dims, pts, label, provenance).map_err(|e| lines.error(last, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::from_text(&source_name(path), &std::fs::read_to_string(path)?, &stem)
    }
}
