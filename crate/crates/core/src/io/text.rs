//! Line reader shared by the plain-text model and constellation formats.

use std::path::Path;

use crate::error::{Error, Result};

/// Non-blank, non-`#` lines with their 1-based line numbers.
pub(crate) struct DataLines<'a> {
    source: String,
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last_line: usize,
}

impl<'a> DataLines<'a> {
    pub(crate) fn new(source: impl Into<String>, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self { source: source.into(), lines: it.peekable(), last_line: 0 }
    }

    pub(crate) fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { path: self.source.clone(), line, message: message.into() }
    }

    /// Next data line, or an error naming what was expected.
    pub(crate) fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        match self.lines.next() {
            Some((n, l)) => {
                self.last_line = n;
                Ok((n, l))
            }
            None => Err(self.error(self.last_line + 1, format!("unexpected end of file, expected {what}"))),
        }
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        match self.lines.next() {
            Some((n, _)) => Err(self.error(n, "trailing data")),
            None => Ok(()),
        }
    }

    /// Parses exactly `count` whitespace-separated floats.
    pub(crate) fn floats(&self, line: usize, text: &str, count: usize) -> Result<Vec<f64>> {
        let vals = text
            .split_whitespace()
            .enumerate()
            .map(|(col, tok)| {
                tok.parse::<f64>()
                    .map_err(|_| self.error(line, format!("column {}: invalid number {tok:?}", col + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != count {
            return Err(self.error(line, format!("expected {count} values, found {}", vals.len())));
        }
        Ok(vals)
    }

    pub(crate) fn usize_field(&self, line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
        let tok = tok.ok_or_else(|| self.error(line, format!("missing field `{what}`")))?;
        tok.parse().map_err(|_| self.error(line, format!("field `{what}`: invalid integer {tok:?}")))
    }
}

pub(crate) fn source_name(path: &Path) -> String {
    path.display().to_string()
}

/// Writes via a sibling temporary file and rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
