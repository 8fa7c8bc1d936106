use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChiTable, LinkConfig, ModelKind, NlinCoefficients};
use crate::error::{Error, Result};
use crate::metrics::MiSettings;
use crate::ssf::SsfConfig;
use crate::trainer::{SweepSpec, TrainConfig};

/// Channel model used for evaluation, with χ coefficients per span count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub kind: ModelKind,
    /// Keyed by span count, written as a string because TOML keys are.
    #[serde(default)]
    pub chi: BTreeMap<String, NlinCoefficients>,
}

impl ChannelSection {
    pub fn chi_table(&self) -> Result<ChiTable> {
        let mut out = BTreeMap::new();
        for (k, v) in &self.chi {
            let n: usize = k
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("channel.chi key {k:?} is not a span count")))?;
            v.validate().map_err(|e| Error::Config(format!("channel.chi.{k}: {e}")))?;
            out.insert(n, *v);
        }
        Ok(ChiTable(out))
    }
}

/// Complete configuration of a run, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Overrides the seeds of the train, ssf and metrics sections.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Where outputs go. Not serialized, so it does not enter the hash.
    #[serde(default = "default_out_dir", skip_serializing)]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub link: LinkConfig,
    pub channel: ChannelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub ssf: SsfConfig,
    #[serde(default)]
    pub metrics: MiSettings,
}

fn default_seed() -> u64 {
    1
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// The default link and sweep with the built-in χ table for `kind`.
    pub fn with_defaults(kind: ModelKind) -> Self {
        let sweep = SweepSpec::default();
        let chi = ChiTable::default_for(&sweep.span_counts).0.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let mut cfg = Self {
            seed: default_seed(),
            out_dir: default_out_dir(),
            link: LinkConfig::default(),
            channel: ChannelSection { kind, chi },
            train: TrainConfig::default(),
            sweep,
            ssf: SsfConfig::default(),
            metrics: MiSettings::default(),
        };
        cfg.set_seed(cfg.seed);
        cfg
    }

    pub fn from_toml(source: &str, text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { path: source.to_string(), line, message: e.message().to_string() }
        })?;
        cfg.set_seed(cfg.seed);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&path.display().to_string(), &text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config fields are all representable in TOML")
    }

    /// Sets the master seed and propagates it to every section.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
        self.ssf.seed = seed;
        self.metrics.seed = seed;
        self.ssf.link = self.link.clone();
    }

    pub fn validate(&self) -> Result<()> {
        self.link.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        self.ssf.validate()?;
        if self.metrics.samples == 0 {
            return Err(Error::Config("metrics.samples must be positive".into()));
        }
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir must not be empty".into()));
        }
        let chi = self.channel.chi_table()?;
        if chi.0.is_empty() {
            return Err(Error::Config(format!(
                "channel.chi is missing; the {} model needs coefficients for span counts {:?}",
                self.channel.kind.as_str(),
                self.sweep.span_counts
            )));
        }
        for &n in &self.sweep.span_counts {
            chi.get(n)?;
        }
        chi.get(self.link.span_count)?;
        Ok(())
    }

    pub fn chi_table(&self) -> Result<ChiTable> {
        self.channel.chi_table()
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_toml().as_bytes())[..16].to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[channel]
kind = "nlin"

[channel.chi.20]
chi1 = 8000.0
chi2 = 4000.0
chi3 = 400.0
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml("mem", MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.link, LinkConfig::default());
        assert_eq!(c.sweep.launch_powers_dbm.len(), 11);
    }

    #[test]
    fn missing_chi_is_a_config_error() {
        let c = RunConfig::from_toml("mem", "[channel]\nkind = \"nlin\"\n").unwrap();
        let err = c.validate().unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("chi"), "{err}");

        let text = MINIMAL.replace("[channel.chi.20]", "[channel.chi.10]");
        assert!(RunConfig::from_toml("mem", &text).unwrap().validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let text = format!("{MINIMAL}\n[train]\norderr = 16\n");
        match RunConfig::from_toml("cfg.toml", &text) {
            Err(Error::Parse { path, line, .. }) => {
                assert_eq!(path, "cfg.toml");
                assert_eq!(line, MINIMAL.matches('\n').count() + 3);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn toml_round_trip_and_hash() {
        let c = RunConfig::from_toml("mem", MINIMAL).unwrap();
        let back = RunConfig::from_toml("mem", &c.to_toml()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(), back.hash());
        assert_eq!(c.hash().len(), 16);
        let mut d = c.clone();
        d.out_dir = PathBuf::from("elsewhere");
        assert_eq!(c.hash(), d.hash());
        d.set_seed(8);
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn defaults_validate() {
        RunConfig::with_defaults(ModelKind::Gn).validate().unwrap();
    }
}
