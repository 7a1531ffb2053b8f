//! Plain-text run configuration (`key: value` lines).
//!
//! Every key has a default; a config file only lists overrides. Unknown keys
//! are rejected. [`RunConfig::to_text`] renders the fully resolved config in a
//! canonical order, and [`RunConfig::hash`] hashes that text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::baseband::SimConfig;
use crate::binio::parse_kv_lines;
use crate::harness::SweepSettings;
use crate::mlp::TrainConfig;
use crate::{Error, Result};

/// Ordered `key: value` pairs with typed lookup.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        Self { entries: pairs.into_iter().collect() }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing key {key:?}")))?;
        raw.parse()
            .map_err(|_| Error::Format(format!("bad value {raw:?} for key {key:?}")))
    }
}

pub(crate) fn sim_to_kv(sim: &SimConfig) -> Vec<(String, String)> {
    vec![
        ("sim.rolloff".into(), sim.rolloff.to_string()),
        ("sim.sps_fine".into(), sim.sps_fine.to_string()),
        ("sim.sps_out".into(), sim.sps_out.to_string()),
        ("sim.frame_symbols".into(), sim.frame_symbols.to_string()),
        ("sim.frame_len".into(), sim.frame_len.to_string()),
        ("sim.snr_db_post_lpf".into(), sim.snr_db_post_lpf.to_string()),
        ("sim.rrc_span_symbols".into(), sim.rrc_span_symbols.to_string()),
        ("sim.burst_symbols".into(), sim.burst_symbols.to_string()),
    ]
}

pub(crate) fn sim_from_kv(kv: &KvMap) -> Result<SimConfig> {
    let sim = SimConfig {
        rolloff: kv.parse("sim.rolloff")?,
        sps_fine: kv.parse("sim.sps_fine")?,
        sps_out: kv.parse("sim.sps_out")?,
        frame_symbols: kv.parse("sim.frame_symbols")?,
        frame_len: kv.parse("sim.frame_len")?,
        snr_db_post_lpf: kv.parse("sim.snr_db_post_lpf")?,
        rrc_span_symbols: kv.parse("sim.rrc_span_symbols")?,
        burst_symbols: kv.parse("sim.burst_symbols")?,
    };
    sim.validate()?;
    Ok(sim)
}

/// Git-style content hash: SHA-256 over `blob <len>\0<content>`, hex encoded.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub sim: SimConfig,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub train: TrainConfig,
    pub sweep: SweepSettings,
    pub workspace: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 2019,
            sim: SimConfig::default(),
            // Mixed sets need a multiple of three.
            train_size: 199_998,
            val_size: 9_999,
            test_size: 99_999,
            train: TrainConfig::default(),
            sweep: SweepSettings::default(),
            workspace: PathBuf::from("specsense-work"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for key {key:?}")))
}

fn parse_layers(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| parse_value::<usize>(key, s.trim()))
        .collect()
}

impl RunConfig {
    /// Defaults overridden by the `key: value` lines in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let pairs = parse_kv_lines(text).map_err(|e| Error::Config(e.to_string()))?;
        for (key, raw) in pairs {
            cfg.set(&key, &raw)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Apply one override.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let v = raw;
        match key {
            "seed.master" => self.master_seed = parse_value(key, v)?,
            "sim.rolloff" => self.sim.rolloff = parse_value(key, v)?,
            "sim.sps_fine" => self.sim.sps_fine = parse_value(key, v)?,
            "sim.sps_out" => self.sim.sps_out = parse_value(key, v)?,
            "sim.frame_symbols" => self.sim.frame_symbols = parse_value(key, v)?,
            "sim.frame_len" => self.sim.frame_len = parse_value(key, v)?,
            "sim.snr_db_post_lpf" => self.sim.snr_db_post_lpf = parse_value(key, v)?,
            "sim.rrc_span_symbols" => self.sim.rrc_span_symbols = parse_value(key, v)?,
            "sim.burst_symbols" => self.sim.burst_symbols = parse_value(key, v)?,
            "data.train_size" => self.train_size = parse_value(key, v)?,
            "data.val_size" => self.val_size = parse_value(key, v)?,
            "data.test_size" => self.test_size = parse_value(key, v)?,
            "train.batch_size" => self.train.batch_size = parse_value(key, v)?,
            "train.max_epochs" => self.train.max_epochs = parse_value(key, v)?,
            "train.patience" => self.train.patience = parse_value(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse_value(key, v)?,
            "train.hidden_layers" => self.train.hidden_layers = parse_layers(key, v)?,
            "sweep.frames_per_point" => self.sweep.frames_per_point = parse_value(key, v)?,
            "sweep.idle_cal" => self.sweep.idle_cal = parse_value(key, v)?,
            "sweep.idle_ver" => self.sweep.idle_ver = parse_value(key, v)?,
            "sweep.pfa" => self.sweep.pfa = parse_value(key, v)?,
            "workspace" => self.workspace = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        for (name, size) in [
            ("data.train_size", self.train_size),
            ("data.val_size", self.val_size),
            ("data.test_size", self.test_size),
        ] {
            if size == 0 || size % 3 != 0 {
                return Err(Error::Config(format!(
                    "{name} = {size} must be a positive multiple of 3 (mixed conditions use equal thirds)"
                )));
            }
        }
        self.train.validate()?;
        self.sweep.validate()?;
        Ok(())
    }

    /// Fully resolved config in canonical order.
    pub fn to_text(&self) -> String {
        let layers: Vec<String> = self.train.hidden_layers.iter().map(|n| n.to_string()).collect();
        let mut pairs = vec![("seed.master".to_string(), self.master_seed.to_string())];
        pairs.extend(sim_to_kv(&self.sim));
        pairs.extend([
            ("data.train_size".into(), self.train_size.to_string()),
            ("data.val_size".into(), self.val_size.to_string()),
            ("data.test_size".into(), self.test_size.to_string()),
            ("train.batch_size".into(), self.train.batch_size.to_string()),
            ("train.max_epochs".into(), self.train.max_epochs.to_string()),
            ("train.patience".into(), self.train.patience.to_string()),
            ("train.learning_rate".into(), self.train.learning_rate.to_string()),
            ("train.hidden_layers".into(), layers.join(",")),
            ("sweep.frames_per_point".into(), self.sweep.frames_per_point.to_string()),
            ("sweep.idle_cal".into(), self.sweep.idle_cal.to_string()),
            ("sweep.idle_ver".into(), self.sweep.idle_ver.to_string()),
            ("sweep.pfa".into(), self.sweep.pfa.to_string()),
        ]);
        pairs.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    /// Hash of the resolved config. The workspace path is not part of it.
    pub fn hash(&self) -> String {
        content_hash(self.to_text().as_bytes())
    }
}
