//! Pipeline configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! lambda = 0.2
//! xi = 7
//! scale-weights = 0.5, 0.3, 0.2
//! ```
//!
//! Keys mirror the command-line flag names.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::guided::FilterParams;
use crate::io::Depth;
use crate::retinex::CorrectionParams;

/// Every key accepted in a config file, in serialization order.
pub const KEYS: [&str; 10] = [
    "lambda",
    "xi",
    "r",
    "threshold",
    "alpha",
    "tau-r",
    "mu-radius",
    "scale-weights",
    "seed",
    "depth",
];

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub filter: FilterParams,
    pub correction: CorrectionParams,
    /// Seed for every random draw made by the tools.
    pub seed: u64,
    /// Output bit depth.
    pub depth: Depth,
}

fn parse<T: FromStr>(key: &'static str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidParam {
        name: key,
        reason: format!("cannot parse {value:?}"),
    })
}

fn static_key(key: &str) -> Option<&'static str> {
    KEYS.iter().copied().find(|k| *k == key)
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.correction.validate()
    }

    /// Sets one key. Unknown keys and unparsable values are errors; range
    /// checks are left to [`PipelineConfig::validate`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = static_key(key.trim()).ok_or_else(|| Error::InvalidParam {
            name: "config",
            reason: format!("unknown key {:?}", key.trim()),
        })?;
        match key {
            "lambda" => self.filter.lambda = parse(key, value)?,
            "xi" => self.filter.xi = parse(key, value)?,
            "r" => self.filter.r = parse(key, value)?,
            "threshold" => self.filter.threshold = parse(key, value)?,
            "alpha" => self.correction.alpha = parse(key, value)?,
            "tau-r" => self.correction.tau_r = parse(key, value)?,
            "mu-radius" => self.correction.mu_radius = parse(key, value)?,
            "scale-weights" => {
                let ws: Vec<f64> = value
                    .split(',')
                    .map(|w| parse(key, w))
                    .collect::<Result<_>>()?;
                if ws.len() != self.correction.scales.len() {
                    return Err(Error::InvalidParam {
                        name: key,
                        reason: format!("expected 3 weights, got {}", ws.len()),
                    });
                }
                for (s, w) in self.correction.scales.iter_mut().zip(ws) {
                    s.weight = w;
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "depth" => self.depth = Depth::from_bits(parse(key, value)?)?,
            _ => unreachable!("key list and match arms out of sync"),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::InvalidParam {
                name: "config",
                reason: format!("line {}: expected key = value", n + 1),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Defaults overridden by `text`, validated.
    pub fn from_str_validated(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_str_validated(&text)
    }

    /// Value of `key` in the text form, or `None` for an unknown key.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "lambda" => self.filter.lambda.to_string(),
            "xi" => self.filter.xi.to_string(),
            "r" => self.filter.r.to_string(),
            "threshold" => self.filter.threshold.to_string(),
            "alpha" => self.correction.alpha.to_string(),
            "tau-r" => self.correction.tau_r.to_string(),
            "mu-radius" => self.correction.mu_radius.to_string(),
            "scale-weights" => self
                .correction
                .scales
                .iter()
                .map(|s| s.weight.to_string())
                .collect::<Vec<_>>()
                .join(", "),
            "seed" => self.seed.to_string(),
            "depth" => self.depth.bits().to_string(),
            _ => return None,
        })
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            writeln!(out, "{k} = {}", self.get(k).unwrap()).unwrap();
        }
        out
    }
}
