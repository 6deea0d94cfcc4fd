//! Run configuration: the datagen keys plus the interpolation parameters, read
//! from one `key = value` file.

use std::collections::BTreeMap;
use std::path::Path;

use psfield::datagen::{config_value, parse_config, FieldSpec, FIELD_SPEC_KEYS};
use psfield::field::{BetaRule, TrainConfig};
use psfield::transport::SlicedConfig;
use psfield::{Error, Result};

/// Number of principal components used by the PCA-based baseline.
pub const DEFAULT_PCA_COMPONENTS: usize = 40;

/// Interpolation keys accepted in addition to [`FIELD_SPEC_KEYS`].
pub const INTERP_KEYS: [&str; 9] = [
    "num_directions",
    "max_iters",
    "step_size",
    "step_decay_exponent",
    "init_window",
    "d_ext",
    "beta_rule",
    "beta",
    "pca_components",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub field: FieldSpec,
    pub train: TrainConfig,
    pub beta_rule: BetaRule,
    /// Fixed `β`, overriding `beta_rule`.
    pub beta: Option<f64>,
    /// `None` keeps as many components as the samples allow, up to
    /// [`DEFAULT_PCA_COMPONENTS`].
    pub pca_components: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_map(&BTreeMap::new()).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_config(text)?)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(|e| {
                Error::InvalidInput(format!("cannot read config {}: {e}", p.display()))
            })?),
        }
    }

    fn from_map(cfg: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = cfg
            .keys()
            .find(|k| !FIELD_SPEC_KEYS.contains(&k.as_str()) && !INTERP_KEYS.contains(&k.as_str()))
        {
            return Err(Error::Parse(format!("unknown config key {k:?}")));
        }
        let field = FieldSpec::from_config(cfg)?;
        let d = SlicedConfig::default();
        let init_window = match cfg.get("init_window").map(String::as_str) {
            None | Some("none") => None,
            Some(v) => {
                let dims: Vec<usize> = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Error::Parse(format!("bad init_window {v:?}")))
                    })
                    .collect::<Result<_>>()?;
                match dims[..] {
                    [h, w] => Some((h, w)),
                    _ => {
                        return Err(Error::Parse(format!(
                            "init_window needs rows,cols, got {v:?}"
                        )))
                    }
                }
            }
        };
        let sliced = SlicedConfig {
            num_directions: config_value(cfg, "num_directions")?.unwrap_or(d.num_directions),
            max_iters: config_value(cfg, "max_iters")?.unwrap_or(d.max_iters),
            step_size: config_value(cfg, "step_size")?.unwrap_or(d.step_size),
            step_decay_exponent: config_value(cfg, "step_decay_exponent")?
                .unwrap_or(d.step_decay_exponent),
            rng_seed: field.rng_seed,
            init_window,
        };
        sliced.validate()?;
        let run = Self {
            train: TrainConfig {
                d_ext: config_value(cfg, "d_ext")?,
                sliced,
            },
            beta_rule: config_value(cfg, "beta_rule")?.unwrap_or_default(),
            beta: config_value(cfg, "beta")?,
            pca_components: config_value(cfg, "pca_components")?,
            field,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        self.field.validate()?;
        self.train.sliced.validate()?;
        if self.train.d_ext == Some(0) {
            return Err(Error::InvalidInput("d_ext must be >= 1".into()));
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "beta must be positive, got {b}"
                )));
            }
        }
        if self.pca_components == Some(0) {
            return Err(Error::InvalidInput("pca_components must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies a `--seed` override to both the field and the transports.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.field.rng_seed = s;
            self.train.sliced.rng_seed = s;
        }
        self
    }
}
