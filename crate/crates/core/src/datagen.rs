//! Synthetic PSF fields whose shape varies smoothly and non-linearly over the
//! field of view.
//!
//! Each PSF is an elliptical core whose orientation, axis ratio, width and
//! centre depend on the position, plus either an off-axis secondary lobe
//! (`gaussian_mixture`) or a faint ring (`airy_like`). Every parameter is
//! multiplied by `warp_amplitude`, so `warp_amplitude = 0` gives a constant
//! field.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{write_manifest, FieldSample, ManifestEntry};
use crate::imaging::Image;
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    GaussianMixture,
    AiryLike,
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_mixture" => Ok(Family::GaussianMixture),
            "airy_like" => Ok(Family::AiryLike),
            other => Err(Error::Parse(format!(
                "unknown family {other:?}, expected gaussian_mixture or airy_like"
            ))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::GaussianMixture => "gaussian_mixture",
            Family::AiryLike => "airy_like",
        })
    }
}

/// Description of a synthetic field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// `(x_min, x_max, y_min, y_max)`.
    pub fov: (f64, f64, f64, f64),
    pub family: Family,
    pub warp_amplitude: f64,
    pub rng_seed: u64,
}

impl Default for FieldSpec {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            n_train: 300,
            n_test: 250,
            fov: (-1.0, 1.0, -1.0, 1.0),
            family: Family::GaussianMixture,
            warp_amplitude: 1.0,
            rng_seed: 0,
        }
    }
}

/// Keys understood by [`FieldSpec::from_config`].
pub const FIELD_SPEC_KEYS: [&str; 8] = [
    "rows",
    "cols",
    "n_train",
    "n_test",
    "fov",
    "family",
    "warp_amplitude",
    "rng_seed",
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected key = value, got {raw:?}", n + 1))
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(out)
}

/// Parses the value of `key` if present.
pub fn config_value<T: FromStr>(cfg: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    cfg.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad value {v:?} for {key}")))
        })
        .transpose()
}

impl FieldSpec {
    /// Reads the keys of [`FIELD_SPEC_KEYS`], keeping defaults for missing
    /// ones; other keys are ignored.
    pub fn from_config(cfg: &BTreeMap<String, String>) -> Result<Self> {
        let d = Self::default();
        let fov = match cfg.get("fov") {
            None => d.fov,
            Some(v) => {
                let nums: Vec<f64> = v
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse()
                            .map_err(|_| Error::Parse(format!("bad fov value {v:?}")))
                    })
                    .collect::<Result<_>>()?;
                match nums[..] {
                    [a, b, c, e] => (a, b, c, e),
                    _ => return Err(Error::Parse(format!("fov needs 4 numbers, got {v:?}"))),
                }
            }
        };
        let spec = Self {
            rows: config_value(cfg, "rows")?.unwrap_or(d.rows),
            cols: config_value(cfg, "cols")?.unwrap_or(d.cols),
            n_train: config_value(cfg, "n_train")?.unwrap_or(d.n_train),
            n_test: config_value(cfg, "n_test")?.unwrap_or(d.n_test),
            fov,
            family: config_value(cfg, "family")?.unwrap_or(d.family),
            warp_amplitude: config_value(cfg, "warp_amplitude")?.unwrap_or(d.warp_amplitude),
            rng_seed: config_value(cfg, "rng_seed")?.unwrap_or(d.rng_seed),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_config(&parse_config(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidInput(
                "image dimensions must be positive".into(),
            ));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::InvalidInput("sample counts must be >= 1".into()));
        }
        let (a, b, c, d) = self.fov;
        if !(a < b && c < d && [a, b, c, d].iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "degenerate field of view {:?}",
                self.fov
            )));
        }
        if !self.warp_amplitude.is_finite() || self.warp_amplitude < 0.0 {
            return Err(Error::InvalidInput(format!(
                "warp amplitude must be finite and nonnegative, got {}",
                self.warp_amplitude
            )));
        }
        Ok(())
    }

    /// Position mapped to `[-1, 1]²`.
    fn unit_coords(&self, pos: [f64; 2]) -> (f64, f64) {
        let (a, b, c, d) = self.fov;
        (
            2.0 * (pos[0] - a) / (b - a) - 1.0,
            2.0 * (pos[1] - c) / (d - c) - 1.0,
        )
    }

    /// Core width at the field centre, in pixels.
    fn base_sigma(&self) -> f64 {
        0.08 * self.rows.min(self.cols) as f64
    }
}

/// Shape parameters of the PSF at one position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsfParams {
    /// `(row, col)` of the core centre, in pixels.
    pub center: (f64, f64),
    /// Standard deviations along the major and minor axes, in pixels.
    pub sigma_major: f64,
    pub sigma_minor: f64,
    /// Angle of the major axis from the row axis, in radians.
    pub theta: f64,
    /// `(row, col)` offset of the secondary lobe; unused by `airy_like`.
    pub lobe_offset: (f64, f64),
}

pub fn psf_params(spec: &FieldSpec, pos: [f64; 2]) -> PsfParams {
    let w = spec.warp_amplitude;
    let (u, v) = spec.unit_coords(pos);
    let r2 = 0.5 * (u * u + v * v);
    let s0 = spec.base_sigma();
    let theta = w * (0.8 * u * v + 0.7 * (1.3 * u).sin() + 0.3 * v);
    let ratio = (1.0 - w * (0.06 + 0.1 * r2)).max(0.3);
    let sigma_major = s0 * (1.0 + 0.15 * w * r2);
    let center = (
        0.5 * (spec.rows as f64 - 1.0) + w * 0.6 * v,
        0.5 * (spec.cols as f64 - 1.0) + w * 0.6 * u,
    );
    let phi = theta + w * (1.2 * u - 0.8 * v);
    let dist = 2.2 * s0;
    PsfParams {
        center,
        sigma_major,
        sigma_minor: sigma_major * ratio,
        theta,
        lobe_offset: (dist * phi.cos(), dist * phi.sin()),
    }
}

/// Discretizes the PSF at pixel centres and normalizes it to unit mass.
pub fn render(spec: &FieldSpec, p: &PsfParams) -> Image {
    let (s, c) = p.theta.sin_cos();
    let s0 = spec.base_sigma();
    let img = Image::from_fn(spec.rows, spec.cols, |i, j| {
        let (di, dj) = (i as f64 - p.center.0, j as f64 - p.center.1);
        let a = (c * di + s * dj) / p.sigma_major;
        let b = (-s * di + c * dj) / p.sigma_minor;
        let rho2 = a * a + b * b;
        let core = (-0.5 * rho2).exp();
        match spec.family {
            Family::GaussianMixture => {
                let (li, lj) = (di - p.lobe_offset.0, dj - p.lobe_offset.1);
                let lw = 0.6 * s0;
                core + 0.2 * (-0.5 * (li * li + lj * lj) / (lw * lw)).exp()
            }
            Family::AiryLike => {
                let rho = rho2.sqrt();
                core + 0.08 * (-0.5 * ((rho - 3.2) / 0.5).powi(2)).exp()
            }
        }
    });
    img.normalized().expect("profile has positive mass")
}

pub fn psf_at(spec: &FieldSpec, pos: [f64; 2]) -> Image {
    render(spec, &psf_params(spec, pos))
}

/// Training and test samples at seeded uniform positions.
pub fn generate_field(spec: &FieldSpec) -> Result<(Vec<FieldSample>, Vec<FieldSample>)> {
    spec.validate()?;
    let mut rng = rng_from(derive_seed(spec.rng_seed, 0));
    let (a, b, c, d) = spec.fov;
    let positions: Vec<[f64; 2]> = (0..spec.n_train + spec.n_test)
        .map(|_| [rng.random_range(a..b), rng.random_range(c..d)])
        .collect();
    let mut all: Vec<FieldSample> = positions
        .par_iter()
        .map(|&p| FieldSample::new(p, psf_at(spec, p)))
        .collect();
    let test = all.split_off(spec.n_train);
    Ok((all, test))
}

/// File names written by [`write_field`].
pub const TRAIN_MANIFEST: &str = "train.csv";
pub const TEST_MANIFEST: &str = "test.csv";
pub const IMAGE_DIR: &str = "images";

/// Writes images under `dir/images` and the two manifests; returns the
/// manifest paths `(train, test)`.
pub fn write_field(
    dir: impl AsRef<Path>,
    train: &[FieldSample],
    test: &[FieldSample],
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join(IMAGE_DIR))?;
    let mut paths = Vec::new();
    for (prefix, set, name) in [
        ("train", train, TRAIN_MANIFEST),
        ("test", test, TEST_MANIFEST),
    ] {
        let entries = write_samples(dir, prefix, set)?;
        let path = dir.join(name);
        write_manifest(&path, &entries)?;
        paths.push(path);
    }
    Ok((paths[0].clone(), paths[1].clone()))
}

/// Writes `dir/images/{prefix}_{k}.txt` for each sample and returns the
/// manifest rows, with paths relative to `dir`.
pub fn write_samples(dir: &Path, prefix: &str, set: &[FieldSample]) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(dir.join(IMAGE_DIR))?;
    set.par_iter()
        .enumerate()
        .map(|(k, s)| {
            let id = format!("{prefix}_{k:04}");
            let rel = PathBuf::from(IMAGE_DIR).join(format!("{id}.txt"));
            s.img.write(dir.join(&rel))?;
            Ok(ManifestEntry {
                id,
                pos: s.pos,
                image_path: rel,
            })
        })
        .collect()
}
