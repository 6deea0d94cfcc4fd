//! The four batch commands.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use psfield::analysis::sensitivity;
use psfield::baselines::{idw_interpolate, pca_fit, rbf_interpolate};
use psfield::datagen::{config_value, generate_field, parse_config, write_field, IMAGE_DIR};
use psfield::field::{
    load_samples, nearest_neighbors, write_manifest, FieldSample, ManifestEntry, TrainInterpolator,
};
use psfield::imaging::field_metrics;
use psfield::{Error, GroundMetric, Image, Result};

use crate::config::{RunConfig, DEFAULT_PCA_COMPONENTS};

/// Per-run file names inside an estimate directory.
pub const ESTIMATES_MANIFEST: &str = "estimates.csv";
pub const TIMINGS: &str = "timings.csv";
pub const RUN_INFO: &str = "run.cfg";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Train,
    Idw,
    Rbf,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Train => "train",
            Method::Idw => "idw",
            Method::Rbf => "rbf",
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn write_csv(path: Option<&Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let out: Box<dyn std::io::Write> = match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            Box::new(fs::File::create(p)?)
        }
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (train, test) = generate_field(&cfg.field)?;
    write_field(out, &train, &test)?;
    println!(
        "gen: {} train and {} test PSFs of {}x{} ({}, warp {}) written to {}",
        train.len(),
        test.len(),
        cfg.field.rows,
        cfg.field.cols,
        cfg.field.family,
        cfg.field.warp_amplitude,
        out.display()
    );
    Ok(())
}

/// Name of the directory holding one method and neighbor count.
pub fn run_dir_name(method: Method, p: usize) -> String {
    format!("{}_p{p}", method.name())
}

struct Estimate {
    img: Image,
    seconds: f64,
    discrepancy: usize,
}

fn ground_metric(cfg: &RunConfig, train: &[FieldSample]) -> Result<GroundMetric> {
    match cfg.beta {
        Some(b) => GroundMetric::new(b),
        None => cfg.beta_rule.metric(train),
    }
}

pub fn interp(
    cfg: &RunConfig,
    manifest: &Path,
    targets: &Path,
    method: Method,
    neighbors: &[usize],
    out: &Path,
) -> Result<()> {
    let (_, train) = load_samples(manifest)?;
    let (target_entries, _) = load_samples(targets)?;
    let positions: Vec<[f64; 2]> = target_entries.iter().map(|e| e.pos).collect();
    for &p in neighbors {
        if p == 0 || p > train.len() {
            return Err(Error::InvalidInput(format!(
                "cannot use {p} neighbors with {} samples",
                train.len()
            )));
        }
    }
    let timed = |k: usize, f: &dyn Fn() -> Result<Image>| -> Result<Estimate> {
        let t0 = Instant::now();
        let img = f().map_err(|e| Error::Target {
            index: k,
            source: Box::new(e),
        })?;
        Ok(Estimate {
            img,
            seconds: t0.elapsed().as_secs_f64(),
            discrepancy: 0,
        })
    };
    let mut info = vec![("method", method.name().to_string())];
    let runs: Vec<(usize, Vec<Estimate>)> = match method {
        Method::Train => {
            let metric = ground_metric(cfg, &train)?;
            let interp = TrainInterpolator::new(&train, metric, &cfg.train)?;
            info.push(("beta", num(metric.beta())));
            info.push(("d_ext", interp.d_ext().to_string()));
            neighbors
                .iter()
                .map(|&p| {
                    let hoods: Vec<Vec<usize>> = positions
                        .iter()
                        .map(|&t| nearest_neighbors(t, &train, p))
                        .collect::<Result<_>>()?;
                    let t0 = Instant::now();
                    interp.precompute(&hoods)?;
                    let shared = t0.elapsed().as_secs_f64();
                    let est: Vec<Estimate> = positions
                        .par_iter()
                        .enumerate()
                        .map(|(k, &t)| {
                            let t0 = Instant::now();
                            let o = interp.interpolate(t, p, k)?;
                            Ok(Estimate {
                                img: o.sample.img,
                                seconds: t0.elapsed().as_secs_f64(),
                                discrepancy: o.max_discrepancy,
                            })
                        })
                        .collect::<Result<_>>()?;
                    println!(
                        "interp: train p={p}: {} targets, pair distances {shared:.2} s, worst discrepancy {}",
                        est.len(),
                        est.iter().map(|e| e.discrepancy).max().unwrap_or(0)
                    );
                    Ok((p, est))
                })
                .collect::<Result<_>>()?
        }
        Method::Idw => neighbors
            .iter()
            .map(|&p| {
                let est = positions
                    .par_iter()
                    .enumerate()
                    .map(|(k, &t)| timed(k, &|| idw_interpolate(&train, t, p)))
                    .collect::<Result<_>>()?;
                Ok((p, est))
            })
            .collect::<Result<_>>()?,
        Method::Rbf => {
            let imgs: Vec<Image> = train.iter().map(|s| s.img.clone()).collect();
            let q = cfg.pca_components.unwrap_or(
                DEFAULT_PCA_COMPONENTS
                    .min(imgs.len())
                    .min(imgs.first().map_or(1, Image::len)),
            );
            let basis = pca_fit(&imgs, q)?;
            info.push(("pca_components", q.to_string()));
            neighbors
                .iter()
                .map(|&p| {
                    let est = positions
                        .par_iter()
                        .enumerate()
                        .map(|(k, &t)| timed(k, &|| rbf_interpolate(&train, t, p, &basis)))
                        .collect::<Result<_>>()?;
                    Ok((p, est))
                })
                .collect::<Result<_>>()?
        }
    };
    for (p, est) in runs {
        let dir = out.join(run_dir_name(method, p));
        write_run(&dir, &target_entries, &est, &info, p)?;
        println!(
            "interp: {} p={p}: {} estimates written to {}",
            method.name(),
            est.len(),
            dir.display()
        );
    }
    Ok(())
}

fn write_run(
    dir: &Path,
    targets: &[ManifestEntry],
    est: &[Estimate],
    info: &[(&str, String)],
    p: usize,
) -> Result<()> {
    fs::create_dir_all(dir.join(IMAGE_DIR))?;
    let entries: Vec<ManifestEntry> = targets
        .iter()
        .zip(est)
        .map(|(t, e)| {
            let rel = PathBuf::from(IMAGE_DIR).join(format!("{}.txt", t.id));
            e.img.write(dir.join(&rel))?;
            Ok(ManifestEntry {
                id: t.id.clone(),
                pos: t.pos,
                image_path: rel,
            })
        })
        .collect::<Result<_>>()?;
    write_manifest(dir.join(ESTIMATES_MANIFEST), &entries)?;
    let rows: Vec<Vec<String>> = targets
        .iter()
        .zip(est)
        .map(|(t, e)| {
            vec![
                t.id.clone(),
                format!("{:.6}", e.seconds),
                e.discrepancy.to_string(),
            ]
        })
        .collect();
    write_csv(
        Some(&dir.join(TIMINGS)),
        &["target_id", "seconds", "discrepancy"],
        &rows,
    )?;
    let mut text = String::new();
    for (k, v) in info {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push_str(&format!("neighbors = {p}\n"));
    fs::write(dir.join(RUN_INFO), text)?;
    Ok(())
}

/// Estimate directories under `path`: itself when it holds a run, else its
/// run subdirectories in name order.
fn run_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(RUN_INFO).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read estimates {}: {e}", path.display())))?
        .map(|d| d.map(|d| d.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|d| d.join(RUN_INFO).is_file());
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no estimate runs under {}",
            path.display()
        )));
    }
    Ok(dirs)
}

pub fn metrics(truth: &Path, estimates: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let (entries, samples) = load_samples(truth)?;
    let truth_imgs: Vec<Image> = samples.into_iter().map(|s| s.img).collect();
    let mut rows = Vec::new();
    for root in estimates {
        for dir in run_dirs(root)? {
            let info = parse_config(&fs::read_to_string(dir.join(RUN_INFO))?)?;
            let method: String = config_value(&info, "method")?
                .ok_or_else(|| Error::Parse(format!("{} lacks a method", dir.display())))?;
            let p: usize = config_value(&info, "neighbors")?
                .ok_or_else(|| Error::Parse(format!("{} lacks a neighbor count", dir.display())))?;
            let (est_entries, est) = load_samples(dir.join(ESTIMATES_MANIFEST))?;
            let by_id: HashMap<&str, &Image> = est_entries
                .iter()
                .zip(&est)
                .map(|(e, s)| (e.id.as_str(), &s.img))
                .collect();
            let matched: Vec<Image> = entries
                .iter()
                .map(|e| {
                    by_id.get(e.id.as_str()).map(|&i| i.clone()).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "{} has no estimate for {}",
                            dir.display(),
                            e.id
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let m = field_metrics(&truth_imgs, &matched)?;
            rows.push(vec![
                method,
                p.to_string(),
                num(m.e_gamma),
                num(m.e_size),
                num(m.nmse),
            ]);
        }
    }
    write_csv(
        out,
        &["method", "neighbors", "E_gamma", "E_S", "NMSE"],
        &rows,
    )
}

pub fn sensitivity_cmd(manifests: &[PathBuf], q: usize, out: Option<&Path>) -> Result<()> {
    let mut imgs = Vec::new();
    for m in manifests {
        imgs.extend(load_samples(m)?.1.into_iter().map(|s| s.img));
    }
    let basis = pca_fit(&imgs, q)?;
    let report = sensitivity(&imgs, &basis)?;
    let rows: Vec<Vec<String>> = report
        .per_component
        .iter()
        .enumerate()
        .map(|(j, c)| vec![(j + 1).to_string(), num(c.v_e1), num(c.v_e2), num(c.disp)])
        .collect();
    write_csv(out, &["j", "V_e1", "V_e2", "disp_j"], &rows)
}
