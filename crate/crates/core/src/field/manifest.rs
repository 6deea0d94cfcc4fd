use std::path::{Path, PathBuf};

use super::FieldSample;
use crate::error::{Error, Result};
use crate::imaging::Image;

const HEADER: [&str; 4] = ["id", "x", "y", "image_path"];

/// One row of a field manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub pos: [f64; 2],
    /// As written in the manifest, relative to its directory.
    pub image_path: PathBuf,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Reads a CSV manifest with header `id,x,y,image_path`.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(HEADER) {
        return Err(Error::Parse(format!(
            "{}: expected header {}, got {}",
            path.display(),
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |k: usize| -> Result<f64> {
            let v: f64 = rec[k].parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: row {}: bad number {:?}",
                    path.display(),
                    line + 1,
                    &rec[k]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!(
                    "{}: row {}: non-finite position",
                    path.display(),
                    line + 1
                )));
            }
            Ok(v)
        };
        out.push(ManifestEntry {
            id: rec[0].to_string(),
            pos: [num(1)?, num(2)?],
            image_path: PathBuf::from(&rec[3]),
        });
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(HEADER).map_err(csv_err)?;
    for e in entries {
        let path = e.image_path.to_str().ok_or_else(|| {
            Error::InvalidInput(format!("image path {:?} is not valid UTF-8", e.image_path))
        })?;
        w.write_record([
            e.id.as_str(),
            &format!("{:?}", e.pos[0]),
            &format!("{:?}", e.pos[1]),
            path,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a manifest and every image it references.
pub fn load_samples(path: impl AsRef<Path>) -> Result<(Vec<ManifestEntry>, Vec<FieldSample>)> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let entries = read_manifest(path)?;
    let samples = entries
        .iter()
        .map(|e| {
            Ok(FieldSample::new(
                e.pos,
                Image::read(base.join(&e.image_path))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((entries, samples))
}
