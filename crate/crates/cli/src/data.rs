//! Directory datasets: `images/*.ppm` with matching `masks/*.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use srnet_core::training::Sample;
use srnet_core::Tensor;

use crate::{pnm, CliError};

/// Files in `dir` with extension `ext`, sorted by name.
pub fn list(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Load every image whose mask exists, in file-name order.
pub fn load_dir(dir: &Path) -> Result<Vec<Sample>, CliError> {
    let masks = dir.join("masks");
    let mut out = Vec::new();
    for image in list(&dir.join("images"), "ppm")? {
        let mask = masks.join(format!("{}.pgm", stem(&image)));
        if !mask.exists() {
            return Err(CliError::Validation(format!("{} has no mask {}", image.display(), mask.display())));
        }
        out.push(Sample::new(pnm::load(&image)?, pnm::load(&mask)?)?);
    }
    if out.is_empty() {
        return Err(CliError::Validation(format!("no images under {}", dir.join("images").display())));
    }
    Ok(out)
}

/// Grayscale maps keyed by file stem.
pub fn load_maps(dir: &Path) -> Result<Vec<(String, Tensor)>, CliError> {
    list(dir, "pgm")?
        .into_iter()
        .map(|p| Ok((stem(&p), pnm::load(&p)?)))
        .collect()
}
