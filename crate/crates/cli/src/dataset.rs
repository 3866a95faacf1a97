//! On-disk dataset layout:
//! `root/{rgb,depth,gt}/NNNN.{ppm,pgm}` with zero-padded indices, plus a
//! `manifest.txt` listing the indices of the split.

use std::path::{Path, PathBuf};

use crate::error::{CliError, IoContext, Result};
use crate::pnm;
use crate::synth::Sample;

pub fn write_split(root: &Path, samples: &[Sample]) -> Result<()> {
    for sub in ["rgb", "depth", "gt"] {
        std::fs::create_dir_all(root.join(sub))
            .io_ctx(format!("creating {}", root.join(sub).display()))?;
    }
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let idx = format!("{i:04}");
        pnm::save_ppm(&root.join("rgb").join(format!("{idx}.ppm")), s.h, s.w, &s.rgb)?;
        pnm::save_pgm(
            &root.join("depth").join(format!("{idx}.pgm")),
            s.h,
            s.w,
            &s.depth,
        )?;
        pnm::save_pgm(&root.join("gt").join(format!("{idx}.pgm")), s.h, s.w, &s.gt)?;
        manifest.push_str(&idx);
        manifest.push('\n');
    }
    std::fs::write(root.join("manifest.txt"), manifest)
        .io_ctx(format!("writing {}", root.join("manifest.txt").display()))
}

pub fn read_split(root: &Path) -> Result<Vec<Sample>> {
    let manifest_path = root.join("manifest.txt");
    let manifest = std::fs::read_to_string(&manifest_path)
        .io_ctx(format!("reading {}", manifest_path.display()))?;
    let mut samples = Vec::new();
    for idx in manifest.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let rgb = pnm::load_ppm(&root.join("rgb").join(format!("{idx}.ppm")))?;
        let depth = pnm::load_pgm(&root.join("depth").join(format!("{idx}.pgm")))?;
        let gt = pnm::load_pgm(&root.join("gt").join(format!("{idx}.pgm")))?;
        if (rgb.h, rgb.w) != (depth.h, depth.w) || (rgb.h, rgb.w) != (gt.h, gt.w) {
            return Err(CliError::contract(format!(
                "sample {idx}: rgb {}x{}, depth {}x{}, gt {}x{} disagree",
                rgb.h, rgb.w, depth.h, depth.w, gt.h, gt.w
            )));
        }
        samples.push(Sample {
            h: rgb.h,
            w: rgb.w,
            rgb: rgb.data,
            depth: depth.data,
            // snap 8-bit gt back to exact binary
            gt: gt.data.iter().map(|&v| f64::from(v >= 0.5)).collect(),
        });
    }
    if samples.is_empty() {
        return Err(CliError::contract(format!(
            "{}: empty split (no manifest entries)",
            root.display()
        )));
    }
    Ok(samples)
}

/// Paired prediction/ground-truth grayscale maps from two directories,
/// matched by file name stem.
pub fn read_eval_pairs(
    pred_dir: &Path,
    gt_dir: &Path,
) -> Result<Vec<(String, sod_core::metrics::GrayMap, sod_core::metrics::GrayMap)>> {
    let mut names: Vec<(String, PathBuf)> = Vec::new();
    let entries =
        std::fs::read_dir(pred_dir).io_ctx(format!("listing {}", pred_dir.display()))?;
    for entry in entries {
        let entry = entry.io_ctx(format!("listing {}", pred_dir.display()))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("pgm") {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            names.push((stem, path));
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(CliError::contract(format!(
            "{}: no .pgm predictions found",
            pred_dir.display()
        )));
    }
    let mut pairs = Vec::new();
    for (stem, pred_path) in names {
        let gt_path = gt_dir.join(format!("{stem}.pgm"));
        let pred = pnm::load_pgm(&pred_path)?;
        let gt = pnm::load_pgm(&gt_path)?;
        pairs.push((
            stem,
            sod_core::metrics::GrayMap::new(pred.h, pred.w, pred.data)?,
            sod_core::metrics::GrayMap::new(gt.h, gt.w, gt.data)?,
        ));
    }
    Ok(pairs)
}
