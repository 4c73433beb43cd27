use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::imagecore::{load_png, resize_bilinear, Image, Mask};
use crate::metrics::{edge_ssim, inception_score, iou, ssim_planes, top1_accuracy, MetricParams, ProbTable};
use crate::segmentation::{load_mask, DEFAULT_MASK_THRESHOLD};
use crate::{imagecore, Error, Result};

pub const REPORT_COLUMNS: [&str; 6] = ["stem", "e_ssim", "ssim", "iou", "accuracy", "inception_score"];

/// Dims with the shorter side scaled to `target`, aspect ratio kept.
pub fn shorter_side_dims(width: usize, height: usize, target: usize) -> (usize, usize) {
    let scale = |long: usize, short: usize| ((long as f64 * target as f64 / short as f64).round() as usize).max(1);
    if width <= height {
        (target, scale(height, width))
    } else {
        (scale(width, height), target)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub stem: String,
    pub e_ssim: f64,
    pub ssim: f64,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub params: MetricParams,
    pub rows: Vec<EvalRow>,
    pub accuracy: Option<f64>,
    pub inception_score: Option<f64>,
    /// Stems present in only one of the two image directories.
    pub unmatched: Vec<String>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl EvalReport {
    pub fn mean_e_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.e_ssim)).unwrap_or(f64::NAN)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.ssim)).unwrap_or(f64::NAN)
    }

    /// Mean over the rows that have both masks.
    pub fn mean_iou(&self) -> Option<f64> {
        mean(self.rows.iter().filter_map(|r| r.iou))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# params: {}", self.params.describe());
        let _ = writeln!(out, "{}", REPORT_COLUMNS.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{},{:.6},{:.6},{},,", r.stem, r.e_ssim, r.ssim, opt(r.iou));
        }
        let _ = writeln!(
            out,
            "mean,{:.6},{:.6},{},{},{}",
            self.mean_e_ssim(),
            self.mean_ssim(),
            opt(self.mean_iou()),
            opt(self.accuracy),
            opt(self.inception_score)
        );
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            if let Some(s) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(s.to_string());
            }
        }
    }
    Ok(stems)
}

/// Scores one result against its reference at the evaluation resolution.
/// The reference fixes the target dims; the result is resized onto them.
pub fn eval_pair(result: &Image, reference: &Image, params: &MetricParams) -> Result<(f64, f64)> {
    let (w, h) = shorter_side_dims(reference.width(), reference.height(), params.eval_size);
    let r = resize_bilinear(reference, w, h)?;
    let x = resize_bilinear(result, w, h)?;
    let e = edge_ssim(&x, &r, &params.canny, &params.ssim)?;
    let s = ssim_planes(&imagecore::rgb_to_luma(&x), &imagecore::rgb_to_luma(&r), &params.ssim)?;
    Ok((e, s))
}

fn mask_iou(result_mask: &Mask, reference_mask: &Mask, params: &MetricParams) -> Result<f64> {
    let (w, h) = shorter_side_dims(reference_mask.width(), reference_mask.height(), params.eval_size);
    iou(
        &result_mask.resize_nearest(w, h)?,
        &reference_mask.resize_nearest(w, h)?,
    )
}

/// Evaluates every stem present in both `results` and `refs`.
///
/// `masks` may hold `<stem>.png` (reference segmentation) and
/// `<stem>_result.png` (segmentation of the result); IoU is reported when
/// both exist. `probs` supplies classifier posteriors for accuracy and
/// Inception Score.
pub fn eval_corpus(
    results: &Path,
    refs: &Path,
    masks: Option<&Path>,
    probs: Option<&Path>,
    params: &MetricParams,
) -> Result<EvalReport> {
    params.validate()?;
    let a = png_stems(results)?;
    let b = png_stems(refs)?;
    let unmatched: Vec<String> = a.symmetric_difference(&b).cloned().collect();
    for s in &unmatched {
        log::warn!(
            "skipping `{s}`: not present in both {} and {}",
            results.display(),
            refs.display()
        );
    }
    let common: Vec<&String> = a.intersection(&b).collect();
    if common.is_empty() {
        return Err(Error::Empty(format!(
            "no common image stems between {} and {}",
            results.display(),
            refs.display()
        )));
    }
    let path_of = |dir: &Path, name: String| -> PathBuf { dir.join(name) };
    let mut rows = Vec::with_capacity(common.len());
    for stem in common {
        let x = load_png(path_of(results, format!("{stem}.png")))?;
        let r = load_png(path_of(refs, format!("{stem}.png")))?;
        let (e_ssim, ssim) = eval_pair(&x, &r, params)?;
        let iou = match masks {
            Some(dir) => {
                let ref_mask = path_of(dir, format!("{stem}.png"));
                let res_mask = path_of(dir, format!("{stem}_result.png"));
                if ref_mask.exists() && res_mask.exists() {
                    let m_ref = load_mask(&ref_mask, DEFAULT_MASK_THRESHOLD)?;
                    let m_res = load_mask(&res_mask, DEFAULT_MASK_THRESHOLD)?;
                    Some(mask_iou(&m_res, &m_ref, params)?)
                } else {
                    log::warn!("no mask pair for `{stem}` in {}", dir.display());
                    None
                }
            }
            None => None,
        };
        rows.push(EvalRow {
            stem: stem.clone(),
            e_ssim,
            ssim,
            iou,
        });
    }
    let (accuracy, inception) = match probs {
        Some(p) => {
            let table = ProbTable::load(p)?;
            let acc = if table.has_labels() {
                Some(top1_accuracy(&table)?)
            } else {
                None
            };
            (acc, Some(inception_score(&table, params.inception_splits)?))
        }
        None => (None, None),
    };
    Ok(EvalReport {
        params: *params,
        rows,
        accuracy,
        inception_score: inception,
        unmatched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorter_side_scaling() {
        assert_eq!(shorter_side_dims(512, 1024, 256), (256, 512));
        assert_eq!(shorter_side_dims(300, 200, 256), (384, 256));
        assert_eq!(shorter_side_dims(64, 64, 256), (256, 256));
    }
}
