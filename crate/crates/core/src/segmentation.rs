//! Foreground/background handling. Masks come from an external segmenter (or
//! the user); this module validates them and splits images into the two
//! translation branches.

use std::path::Path;
use std::str::FromStr;

use crate::imagecore::{alpha_composite, ensure_same_dims, load_gray_png, Image, Mask};
use crate::{Error, Result};

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;

/// What the branch images contain outside their own region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FillPolicy {
    Zero,
    /// Mean colour of the region itself.
    #[default]
    RegionMean,
}

impl FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(FillPolicy::Zero),
            "mean" | "region-mean" => Ok(FillPolicy::RegionMean),
            other => Err(Error::param(
                "fill",
                format!("unknown fill policy `{other}` (zero|mean)"),
            )),
        }
    }
}

/// The two branch inputs plus the mask that separates them.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionPair {
    pub foreground: Image,
    pub background: Image,
    pub mask: Mask,
    /// Mean fill was requested but the foreground region was empty.
    pub foreground_fill_fallback: bool,
    /// Mean fill was requested but the background region was empty.
    pub background_fill_fallback: bool,
}

impl RegionPair {
    pub fn foreground_pixels(&self) -> usize {
        self.mask.alpha().iter().filter(|&&a| a == 1.0).count()
    }

    pub fn background_pixels(&self) -> usize {
        self.mask.alpha().iter().filter(|&&a| a == 0.0).count()
    }
}

/// Loads an 8-bit grayscale mask and binarizes it: foreground where
/// `pixel / 255 >= threshold`.
pub fn load_mask(path: impl AsRef<Path>, threshold: f64) -> Result<Mask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param("threshold", format!("{threshold} is outside (0, 1)")));
    }
    let gray = load_gray_png(path)?;
    let alpha = gray
        .pixels
        .iter()
        .map(|&p| if p as f64 / 255.0 >= threshold { 1.0 } else { 0.0 })
        .collect();
    Mask::new(gray.width, gray.height, alpha)
}

/// Weighted mean colour over a region; `None` when the region has zero weight.
fn region_mean(x: &Image, weights: impl Iterator<Item = f64>) -> Option<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut total = 0.0;
    for (px, w) in x.data().chunks_exact(3).zip(weights) {
        for c in 0..3 {
            acc[c] += w * px[c];
        }
        total += w;
    }
    (total > 0.0).then(|| acc.map(|a| a / total))
}

/// Splits `x` into foreground and background branch images.
///
/// `foreground = m*x + (1-m)*fill_fg` and `background = (1-m)*x + m*fill_bg`.
/// An empty region under mean fill falls back to zero fill and is flagged.
pub fn split_regions(x: &Image, m: &Mask, fill: FillPolicy) -> Result<RegionPair> {
    ensure_same_dims(x.dims(), m.dims())?;
    let (fill_fg, fg_fallback) = match fill {
        FillPolicy::Zero => ([0.0; 3], false),
        FillPolicy::RegionMean => match region_mean(x, m.alpha().iter().copied()) {
            Some(c) => (c, false),
            None => ([0.0; 3], true),
        },
    };
    let (fill_bg, bg_fallback) = match fill {
        FillPolicy::Zero => ([0.0; 3], false),
        FillPolicy::RegionMean => match region_mean(x, m.alpha().iter().map(|a| 1.0 - a)) {
            Some(c) => (c, false),
            None => ([0.0; 3], true),
        },
    };
    let mut fg = Vec::with_capacity(x.data().len());
    let mut bg = Vec::with_capacity(x.data().len());
    for (px, &a) in x.data().chunks_exact(3).zip(m.alpha()) {
        for c in 0..3 {
            fg.push(a * px[c] + (1.0 - a) * fill_fg[c]);
            bg.push((1.0 - a) * px[c] + a * fill_bg[c]);
        }
    }
    Ok(RegionPair {
        foreground: Image::new(x.width(), x.height(), fg)?,
        background: Image::new(x.width(), x.height(), bg)?,
        mask: m.clone(),
        foreground_fill_fallback: fg_fallback,
        background_fill_fallback: bg_fallback,
    })
}

/// Alpha-composites the branch images back together with the stored mask.
pub fn merge_regions(rp: &RegionPair) -> Result<Image> {
    alpha_composite(&rp.foreground, &rp.background, &rp.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::{save_gray_png, Plane};

    fn write_gray(dir: &Path, name: &str, w: usize, h: usize, value: u8) -> std::path::PathBuf {
        let path = dir.join(name);
        let p = Plane::filled(w, h, value as f64 / 255.0).unwrap();
        save_gray_png(&p, &path).unwrap();
        path
    }

    #[test]
    fn load_mask_thresholds() {
        let dir = tempfile::tempdir().unwrap();
        let ones = load_mask(write_gray(dir.path(), "a.png", 4, 3, 255), 0.5).unwrap();
        assert!(ones.alpha().iter().all(|&a| a == 1.0));
        let zeros = load_mask(write_gray(dir.path(), "b.png", 4, 3, 0), 0.5).unwrap();
        assert!(zeros.alpha().iter().all(|&a| a == 0.0));
        let mid = load_mask(write_gray(dir.path(), "c.png", 2, 2, 128), 0.5).unwrap();
        assert!(mid.alpha().iter().all(|&a| a == 1.0));
        let below = load_mask(write_gray(dir.path(), "d.png", 2, 2, 127), 0.5).unwrap();
        assert!(below.alpha().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn load_mask_rejects_bad_threshold_and_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_gray(dir.path(), "a.png", 2, 2, 255);
        assert!(load_mask(&p, 0.0).is_err());
        assert!(load_mask(&p, 1.0).is_err());
        let rgb = dir.path().join("rgb.png");
        crate::imagecore::save_png(&Image::filled(2, 2, [1.0; 3]).unwrap(), &rgb).unwrap();
        assert!(matches!(load_mask(&rgb, 0.5), Err(Error::UnsupportedFormat { .. })));
    }

    fn gradient_image(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| [x as f64 / w as f64, y as f64 / h as f64, 0.5]).unwrap()
    }

    #[test]
    fn full_mask_sends_everything_to_foreground() {
        let x = gradient_image(6, 4);
        let m = Mask::filled(6, 4, 1.0).unwrap();
        let rp = split_regions(&x, &m, FillPolicy::Zero).unwrap();
        assert_eq!(rp.foreground, x);
        assert!(rp.background.data().iter().all(|&v| v == 0.0));
        let rp = split_regions(&x, &m, FillPolicy::RegionMean).unwrap();
        assert!(rp.background_fill_fallback);
        assert!(!rp.foreground_fill_fallback);
    }

    #[test]
    fn empty_mask_sends_everything_to_background() {
        let x = gradient_image(6, 4);
        let m = Mask::filled(6, 4, 0.0).unwrap();
        let rp = split_regions(&x, &m, FillPolicy::RegionMean).unwrap();
        assert_eq!(rp.background, x);
        assert!(rp.foreground_fill_fallback);
        assert!(rp.foreground.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkerboard_zero_fill_counts() {
        let x = Image::filled(8, 8, [0.4, 0.5, 0.6]).unwrap();
        let m = Mask::from_fn(8, 8, |i, j| ((i + j) % 2) as f64).unwrap();
        let rp = split_regions(&x, &m, FillPolicy::Zero).unwrap();
        let zero_px = rp
            .foreground
            .data()
            .chunks(3)
            .filter(|p| p.iter().all(|&v| v == 0.0))
            .count();
        assert_eq!(zero_px, 32);
        for j in 0..8 {
            for i in 0..8 {
                let is_zero = rp.foreground.pixel(i, j) == [0.0; 3];
                assert_eq!(is_zero, m.at(i, j) == 0.0);
            }
        }
        assert_eq!(rp.foreground_pixels() + rp.background_pixels(), 64);
    }

    #[test]
    fn mean_fill_uses_region_colour() {
        let x = Image::from_fn(2, 1, |i, _| if i == 0 { [0.2, 0.4, 0.6] } else { [1.0, 1.0, 1.0] }).unwrap();
        let m = Mask::new(2, 1, vec![1.0, 0.0]).unwrap();
        let rp = split_regions(&x, &m, FillPolicy::RegionMean).unwrap();
        assert_eq!(rp.foreground.pixel(1, 0), [0.2, 0.4, 0.6]);
        assert_eq!(rp.background.pixel(0, 0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn split_then_merge_returns_input() {
        let x = gradient_image(16, 16);
        let m = Mask::from_fn(16, 16, |i, j| if (i * 7 + j * 3) % 5 < 2 { 1.0 } else { 0.0 }).unwrap();
        for fill in [FillPolicy::Zero, FillPolicy::RegionMean] {
            let merged = merge_regions(&split_regions(&x, &m, fill).unwrap()).unwrap();
            assert_eq!(merged, x);
        }
        let all = split_regions(&x, &Mask::filled(16, 16, 1.0).unwrap(), FillPolicy::Zero).unwrap();
        assert_eq!(merge_regions(&all).unwrap(), all.foreground);
    }

    #[test]
    fn fill_policy_parses() {
        assert_eq!("zero".parse::<FillPolicy>().unwrap(), FillPolicy::Zero);
        assert_eq!("mean".parse::<FillPolicy>().unwrap(), FillPolicy::RegionMean);
        assert!("blue".parse::<FillPolicy>().is_err());
    }
}
