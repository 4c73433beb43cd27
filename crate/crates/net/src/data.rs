//! Training batches, augmentation and the synthetic two-domain corpus.

use archstyle_core::imagecore::resize_bilinear;
use archstyle_core::{Image, Mask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::images_to_tensor;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Resize so the shorter side is `size * 286 / 256`, random `size x size`
/// crop, random horizontal flip.
pub fn augment(img: &Image, size: usize, rng: &mut impl Rng) -> Result<Image> {
    let load = (size * 286 + 128) / 256;
    let (w, h) = img.dims();
    let (rw, rh) = if w <= h {
        (load, ((h * load) as f64 / w as f64).round() as usize)
    } else {
        (((w * load) as f64 / h as f64).round() as usize, load)
    };
    let resized = resize_bilinear(img, rw, rh)?;
    let x0 = rng.random_range(0..=rw - size);
    let y0 = rng.random_range(0..=rh - size);
    let crop = resized.crop(x0, y0, size, size)?;
    Ok(if rng.random_bool(0.5) {
        crop.flip_horizontal()
    } else {
        crop
    })
}

/// `count` augmented images drawn with replacement.
pub fn sample_batch(images: &[Image], count: usize, size: usize, rng: &mut impl Rng) -> Result<Tensor> {
    if images.is_empty() {
        return Err(Error::shape("cannot sample from an empty corpus"));
    }
    let picked = (0..count)
        .map(|_| augment(&images[rng.random_range(0..images.len())], size, rng))
        .collect::<Result<Vec<_>>>()?;
    images_to_tensor(&picked.iter().collect::<Vec<_>>())
}

/// Synthetic corpus. Domain 1: bright squares on a dark, cool background.
/// Domain 2: dark squares on a bright, warm background. Masks mark the
/// squares.
pub fn toy_corpus(domain: usize, count: usize, size: usize, seed: u64) -> Result<Vec<(Image, Mask)>> {
    if domain != 1 && domain != 2 {
        return Err(Error::config("domain", format!("{domain} is not 1 or 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    (0..count)
        .map(|_| {
            let gain: f64 = rng.random_range(0.9..1.1);
            let (bg, fg) = if domain == 1 {
                ([0.10, 0.12, 0.18], [0.85, 0.85, 0.82])
            } else {
                ([0.95, 0.78, 0.52], [0.32, 0.20, 0.12])
            };
            let squares: Vec<(usize, usize, usize)> = (0..rng.random_range(1..=2))
                .map(|_| {
                    let s = rng.random_range(size / 4..=size / 2);
                    (rng.random_range(0..=size - s), rng.random_range(0..=size - s), s)
                })
                .collect();
            let inside = |x: usize, y: usize| {
                squares
                    .iter()
                    .any(|&(sx, sy, s)| x >= sx && x < sx + s && y >= sy && y < sy + s)
            };
            let mut noise = || rng.random_range(-0.02..0.02);
            let img = Image::from_fn(size, size, |x, y| {
                let base = if inside(x, y) { fg } else { bg };
                let n = noise();
                base.map(|v: f64| (v * gain + n).clamp(0.0, 1.0))
            })?;
            let mask = Mask::from_fn(size, size, |x, y| if inside(x, y) { 1.0 } else { 0.0 })?;
            Ok((img, mask))
        })
        .collect()
}

/// Mean BT.601 luminance over a set of images.
pub fn mean_luminance<'a>(images: impl IntoIterator<Item = &'a Image>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for img in images {
        s += archstyle_core::imagecore::rgb_to_luma(img).mean();
        n += 1;
    }
    s / n.max(1) as f64
}
