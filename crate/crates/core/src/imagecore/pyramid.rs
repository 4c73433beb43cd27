use super::{check_dims, Image, Plane};
use crate::{Error, Result};

/// Separable 5-tap binomial low-pass kernel.
pub const BINOMIAL_KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Half-sample symmetric extension: `... x1 x0 | x0 x1 ... x(n-1) | x(n-1) x(n-2) ...`.
///
/// A symmetric kernel applied under this extension is diagonalised by the
/// DCT-II, which the spectral blending solver relies on.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

// Both passes accumulate offsets from the centre sample, so constant
// regions come out bit-exact.
fn blur_rows(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &c) in BINOMIAL_KERNEL.iter().enumerate() {
                acc += c * (row[reflect_index(x as isize + k as isize - 2, w)] - row[x]);
            }
            out[y * w + x] = row[x] + acc;
        }
    }
    out
}

fn blur_cols(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let centre = &src[y * w..(y + 1) * w];
        for (k, &c) in BINOMIAL_KERNEL.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - 2, h);
            let src_row = &src[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for ((d, s), m) in dst_row.iter_mut().zip(src_row).zip(centre) {
                *d += c * (s - m);
            }
        }
        for (d, m) in out[y * w..(y + 1) * w].iter_mut().zip(centre) {
            *d += m;
        }
    }
    out
}

/// Separable binomial blur of one plane (the `g` operator of the blending
/// energy). The operator is symmetric: `<g x, y> = <x, g y>`.
pub fn binomial_blur(p: &Plane) -> Plane {
    let (w, h) = p.dims();
    let data = blur_cols(&blur_rows(p.data(), w, h), w, h);
    Plane {
        width: w,
        height: h,
        data,
    }
}

fn decimate(p: &Plane) -> Plane {
    let (w, h) = p.dims();
    let (ow, oh) = (w.div_ceil(2), h.div_ceil(2));
    let mut data = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            data.push(p.at(2 * x, 2 * y));
        }
    }
    Plane {
        width: ow,
        height: oh,
        data,
    }
}

/// Blur with the binomial kernel, then keep every second sample in both
/// directions. Output dims are `ceil(w/2) x ceil(h/2)`.
pub fn pyramid_down(img: &Image) -> Result<Image> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::InvalidDimensions {
            width: img.width(),
            height: img.height(),
            reason: "pyramid_down needs at least 2x2 pixels",
        });
    }
    let planes = img.planes().map(|p| decimate(&binomial_blur(&p)));
    Image::from_planes(&planes)
}

/// Bilinear resize to `target` (width, height).
pub fn pyramid_up(img: &Image, target: (usize, usize)) -> Result<Image> {
    resize_bilinear(img, target.0, target.1)
}

/// Bilinear resize with pixel-centre alignment and clamped borders.
pub fn resize_plane_bilinear(p: &Plane, width: usize, height: usize) -> Result<Plane> {
    check_dims(width, height)?;
    let (sw, sh) = p.dims();
    if (sw, sh) == (width, height) {
        return Ok(p.clone());
    }
    let xs = axis_taps(sw, width);
    let ys = axis_taps(sh, height);
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = p.at(x0, y0) * (1.0 - fx) + p.at(x1, y0) * fx;
            let bottom = p.at(x0, y1) * (1.0 - fx) + p.at(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Plane::new(width, height, data)
}

fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "target dimensions must be positive",
        });
    }
    if img.dims() == (width, height) {
        return Ok(img.clone());
    }
    let planes = img.planes();
    let resized = [
        resize_plane_bilinear(&planes[0], width, height)?,
        resize_plane_bilinear(&planes[1], width, height)?,
        resize_plane_bilinear(&planes[2], width, height)?,
    ];
    Image::from_planes(&resized)
}
