//! Pixel containers and the low-level image operators shared by every stage
//! of the pipeline: luminance, forward-difference gradients and their adjoint,
//! alpha compositing, resizing, pyramids and PNG I/O.

mod io;
mod pyramid;

pub use io::{load_gray_png, load_png, save_gray_png, save_png, GrayPng};
pub use pyramid::{binomial_blur, pyramid_down, pyramid_up, resize_bilinear, resize_plane_bilinear, BINOMIAL_KERNEL};

use crate::{Error, Result};

/// ITU-R BT.601 luma weights for R, G and B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidDimensions {
            width,
            height,
            reason: "width and height must be at least 1",
        });
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// An RGB image with interleaved, row-major `f64` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image data".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Builds an image from three equally sized planes.
    pub fn from_planes(planes: &[Plane; 3]) -> Result<Self> {
        let dims = planes[0].dims();
        for p in &planes[1..] {
            ensure_same_dims(dims, p.dims())?;
        }
        let n = dims.0 * dims.1;
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.extend(planes.iter().map(|p| p.data[i]));
        }
        Self::new(dims.0, dims.1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn channel(&self, c: usize) -> Plane {
        assert!(c < 3, "channel index out of range");
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn planes(&self) -> [Plane; 3] {
        [self.channel(0), self.channel(1), self.channel(2)]
    }

    /// Per-channel mean.
    pub fn mean_rgb(&self) -> [f64; 3] {
        let mut acc = [0.0; 3];
        for px in self.data.chunks_exact(3) {
            for c in 0..3 {
                acc[c] += px[c];
            }
        }
        let n = self.pixel_count() as f64;
        acc.map(|a| a / n)
    }

    /// Clamps every sample into `[0, 1]`.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    pub fn is_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Mirrors the image left to right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(x, y, self.pixel(self.width - 1 - x, y));
            }
        }
        out
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidDimensions {
                width: w,
                height: h,
                reason: "crop window exceeds image bounds",
            });
        }
        Self::from_fn(w, h, |x, y| self.pixel(x0 + x, y0 + y))
    }
}

/// A single-channel, row-major `f64` map.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

/// Luminance plane computed with [`rgb_to_luma`].
pub type Luma = Plane;

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plane data".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Soft or binary foreground matte: 1 marks foreground (buildings), 0 marks
/// background (sky).
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    alpha: Vec<f64>,
}

impl Mask {
    pub fn new(width: usize, height: usize, alpha: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if alpha.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                found: alpha.len(),
            });
        }
        if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::param("mask", "alpha values must lie in [0, 1]"));
        }
        Ok(Self { width, height, alpha })
    }

    pub fn filled(width: usize, height: usize, alpha: f64) -> Result<Self> {
        Self::new(width, height, vec![alpha; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut alpha = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                alpha.push(f(x, y));
            }
        }
        Self::new(width, height, alpha)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.width + x]
    }

    /// 1 where `alpha >= threshold`, else 0.
    pub fn binarized(&self, threshold: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            alpha: self
                .alpha
                .iter()
                .map(|&a| if a >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn is_binary(&self) -> bool {
        self.alpha.iter().all(|&a| a == 0.0 || a == 1.0)
    }

    /// Number of pixels with `alpha >= 0.5`.
    pub fn foreground_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a >= 0.5).count()
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            alpha: self.alpha.iter().map(|a| 1.0 - a).collect(),
        }
    }

    pub fn as_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.alpha.clone(),
        }
    }

    /// Nearest-neighbour resize, keeping binary masks binary.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.at(src_x, src_y)
        })
    }
}

/// Forward differences of a single-channel map.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn dot(&self, other: &GradientField) -> f64 {
        let dx: f64 = self.gx.iter().zip(&other.gx).map(|(a, b)| a * b).sum();
        let dy: f64 = self.gy.iter().zip(&other.gy).map(|(a, b)| a * b).sum();
        dx + dy
    }
}

/// BT.601 luminance of every pixel.
pub fn rgb_to_luma(img: &Image) -> Luma {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    Plane {
        width: img.width,
        height: img.height,
        data: img
            .data
            .chunks_exact(3)
            .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
            .collect(),
    }
}

/// Forward differences with a replicate boundary, so the last column of `gx`
/// and the last row of `gy` are zero.
pub fn spatial_gradient(l: &Plane) -> GradientField {
    let (w, h) = l.dims();
    let mut g = GradientField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                g.gx[i] = l.data[i + 1] - l.data[i];
            }
            if y + 1 < h {
                g.gy[i] = l.data[i + w] - l.data[i];
            }
        }
    }
    g
}

/// Discrete divergence, the negative adjoint of [`spatial_gradient`]:
/// `<grad x, v> = -<x, div v>` for every `x` and `v`.
pub fn divergence(v: &GradientField) -> Plane {
    let (w, h) = v.dims();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let mut d = 0.0;
            if x + 1 < w {
                d += v.gx[i];
            }
            if x > 0 {
                d -= v.gx[i - 1];
            }
            if y + 1 < h {
                d += v.gy[i];
            }
            if y > 0 {
                d -= v.gy[i - w];
            }
            out[i] = d;
        }
    }
    Plane {
        width: w,
        height: h,
        data: out,
    }
}

/// `m * fg + (1 - m) * bg`, per pixel and channel.
pub fn alpha_composite(fg: &Image, bg: &Image, m: &Mask) -> Result<Image> {
    ensure_same_dims(fg.dims(), bg.dims())?;
    ensure_same_dims(fg.dims(), m.dims())?;
    let mut data = Vec::with_capacity(fg.data.len());
    for (i, &a) in m.alpha.iter().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            data.push(a * fg.data[k] + (1.0 - a) * bg.data[k]);
        }
    }
    Image::new(fg.width, fg.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_of_white_is_one() {
        let img = Image::filled(3, 2, [1.0, 1.0, 1.0]).unwrap();
        for v in rgb_to_luma(&img).data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn luma_of_red_and_mixed_pixels() {
        let img = Image::new(2, 1, vec![1.0, 0.0, 0.0, 0.2, 0.4, 0.6]).unwrap();
        let l = rgb_to_luma(&img);
        assert!((l.at(0, 0) - 0.299).abs() < 1e-15);
        assert!((l.at(1, 0) - 0.3630).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let l = Plane::filled(5, 4, 0.37).unwrap();
        let g = spatial_gradient(&l);
        assert!(g.gx.iter().chain(&g.gy).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_single_difference() {
        let l = Plane::new(2, 1, vec![0.0, 1.0]).unwrap();
        let g = spatial_gradient(&l);
        assert_eq!(g.gx, vec![1.0, 0.0]);
        assert_eq!(g.gy, vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_two_by_two() {
        // rows: [0, 0.5], [1, 1]
        let l = Plane::new(2, 2, vec![0.0, 0.5, 1.0, 1.0]).unwrap();
        let g = spatial_gradient(&l);
        assert_eq!(g.gx, vec![0.5, 0.0, 0.0, 0.0]);
        assert_eq!(g.gy, vec![1.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        let (w, h) = (7, 5);
        let x = Plane::from_fn(w, h, |i, j| ((i * 31 + j * 17) % 13) as f64 / 13.0).unwrap();
        let mut v = GradientField::zeros(w, h);
        for (k, (a, b)) in v.gx.iter_mut().zip(v.gy.iter_mut()).enumerate() {
            *a = ((k * 7) % 11) as f64 - 5.0;
            *b = ((k * 3) % 5) as f64 * 0.25;
        }
        let lhs = spatial_gradient(&x).dot(&v);
        let rhs = -x.dot(&divergence(&v));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn composite_extremes_and_quarter() {
        let fg = Image::filled(4, 3, [1.0; 3]).unwrap();
        let bg = Image::filled(4, 3, [0.0; 3]).unwrap();
        let ones = Mask::filled(4, 3, 1.0).unwrap();
        let zeros = Mask::filled(4, 3, 0.0).unwrap();
        assert_eq!(alpha_composite(&fg, &bg, &ones).unwrap(), fg);
        assert_eq!(alpha_composite(&fg, &bg, &zeros).unwrap(), bg);
        let quarter = alpha_composite(&fg, &bg, &Mask::filled(4, 3, 0.25).unwrap()).unwrap();
        assert!(quarter.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn composite_rejects_mismatch() {
        let a = Image::filled(4, 3, [1.0; 3]).unwrap();
        let b = Image::filled(3, 3, [1.0; 3]).unwrap();
        let m = Mask::filled(4, 3, 1.0).unwrap();
        assert!(matches!(
            alpha_composite(&a, &b, &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn image_rejects_bad_construction() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 11]).is_err());
        assert!(Image::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(Mask::new(1, 1, vec![1.5]).is_err());
    }

    #[test]
    fn mask_binarize() {
        let m = Mask::new(3, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let b = m.binarized(0.5);
        assert_eq!(b.alpha(), &[0.0, 1.0, 1.0]);
        assert!(b.is_binary());
        assert!(!m.is_binary());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn image_strategy() -> impl Strategy<Value = Image> {
            (1usize..8, 1usize..8).prop_flat_map(|(w, h)| {
                proptest::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |d| Image::new(w, h, d).unwrap())
            })
        }

        proptest! {
            #[test]
            fn luma_is_linear(img in image_strategy(), a in 0.0f64..=1.0) {
                let scaled = Image::new(img.width(), img.height(), img.data().iter().map(|v| v * a).collect()).unwrap();
                let l = rgb_to_luma(&img);
                let ls = rgb_to_luma(&scaled);
                for (x, y) in l.data().iter().zip(ls.data()) {
                    prop_assert!((a * x - y).abs() < 1e-12);
                }
            }

            #[test]
            fn composite_of_identical_images_is_identity(img in image_strategy(), seed in any::<u64>()) {
                let (w, h) = img.dims();
                let mut s = seed;
                let m = Mask::from_fn(w, h, |_, _| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64
                }).unwrap();
                let out = alpha_composite(&img, &img, &m).unwrap();
                for (a, b) in out.data().iter().zip(img.data()) {
                    prop_assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }
}
