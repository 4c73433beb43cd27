use crate::imagecore::{ensure_same_dims, rgb_to_luma, Image, Plane};
use crate::{Error, Result};

/// Windowed SSIM settings. Defaults: 11x11 Gaussian window with sigma 1.5,
/// `K1 = 0.01`, `K2 = 0.03`, dynamic range 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output has `(w - k + 1) x (h - k + 1)` samples.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, c)| c * data[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, c)| c * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over all windows that lie fully inside the planes.
pub fn ssim_planes(a: &Plane, b: &Plane, params: &SsimParams) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < params.window || h < params.window {
        return Err(Error::InvalidDimensions {
            width: w,
            height: h,
            reason: "image is smaller than the SSIM window",
        });
    }
    let k = gaussian_window(params.window, params.sigma);
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let ad = a.data();
    let bd = b.data();
    let aa: Vec<f64> = ad.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = bd.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = ad.iter().zip(bd).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(ad, w, h, &k);
    let mu_b = filter_valid(bd, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    Ok(total / n as f64)
}

/// SSIM on the BT.601 luminance of two images.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_planes(&rgb_to_luma(a), &rgb_to_luma(b), &SsimParams::default())
}
