//! Image-quality and classification metrics for evaluating translations.

mod canny;
mod corpus;
mod probtable;
mod scores;
mod ssim;

pub use canny::{canny, CannyParams, EdgeMap};
pub use corpus::{eval_corpus, eval_pair, shorter_side_dims, EvalReport, EvalRow, REPORT_COLUMNS};
pub use probtable::{ProbRow, ProbTable};
pub use scores::{argmax, inception_score, iou, top1_accuracy};
pub use ssim::{ssim, ssim_planes, SsimParams};

use crate::imagecore::{ensure_same_dims, rgb_to_luma, Image};
use crate::kv::KvMap;
use crate::{Error, Result};

/// Everything that changes metric values; echoed into every report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricParams {
    pub canny: CannyParams,
    pub ssim: SsimParams,
    pub inception_splits: usize,
    /// Shorter image side after resizing for evaluation.
    pub eval_size: usize,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            canny: CannyParams::default(),
            ssim: SsimParams::default(),
            inception_splits: 1,
            eval_size: 256,
        }
    }
}

impl MetricParams {
    pub fn validate(&self) -> Result<()> {
        self.canny.validate()?;
        if self.inception_splits == 0 {
            return Err(Error::param("inception_splits", "must be at least 1"));
        }
        if self.eval_size < self.ssim.window {
            return Err(Error::param(
                "eval_size",
                format!(
                    "{} is smaller than the SSIM window {}",
                    self.eval_size, self.ssim.window
                ),
            ));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, kv: &KvMap) -> Result<()> {
        self.canny.apply_overrides(kv)?;
        if let Some(v) = kv.get_usize("inception_splits")? {
            self.inception_splits = v;
        }
        if let Some(v) = kv.get_usize("eval_size")? {
            self.eval_size = v;
        }
        self.validate()
    }

    pub fn describe(&self) -> String {
        format!(
            "canny_sigma={} canny_low={} canny_high={} ssim_window={} ssim_sigma={} ssim_k1={} ssim_k2={} inception_splits={} eval_size={}",
            self.canny.sigma,
            self.canny.low,
            self.canny.high,
            self.ssim.window,
            self.ssim.sigma,
            self.ssim.k1,
            self.ssim.k2,
            self.inception_splits,
            self.eval_size
        )
    }
}

/// SSIM between the Canny edge maps of the two luminance images.
pub fn edge_ssim(a: &Image, b: &Image, canny_params: &CannyParams, ssim_params: &SsimParams) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let ea = canny(&rgb_to_luma(a), canny_params)?;
    let eb = canny(&rgb_to_luma(b), canny_params)?;
    ssim_planes(&ea.to_plane(), &eb.to_plane(), ssim_params)
}

/// Peak signal-to-noise ratio in dB for unit-range images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.data().len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            let building = (8..24).contains(&x) && y >= 10;
            let v = if building { 0.55 } else { 0.15 + 0.004 * y as f64 };
            [v, v * 0.95, v * 0.9]
        })
        .unwrap()
    }

    #[test]
    fn edge_ssim_identity_and_brightness() {
        let p = (CannyParams::default(), SsimParams::default());
        let x = fixture(32, 32);
        assert_eq!(edge_ssim(&x, &x, &p.0, &p.1).unwrap(), 1.0);
        let mut brighter = x.clone();
        brighter.data_mut().iter_mut().for_each(|v| *v += 0.2);
        assert!(brighter.is_unit_range());
        assert_eq!(edge_ssim(&x, &brighter, &p.0, &p.1).unwrap(), 1.0);
    }

    #[test]
    fn edge_ssim_drops_for_blurred_copy() {
        let x = fixture(32, 32);
        let planes = x.planes().map(|c| {
            let mut b = c;
            for _ in 0..4 {
                b = crate::imagecore::binomial_blur(&b);
            }
            b
        });
        let blurred = Image::from_planes(&planes).unwrap();
        let (c, s) = (CannyParams::default(), SsimParams::default());
        let v = edge_ssim(&x, &blurred, &c, &s).unwrap();
        assert!(v < 1.0, "{v}");
        assert!((v - edge_ssim(&blurred, &x, &c, &s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_of_identical_is_infinite() {
        let x = fixture(8, 8);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn describe_lists_canny_defaults() {
        let d = MetricParams::default().describe();
        assert!(d.contains("canny_sigma=1.4") && d.contains("canny_low=0.1") && d.contains("canny_high=0.2"));
    }
}
