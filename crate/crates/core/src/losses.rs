//! Training objectives as scalar kernels with analytic gradients.
//!
//! Image losses take images in `[0, 1]` and return gradients with the same
//! interleaved RGB layout as [`Image::data`]. All reductions are means, so
//! the weights stay resolution-independent.

use std::fmt;

use crate::imagecore::{ensure_same_dims, rgb_to_luma, spatial_gradient, GradientField, Image, LUMA_WEIGHTS};
use crate::kv::KvMap;
use crate::{Error, Result};

/// Floor added to every luminance sample before it is normalized into a
/// spatial distribution.
pub const KL_EPSILON: f64 = 1e-6;

/// Loss value together with its gradient with respect to the first argument.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pushes a per-pixel luminance gradient back onto the RGB samples.
fn luma_grad_to_rgb(dl: &[f64]) -> Vec<f64> {
    dl.iter().flat_map(|&g| LUMA_WEIGHTS.map(|w| w * g)).collect()
}

/// L1 distance between the luminance gradients of `out` and `src`, averaged
/// over pixels (the x and y differences are summed per pixel).
pub fn gradient_loss(out: &Image, src: &Image) -> Result<f64> {
    Ok(gradient_loss_grad(out, src)?.value)
}

pub fn gradient_loss_grad(out: &Image, src: &Image) -> Result<ValueGrad> {
    ensure_same_dims(src.dims(), out.dims())?;
    let go = spatial_gradient(&rgb_to_luma(out));
    let gs = spatial_gradient(&rgb_to_luma(src));
    let n = out.pixel_count() as f64;
    let (w, h) = out.dims();
    let mut value = 0.0;
    let mut residual = GradientField::zeros(w, h);
    for i in 0..w * h {
        let dx = go.gx[i] - gs.gx[i];
        let dy = go.gy[i] - gs.gy[i];
        value += dx.abs() + dy.abs();
        residual.gx[i] = sign(dx) / n;
        residual.gy[i] = sign(dy) / n;
    }
    // d/dY of sum |grad Y - c| is the adjoint of the forward difference
    // applied to the sign field, i.e. minus its divergence.
    let div = crate::imagecore::divergence(&residual);
    let dl: Vec<f64> = div.data().iter().map(|d| -d).collect();
    Ok(ValueGrad {
        value: value / n,
        grad: luma_grad_to_rgb(&dl),
    })
}

/// `sum p log(p/q)` over two distributions of equal length.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

fn spatial_distribution(img: &Image) -> (Vec<f64>, f64) {
    let shifted: Vec<f64> = rgb_to_luma(img).data().iter().map(|y| y + KL_EPSILON).collect();
    let total: f64 = shifted.iter().sum();
    (shifted.iter().map(|v| v / total).collect(), total)
}

/// KL divergence between the spatial luminance distributions of `out` and
/// `style`. Each luminance map is floored by [`KL_EPSILON`] and normalized to
/// sum to one over the pixels.
pub fn luminance_kl_loss(out: &Image, style: &Image) -> Result<f64> {
    Ok(luminance_kl_loss_grad(out, style)?.value)
}

pub fn luminance_kl_loss_grad(out: &Image, style: &Image) -> Result<ValueGrad> {
    ensure_same_dims(style.dims(), out.dims())?;
    let (p, total) = spatial_distribution(out);
    let (q, _) = spatial_distribution(style);
    let log_ratio: Vec<f64> = p.iter().zip(&q).map(|(a, b)| (a / b).ln()).collect();
    let value: f64 = p.iter().zip(&log_ratio).map(|(a, l)| a * l).sum();
    // With p = a / S: dKL/da_i = (log(p_i/q_i) - KL) / S.
    let dl: Vec<f64> = log_ratio.iter().map(|l| (l - value) / total).collect();
    Ok(ValueGrad {
        value,
        grad: luma_grad_to_rgb(&dl),
    })
}

/// Mean absolute difference. Works on images and latent codes alike.
pub fn l1_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(l1_loss_grad(a, b)?.value)
}

/// Gradient is with respect to `a`; the gradient for `b` is its negation.
pub fn l1_loss_grad(a: &[f64], b: &[f64]) -> Result<ValueGrad> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("l1_loss on empty tensors".into()));
    }
    let n = a.len() as f64;
    let mut value = 0.0;
    let grad = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            value += d.abs();
            sign(d) / n
        })
        .collect();
    Ok(ValueGrad { value: value / n, grad })
}

/// Discriminator scores, one flattened score map per scale.
pub type ScaleScores = [Vec<f64>];

/// Gradients with respect to each scale's scores.
pub type ScoreGrads = Vec<Vec<f64>>;

fn check_scores(name: &str, s: &ScaleScores) -> Result<()> {
    if s.is_empty() || s.iter().any(|m| m.is_empty()) {
        return Err(Error::Empty(format!("{name}: empty score set")));
    }
    if s.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.into()));
    }
    Ok(())
}

/// Least-squares GAN loss value and per-scale score gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialGrad {
    pub value: f64,
    pub grads: ScoreGrads,
}

/// Mean over each scale of `0.5 * (s - target)^2`, averaged over scales.
fn lsgan_term(scores: &ScaleScores, target: f64) -> AdversarialGrad {
    let k = scores.len() as f64;
    let mut value = 0.0;
    let grads = scores
        .iter()
        .map(|map| {
            let n = map.len() as f64;
            map.iter()
                .map(|&s| {
                    let d = s - target;
                    value += 0.5 * d * d / (n * k);
                    d / (n * k)
                })
                .collect()
        })
        .collect();
    AdversarialGrad { value, grads }
}

/// `0.5 (D(real) - 1)^2 + 0.5 D(fake)^2`. Returns the gradients for the real
/// and fake scores separately.
pub fn lsgan_d_loss_grad(real: &ScaleScores, fake: &ScaleScores) -> Result<(f64, ScoreGrads, ScoreGrads)> {
    check_scores("real scores", real)?;
    check_scores("fake scores", fake)?;
    let r = lsgan_term(real, 1.0);
    let f = lsgan_term(fake, 0.0);
    Ok((r.value + f.value, r.grads, f.grads))
}

pub fn lsgan_d_loss(real: &ScaleScores, fake: &ScaleScores) -> Result<f64> {
    Ok(lsgan_d_loss_grad(real, fake)?.0)
}

/// `0.5 (D(fake) - 1)^2`.
pub fn lsgan_g_loss_grad(fake: &ScaleScores) -> Result<AdversarialGrad> {
    check_scores("fake scores", fake)?;
    Ok(lsgan_term(fake, 1.0))
}

pub fn lsgan_g_loss(fake: &ScaleScores) -> Result<f64> {
    Ok(lsgan_g_loss_grad(fake)?.value)
}

/// Names of the generator loss terms, in reporting order.
pub const TERM_NAMES: [&str; 8] = ["x", "c", "s", "z", "cycle", "adv", "gd", "kl"];

/// Weights of the generator objective.
///
/// `lambda_z` is also known as `lambda_cs` (domain-specific content
/// reconstruction) and `lambda_cycle` as `lambda_cc` (cross-cycle
/// consistency); the config parser accepts both spellings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_x: f64,
    pub lambda_c: f64,
    pub lambda_s: f64,
    pub lambda_z: f64,
    pub lambda_cycle: f64,
    pub lambda_adv: f64,
    pub lambda_gd: f64,
    pub lambda_kl: f64,
}

impl LossWeights {
    /// Foreground-branch defaults, geometry loss enabled.
    pub fn foreground() -> Self {
        Self {
            lambda_x: 10.0,
            lambda_c: 2.0,
            lambda_s: 10.0,
            lambda_z: 2.0,
            lambda_cycle: 5.0,
            lambda_adv: 1.0,
            lambda_gd: 5.0,
            lambda_kl: 5.0,
        }
    }

    /// Background-branch defaults: no geometry loss, so the generator is free
    /// to change sky texture.
    pub fn background() -> Self {
        Self {
            lambda_gd: 0.0,
            lambda_kl: 0.0,
            ..Self::foreground()
        }
    }

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.lambda_x,
            self.lambda_c,
            self.lambda_s,
            self.lambda_z,
            self.lambda_cycle,
            self.lambda_adv,
            self.lambda_gd,
            self.lambda_kl,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in TERM_NAMES.iter().zip(self.as_array()) {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::param(
                    "loss weight",
                    format!("lambda_{name} = {w} must be finite and >= 0"),
                ));
            }
        }
        Ok(())
    }

    /// Applies `lambda_*` overrides from a key=value map.
    pub fn apply_overrides(&mut self, kv: &KvMap) -> Result<()> {
        let slots: [(&[&str], &mut f64); 8] = [
            (&["lambda_x"], &mut self.lambda_x),
            (&["lambda_c"], &mut self.lambda_c),
            (&["lambda_s"], &mut self.lambda_s),
            (&["lambda_z", "lambda_cs"], &mut self.lambda_z),
            (&["lambda_cycle", "lambda_cc"], &mut self.lambda_cycle),
            (&["lambda_adv"], &mut self.lambda_adv),
            (&["lambda_gd"], &mut self.lambda_gd),
            (&["lambda_kl"], &mut self.lambda_kl),
        ];
        for (keys, slot) in slots {
            for key in keys {
                if let Some(v) = kv.get_f64(key)? {
                    *slot = v;
                }
            }
        }
        self.validate()
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::foreground()
    }
}

/// Unweighted loss terms, each already summed over both translation
/// directions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub x: f64,
    pub c: f64,
    pub s: f64,
    pub z: f64,
    pub cycle: f64,
    pub adv: f64,
    pub gd: f64,
    pub kl: f64,
}

impl LossTerms {
    pub fn as_array(&self) -> [f64; 8] {
        [self.x, self.c, self.s, self.z, self.cycle, self.adv, self.gd, self.kl]
    }

    /// Term-wise sum, e.g. of the two translation directions.
    pub fn sum(&self, other: &LossTerms) -> LossTerms {
        LossTerms {
            x: self.x + other.x,
            c: self.c + other.c,
            s: self.s + other.s,
            z: self.z + other.z,
            cycle: self.cycle + other.cycle,
            adv: self.adv + other.adv,
            gd: self.gd + other.gd,
            kl: self.kl + other.kl,
        }
    }
}

/// Terms, their weighted total and (when training) the discriminator loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    pub terms: LossTerms,
    pub total: f64,
    pub discriminator: Option<f64>,
}

impl fmt::Display for LossReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total={:.5}", self.total)?;
        for (name, v) in TERM_NAMES.iter().zip(self.terms.as_array()) {
            write!(f, " {name}={v:.5}")?;
        }
        if let Some(d) = self.discriminator {
            write!(f, " d={d:.5}")?;
        }
        Ok(())
    }
}

/// Weighted generator objective. Rejects non-finite terms by name.
pub fn total_generator_loss(terms: &LossTerms, w: &LossWeights) -> Result<LossReport> {
    w.validate()?;
    for (name, v) in TERM_NAMES.iter().zip(terms.as_array()) {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss term `{name}`")));
        }
    }
    let total = terms.as_array().iter().zip(w.as_array()).map(|(t, l)| t * l).sum();
    Ok(LossReport {
        terms: *terms,
        total,
        discriminator: None,
    })
}
