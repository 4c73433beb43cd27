use std::collections::VecDeque;

use crate::imagecore::Plane;
use crate::kv::KvMap;
use crate::{Error, Result};

/// Magnitudes closer than this are treated as equal during non-maximum
/// suppression, which keeps the edge maps stable under tiny rounding
/// differences (e.g. after a global brightness shift).
const TIE_TOLERANCE: f64 = 1e-9;

/// Canny thresholds apply to the unnormalized 3x3 Sobel magnitude of a
/// `[0, 1]` image (the convention of common library implementations).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CannyParams {
    pub sigma: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("canny sigma", format!("{} must be positive", self.sigma)));
        }
        if !(self.low > 0.0 && self.low < self.high) {
            return Err(Error::param(
                "canny thresholds",
                format!("need 0 < low < high, got low={} high={}", self.low, self.high),
            ));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, kv: &KvMap) -> Result<()> {
        if let Some(v) = kv.get_f64("canny_sigma")? {
            self.sigma = v;
        }
        if let Some(v) = kv.get_f64("canny_low")? {
            self.low = v;
        }
        if let Some(v) = kv.get_f64("canny_high")? {
            self.high = v;
        }
        self.validate()
    }
}

/// Binary edge indicator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub edges: Vec<bool>,
}

impl EdgeMap {
    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn at(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    /// Edges as a `{0, 1}` plane.
    pub fn to_plane(&self) -> Plane {
        Plane::new(
            self.width,
            self.height,
            self.edges.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect(),
        )
        .expect("edge map dims are valid")
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn smooth(p: &Plane, sigma: f64) -> Vec<f64> {
    let (w, h) = p.dims();
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let src = p.data();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, c)| c * src[y * w + clamp_idx(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, c)| c * tmp[clamp_idx(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Gaussian smoothing, Sobel gradients, non-maximum suppression along the
/// quantized gradient direction and double-threshold hysteresis with
/// 8-connectivity.
pub fn canny(l: &Plane, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    let (w, h) = l.dims();
    let s = smooth(l, params.sigma);
    let at = |x: isize, y: isize| s[clamp_idx(y, h) * w + clamp_idx(x, w)];

    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            // Direction bins: 0 = horizontal gradient, 1 = 45°, 2 = vertical, 3 = 135°.
            let mut angle = gy.atan2(gx).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            dir[i] = if !(22.5..157.5).contains(&angle) {
                0
            } else if angle < 67.5 {
                1
            } else if angle < 112.5 {
                2
            } else {
                3
            };
        }
    }

    let m = |x: isize, y: isize| -> f64 {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut thin = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v < params.low {
                continue;
            }
            let (before, after) = match dir[i] {
                0 => (m(x - 1, y), m(x + 1, y)),
                1 => (m(x - 1, y - 1), m(x + 1, y + 1)),
                2 => (m(x, y - 1), m(x, y + 1)),
                _ => (m(x + 1, y - 1), m(x - 1, y + 1)),
            };
            // Strict on one side only, so two-pixel plateaus yield one pixel.
            if v > before + TIE_TOLERANCE && v >= after - TIE_TOLERANCE {
                thin[i] = v;
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut queue: VecDeque<usize> = thin
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= params.high)
        .map(|(i, _)| i)
        .collect();
    for &i in &queue {
        edges[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= params.low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(EdgeMap {
        width: w,
        height: h,
        edges,
    })
}
