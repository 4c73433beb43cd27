use std::f64::consts::PI;
use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

use crate::imagecore::Plane;

/// Direct solver for `(D'D + beta G G) x = b` with Neumann boundaries.
///
/// Both the forward-difference Laplacian and the binomial blur (under
/// half-sample symmetric extension) are diagonal in the 2-D DCT-II basis, so
/// the solve is a transform, a pointwise division and an inverse transform.
pub struct SpectralSolver {
    width: usize,
    height: usize,
    row_dct: Arc<dyn TransformType2And3<f64>>,
    col_dct: Arc<dyn TransformType2And3<f64>>,
    /// `1 / (lap_k + lap_l + beta (g_k g_l)^2)`, row-major by (l, k).
    inverse_eigen: Vec<f64>,
}

/// Eigenvalue of the 1-D forward-difference Laplacian for DCT mode `k`.
pub(crate) fn laplacian_eigen(k: usize, n: usize) -> f64 {
    2.0 - 2.0 * (PI * k as f64 / n as f64).cos()
}

/// Eigenvalue of the 1-D binomial blur for DCT mode `k`.
pub(crate) fn blur_eigen(k: usize, n: usize) -> f64 {
    let t = PI * k as f64 / n as f64;
    (6.0 + 8.0 * t.cos() + 2.0 * (2.0 * t).cos()) / 16.0
}

impl SpectralSolver {
    pub fn new(width: usize, height: usize, beta: f64) -> Self {
        let mut planner = DctPlanner::new();
        let row_dct = planner.plan_dct2(width);
        let col_dct = planner.plan_dct2(height);
        let mut inverse_eigen = Vec::with_capacity(width * height);
        for l in 0..height {
            for k in 0..width {
                let lap = laplacian_eigen(k, width) + laplacian_eigen(l, height);
                let g = blur_eigen(k, width) * blur_eigen(l, height);
                inverse_eigen.push(1.0 / (lap + beta * g * g));
            }
        }
        Self {
            width,
            height,
            row_dct,
            col_dct,
            inverse_eigen,
        }
    }

    fn transform(&self, data: &mut [f64], forward: bool) {
        let (w, h) = (self.width, self.height);
        for row in data.chunks_exact_mut(w) {
            if forward {
                self.row_dct.process_dct2(row);
            } else {
                self.row_dct.process_dct3(row);
            }
        }
        let mut column = vec![0.0; h];
        for x in 0..w {
            for y in 0..h {
                column[y] = data[y * w + x];
            }
            if forward {
                self.col_dct.process_dct2(&mut column);
            } else {
                self.col_dct.process_dct3(&mut column);
            }
            for y in 0..h {
                data[y * w + x] = column[y];
            }
        }
    }

    pub fn solve(&self, rhs: &Plane) -> Plane {
        assert_eq!(rhs.dims(), (self.width, self.height), "rhs dims must match the solver");
        let mut data = rhs.data().to_vec();
        self.transform(&mut data, true);
        for (d, inv) in data.iter_mut().zip(&self.inverse_eigen) {
            *d *= inv;
        }
        self.transform(&mut data, false);
        // DCT-III after DCT-II scales each axis by n / 2.
        let scale = 4.0 / (self.width * self.height) as f64;
        for d in &mut data {
            *d *= scale;
        }
        Plane::new(self.width, self.height, data).expect("finite spectral solution")
    }
}
