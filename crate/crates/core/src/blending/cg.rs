use super::ChannelSystem;
use crate::imagecore::Plane;

pub(super) struct CgOutcome {
    pub x: Plane,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(super) fn relative_residual(sys: &ChannelSystem, x: &Plane) -> f64 {
    let ax = sys.apply(x);
    let r: Vec<f64> = sys.rhs.data().iter().zip(ax.data()).map(|(b, a)| b - a).collect();
    let bnorm = dot(sys.rhs.data(), sys.rhs.data()).sqrt();
    dot(&r, &r).sqrt() / bnorm.max(f64::MIN_POSITIVE)
}

/// Matrix-free conjugate gradients from `init`. The energy (the A-norm of the
/// error) decreases monotonically, so the last iterate is also the best one.
/// Restarts from the current iterate when the recursively updated residual
/// has drifted below `tol` but the true residual has not.
pub(super) fn solve(sys: &ChannelSystem, init: &Plane, tol: f64, max_iter: usize) -> CgOutcome {
    let (w, h) = init.dims();
    let bnorm = dot(sys.rhs.data(), sys.rhs.data()).sqrt().max(f64::MIN_POSITIVE);
    let mut x = init.clone();
    let mut iterations = 0;
    loop {
        let relative = relative_residual(sys, &x);
        if relative <= tol || iterations >= max_iter {
            return CgOutcome {
                converged: relative <= tol,
                relative_residual: relative,
                x,
            };
        }
        let mut xs = x.data().to_vec();
        let ax = sys.apply(&x);
        let mut r: Vec<f64> = sys.rhs.data().iter().zip(ax.data()).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        while rr.sqrt() / bnorm > tol && iterations < max_iter {
            let p_plane = Plane::new(w, h, p.clone()).expect("finite search direction");
            let ap = sys.apply(&p_plane);
            let pap = dot(&p, ap.data());
            if pap <= 0.0 {
                break;
            }
            let alpha = rr / pap;
            for ((xi, ri), (pi, api)) in xs.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(ap.data())) {
                *xi += alpha * pi;
                *ri -= alpha * api;
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
            rr = rr_next;
            iterations += 1;
        }
        let stalled = rr == 0.0 || iterations >= max_iter;
        x = Plane::new(w, h, xs).expect("finite CG iterate");
        if stalled {
            let relative = relative_residual(sys, &x);
            return CgOutcome {
                converged: relative <= tol,
                relative_residual: relative,
                x,
            };
        }
        // One extra iteration guards against an endless restart loop when
        // the true residual cannot reach `tol` in floating point.
        iterations += 1;
    }
}
