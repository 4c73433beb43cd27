//! Gaussian-Poisson blending.
//!
//! Fuses a translated image (the *style constraint*, low fidelity but with
//! the target look) with the original source (the *geometry constraint*) by
//! minimizing, per colour channel,
//!
//! ```text
//! E(x) = |grad x - v|^2 + beta * |g(x) - g(c_style)|^2
//! v    = m * grad c_geo + (1 - m) * grad c_style
//! ```
//!
//! where `g` is the binomial low-pass of [`crate::imagecore::binomial_blur`]
//! and `m` the foreground mask. The foreground thus takes its edges from the
//! source and the background keeps the translated texture, while low
//! frequencies follow the translated colours.
//!
//! The normal equations `(D'D + beta G G) x = D'v + beta G G c_style` are
//! solved coarse-to-fine over a pyramid with either a DCT-II diagonalization
//! (exact for the Neumann boundary used throughout) or matrix-free conjugate
//! gradients.

mod cg;
mod spectral;

use std::str::FromStr;

use crate::imagecore::{
    binomial_blur, divergence, ensure_same_dims, pyramid_down, resize_plane_bilinear, spatial_gradient, GradientField,
    Image, Mask, Plane,
};
use crate::kv::KvMap;
use crate::{Error, Result};

pub use spectral::SpectralSolver;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverKind {
    #[default]
    Spectral,
    ConjugateGradient,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" | "dct" => Ok(SolverKind::Spectral),
            "cg" | "conjugate-gradient" => Ok(SolverKind::ConjugateGradient),
            other => Err(Error::param(
                "solver",
                format!("unknown solver `{other}` (spectral|cg)"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendParams {
    /// Weight of the low-pass colour term.
    pub beta: f64,
    /// Full coarse-to-fine sweeps.
    pub iterations: usize,
    pub solver: SolverKind,
    /// Relative residual `|b - Ax| / |b|` at which CG stops.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Coarsest pyramid level keeps its shorter side at least this long.
    pub min_level_size: usize,
    pub max_levels: usize,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            iterations: 2,
            solver: SolverKind::Spectral,
            cg_tol: 1e-6,
            cg_max_iter: 500,
            min_level_size: 16,
            max_levels: 5,
        }
    }
}

impl BlendParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("{} must be positive", self.beta)));
        }
        if self.iterations == 0 {
            return Err(Error::param("iterations", "must be at least 1"));
        }
        if self.cg_tol.is_nan() || self.cg_tol <= 0.0 {
            return Err(Error::param("cg_tol", "must be positive"));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::param("cg_max_iter", "must be at least 1"));
        }
        if self.max_levels == 0 {
            return Err(Error::param("max_levels", "must be at least 1"));
        }
        Ok(())
    }

    pub fn apply_overrides(&mut self, kv: &KvMap) -> Result<()> {
        if let Some(v) = kv.get_f64("blend_beta")? {
            self.beta = v;
        }
        if let Some(v) = kv.get_usize("blend_iters")? {
            self.iterations = v;
        }
        if let Some(v) = kv.get("blend_solver") {
            self.solver = v.parse()?;
        }
        if let Some(v) = kv.get_f64("blend_cg_tol")? {
            self.cg_tol = v;
        }
        if let Some(v) = kv.get_usize("blend_cg_max_iter")? {
            self.cg_max_iter = v;
        }
        if let Some(v) = kv.get_usize("blend_max_levels")? {
            self.max_levels = v;
        }
        self.validate()
    }
}

/// A validated blending problem.
#[derive(Clone, Debug)]
pub struct BlendProblem {
    pub c_style: Image,
    pub c_geo: Image,
    pub mask: Mask,
    pub params: BlendParams,
}

impl BlendProblem {
    pub fn new(c_style: Image, c_geo: Image, mask: Mask, params: BlendParams) -> Result<Self> {
        ensure_same_dims(c_style.dims(), c_geo.dims())?;
        ensure_same_dims(c_style.dims(), mask.dims())?;
        params.validate()?;
        Ok(Self {
            c_style,
            c_geo,
            mask,
            params,
        })
    }

    /// Total energy of a candidate image, summed over channels.
    pub fn energy(&self, x: &Image) -> Result<f64> {
        ensure_same_dims(self.c_style.dims(), x.dims())?;
        let v = build_constraint_gradient(self)?;
        let style = self.c_style.planes();
        Ok(x.planes()
            .iter()
            .zip(&v)
            .zip(&style)
            .map(|((xc, vc), sc)| {
                let target = binomial_blur(sc);
                channel_energy(xc, vc, &target, self.params.beta)
            })
            .sum())
    }
}

/// Result of [`gp_solve`].
#[derive(Clone, Debug)]
pub struct BlendOutcome {
    /// Solution clamped into `[0, 1]`.
    pub image: Image,
    /// Every CG solve reached `cg_tol` (always true for the spectral solver).
    pub converged: bool,
    /// Largest final relative residual over channels at the finest level.
    pub residual: f64,
    /// Unclamped finest-level energy after each sweep.
    pub energy_history: Vec<f64>,
}

/// `v = m * grad(c_geo) + (1 - m) * grad(c_style)` for each channel.
pub fn build_constraint_gradient(p: &BlendProblem) -> Result<[GradientField; 3]> {
    ensure_same_dims(p.c_style.dims(), p.c_geo.dims())?;
    ensure_same_dims(p.c_style.dims(), p.mask.dims())?;
    let geo = p.c_geo.planes();
    let style = p.c_style.planes();
    Ok([0, 1, 2].map(|c| mix_gradients(&geo[c], &style[c], p.mask.alpha())))
}

fn mix_gradients(geo: &Plane, style: &Plane, alpha: &[f64]) -> GradientField {
    let gg = spatial_gradient(geo);
    let gs = spatial_gradient(style);
    let mut v = GradientField::zeros(geo.width(), geo.height());
    for (i, &m) in alpha.iter().enumerate() {
        v.gx[i] = m * gg.gx[i] + (1.0 - m) * gs.gx[i];
        v.gy[i] = m * gg.gy[i] + (1.0 - m) * gs.gy[i];
    }
    v
}

/// `|grad x - v|^2 + beta |g x - target|^2` where `target = g(c_style)`.
pub(crate) fn channel_energy(x: &Plane, v: &GradientField, target: &Plane, beta: f64) -> f64 {
    let gx = spatial_gradient(x);
    let grad_term: f64 = gx
        .gx
        .iter()
        .zip(&v.gx)
        .chain(gx.gy.iter().zip(&v.gy))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let color_term: f64 = binomial_blur(x)
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    grad_term + beta * color_term
}

/// One channel of one pyramid level.
struct ChannelSystem {
    v: GradientField,
    style: Plane,
    target: Plane,
    rhs: Plane,
    beta: f64,
}

impl ChannelSystem {
    fn new(geo: &Plane, style: &Plane, alpha: &[f64], beta: f64) -> Self {
        let v = mix_gradients(geo, style, alpha);
        let target = binomial_blur(style);
        let gg = binomial_blur(&target);
        let div = divergence(&v);
        let rhs_data = div.data().iter().zip(gg.data()).map(|(d, g)| -d + beta * g).collect();
        let rhs = Plane::new(style.width(), style.height(), rhs_data).expect("finite rhs");
        Self {
            v,
            style: style.clone(),
            target,
            rhs,
            beta,
        }
    }

    fn energy(&self, x: &Plane) -> f64 {
        channel_energy(x, &self.v, &self.target, self.beta)
    }

    /// `A x = -div(grad x) + beta g(g(x))`.
    fn apply(&self, x: &Plane) -> Plane {
        let lap = divergence(&spatial_gradient(x));
        let gg = binomial_blur(&binomial_blur(x));
        let data = lap
            .data()
            .iter()
            .zip(gg.data())
            .map(|(l, g)| -l + self.beta * g)
            .collect();
        Plane::new(x.width(), x.height(), data).expect("finite operator output")
    }
}

struct Level {
    style: Image,
    geo: Image,
    alpha: Vec<f64>,
}

fn build_levels(p: &BlendProblem) -> Result<Vec<Level>> {
    let mut levels = vec![Level {
        style: p.c_style.clone(),
        geo: p.c_geo.clone(),
        alpha: p.mask.alpha().to_vec(),
    }];
    while levels.len() < p.params.max_levels {
        let last = levels.last().expect("at least one level");
        let (w, h) = last.style.dims();
        if w.min(h) / 2 < p.params.min_level_size.max(2) {
            break;
        }
        let mask_img =
            Image::from_planes(&[0, 1, 2].map(|_| Plane::new(w, h, last.alpha.clone()).expect("valid alpha")))?;
        let alpha = pyramid_down(&mask_img)?
            .channel(0)
            .into_data()
            .into_iter()
            .map(|a| a.clamp(0.0, 1.0))
            .collect();
        let next = Level {
            style: pyramid_down(&last.style)?,
            geo: pyramid_down(&last.geo)?,
            alpha,
        };
        levels.push(next);
    }
    Ok(levels)
}

struct ChannelSolve {
    x: Plane,
    residual: f64,
    converged: bool,
}

fn solve_channel(
    sys: &ChannelSystem,
    init: &Plane,
    params: &BlendParams,
    spectral: Option<&SpectralSolver>,
) -> ChannelSolve {
    match (params.solver, spectral) {
        (SolverKind::Spectral, Some(s)) => {
            let x = s.solve(&sys.rhs);
            let residual = cg::relative_residual(sys, &x);
            ChannelSolve {
                x,
                residual,
                converged: true,
            }
        }
        _ => {
            let out = cg::solve(sys, init, params.cg_tol, params.cg_max_iter);
            ChannelSolve {
                x: out.x,
                residual: out.relative_residual,
                converged: out.converged,
            }
        }
    }
}

/// Minimizes the Gaussian-Poisson energy coarse-to-fine.
///
/// Each sweep visits every pyramid level from coarsest to finest. A level is
/// initialized with whichever of (a) the upsampled solution of the coarser
/// level and (b) the previous sweep's solution at this level has the lower
/// energy, so the finest-level energy never increases from sweep to sweep.
/// The result is clamped to `[0, 1]` once, after the last sweep.
pub fn gp_solve(p: &BlendProblem) -> Result<BlendOutcome> {
    p.params.validate()?;
    let levels = build_levels(p)?;
    let params = p.params;

    let per_channel: Vec<Result<ChannelResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..3)
            .map(|c| {
                let levels = &levels;
                scope.spawn(move || solve_channel_pyramid(levels, c, &params))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("channel solver panicked"))
            .collect()
    });

    let mut planes = Vec::with_capacity(3);
    let mut converged = true;
    let mut residual: f64 = 0.0;
    let mut history = vec![0.0; params.iterations];
    for res in per_channel {
        let (plane, r, ok, energies) = res?;
        planes.push(plane);
        converged &= ok;
        residual = residual.max(r);
        for (h, e) in history.iter_mut().zip(energies) {
            *h += e;
        }
    }
    let planes: [Plane; 3] = planes.try_into().expect("three channels");
    let image = Image::from_planes(&planes)?.clamped();
    Ok(BlendOutcome {
        image,
        converged,
        residual,
        energy_history: history,
    })
}

/// Solution, final relative residual, convergence flag and energy per sweep.
type ChannelResult = (Plane, f64, bool, Vec<f64>);

fn solve_channel_pyramid(levels: &[Level], c: usize, params: &BlendParams) -> Result<ChannelResult> {
    let systems: Vec<ChannelSystem> = levels
        .iter()
        .map(|l| ChannelSystem::new(&l.geo.channel(c), &l.style.channel(c), &l.alpha, params.beta))
        .collect();
    let spectral: Vec<Option<SpectralSolver>> = systems
        .iter()
        .map(|s| {
            (params.solver == SolverKind::Spectral)
                .then(|| SpectralSolver::new(s.rhs.width(), s.rhs.height(), params.beta))
        })
        .collect();

    let mut previous: Vec<Option<Plane>> = vec![None; systems.len()];
    let mut energies = Vec::with_capacity(params.iterations);
    let mut converged = true;
    let mut residual = 0.0;
    for _sweep in 0..params.iterations {
        let mut coarser: Option<Plane> = None;
        for lvl in (0..systems.len()).rev() {
            let sys = &systems[lvl];
            let (w, h) = sys.rhs.dims();
            let mut candidates: Vec<Plane> = Vec::new();
            if let Some(up) = &coarser {
                candidates.push(resize_plane_bilinear(up, w, h)?);
            }
            if let Some(prev) = &previous[lvl] {
                candidates.push(prev.clone());
            }
            if candidates.is_empty() {
                candidates.push(sys.style.clone());
            }
            let init = candidates
                .into_iter()
                .map(|x| (sys.energy(&x), x))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, x)| x)
                .expect("non-empty candidates");
            let solved = solve_channel(sys, &init, params, spectral[lvl].as_ref());
            if lvl == 0 {
                converged &= solved.converged;
                residual = solved.residual;
                energies.push(sys.energy(&solved.x));
            }
            previous[lvl] = Some(solved.x.clone());
            coarser = Some(solved.x);
        }
    }
    let finest = previous.swap_remove(0).expect("finest level solved");
    Ok((finest, residual, converged, energies))
}

/// Blends a translated image back onto its source: `c_style = translated`,
/// `c_geo = source`.
pub fn blend_pipeline(translated: &Image, source: &Image, mask: &Mask, params: &BlendParams) -> Result<BlendOutcome> {
    let problem = BlendProblem::new(translated.clone(), source.clone(), mask.clone(), *params)?;
    gp_solve(&problem)
}
