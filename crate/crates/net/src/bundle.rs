use archstyle_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::NetConfig;
use crate::graph::{Graph, NodeId};
use crate::model::{build_domains, is_discriminator_param, DomainNets, Fwd};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::train::OptimizerState;
use crate::{Error, Result};

/// Translation direction between the two training domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    OneToTwo,
    TwoToOne,
}

impl Direction {
    /// `(source, target)` domain indices.
    pub fn domains(self) -> (usize, usize) {
        match self {
            Direction::OneToTwo => (0, 1),
            Direction::TwoToOne => (1, 0),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1to2" | "1->2" | "forward" => Ok(Direction::OneToTwo),
            "2to1" | "2->1" | "backward" => Ok(Direction::TwoToOne),
            other => Err(Error::config(
                "direction",
                format!("unknown direction `{other}` (1to2, 2to1)"),
            )),
        }
    }
}

/// Low-dimensional appearance code.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleCode(pub Vec<f32>);

impl StyleCode {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }
}

/// I.i.d. standard normal style code.
pub fn sample_style(rng: &mut impl Rng, dim: usize) -> StyleCode {
    StyleCode((0..dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect())
}

/// `(1 - t) a + t b` for `t` in `[0, 1]`.
pub fn interpolate_style(a: &StyleCode, b: &StyleCode, t: f64) -> Result<StyleCode> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::config("t", format!("{t} is outside [0, 1]")));
    }
    if a.dim() != b.dim() {
        return Err(Error::shape(format!(
            "style codes of length {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(StyleCode(
        a.0.iter()
            .zip(&b.0)
            .map(|(&x, &y)| ((1.0 - t) * x as f64 + t * y as f64) as f32)
            .collect(),
    ))
}

/// Re-normalizes every channel of `feat` (`[n, c, h, w]`) to the target
/// mean and standard deviation. The feature std is floored at `1e-5`.
pub fn adain(feat: &Tensor, mean_t: &[f64], std_t: &[f64]) -> Result<Tensor> {
    let (n, c, h, w) = feat.dims4();
    if mean_t.len() != c || std_t.len() != c {
        return Err(Error::shape(format!(
            "{c} channels but {} target means and {} target stds",
            mean_t.len(),
            std_t.len()
        )));
    }
    if let Some(s) = std_t.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::config("std_t", format!("target std {s} must be positive")));
    }
    let hw = h * w;
    let src = feat.data();
    let mut out = vec![0.0f32; src.len()];
    for i in 0..n {
        for ch in 0..c {
            let r = (i * c + ch) * hw..(i * c + ch + 1) * hw;
            let s = &src[r.clone()];
            let mean = s.iter().map(|&v| v as f64).sum::<f64>() / hw as f64;
            let var = s.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / hw as f64;
            let sd = var.sqrt().max(crate::graph::NORM_EPS);
            for (o, &v) in out[r].iter_mut().zip(s) {
                *o = (std_t[ch] * (v as f64 - mean) / sd + mean_t[ch]) as f32;
            }
        }
    }
    Tensor::new(feat.shape(), out)
}

/// Stacks same-sized images into an `[n, 3, h, w]` tensor.
pub fn images_to_tensor(images: &[&Image]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::shape("no images"))?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(images.len() * 3 * w * h);
    for img in images {
        if img.dims() != (w, h) {
            return Err(Error::shape(format!(
                "image {:?} in a batch of {:?}",
                img.dims(),
                (w, h)
            )));
        }
        for c in 0..3 {
            data.extend(img.data().iter().skip(c).step_by(3).map(|&v| v as f32));
        }
    }
    Tensor::new(&[images.len(), 3, h, w], data)
}

/// Splits an `[n, 3, h, w]` tensor into images.
pub fn tensor_to_images(t: &Tensor) -> Result<Vec<Image>> {
    let (n, c, h, w) = t.dims4();
    if c != 3 {
        return Err(Error::shape(format!("expected 3 channels, found {c}")));
    }
    let hw = h * w;
    (0..n)
        .map(|i| {
            let planes = &t.data()[i * 3 * hw..(i + 1) * 3 * hw];
            let data = (0..hw)
                .flat_map(|p| (0..3).map(move |ch| planes[ch * hw + p] as f64))
                .collect();
            Ok(Image::new(w, h, data)?)
        })
        .collect()
}

fn style_tensor(codes: &[&StyleCode], dim: usize) -> Result<Tensor> {
    if let Some(bad) = codes.iter().find(|c| c.dim() != dim) {
        return Err(Error::shape(format!(
            "style code of length {} where {dim} is expected",
            bad.dim()
        )));
    }
    Tensor::new(
        &[codes.len(), dim],
        codes.iter().flat_map(|c| c.0.iter().copied()).collect(),
    )
}

/// Where a translation takes its target appearance from.
#[derive(Clone, Copy, Debug)]
pub enum StyleSource<'a> {
    Image(&'a Image),
    Code(&'a StyleCode),
}

/// Both domains' networks, their parameters and the optimizer state.
#[derive(Clone, Debug)]
pub struct TranslatorBundle {
    pub config: NetConfig,
    pub store: ParamStore,
    pub domains: [DomainNets; 2],
    pub optimizer: Option<OptimizerState>,
}

impl TranslatorBundle {
    /// Fresh networks initialized from `config.seed`.
    pub fn new(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let domains = build_domains(&config, &mut store, &mut rng);
        Ok(Self {
            config,
            store,
            domains,
            optimizer: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.numel()
    }

    pub fn generator_params(&self) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|&id| !is_discriminator_param(self.store.name(id)))
            .collect()
    }

    pub fn discriminator_params(&self) -> Vec<ParamId> {
        self.store
            .ids()
            .filter(|&id| is_discriminator_param(self.store.name(id)))
            .collect()
    }

    fn run<T>(&self, body: impl FnOnce(&mut Fwd) -> Result<T>) -> Result<T> {
        let mut g = Graph::new();
        let mut f = Fwd::new(&mut g, &self.store, false);
        body(&mut f)
    }

    fn one(f: &mut Fwd, x: NodeId) -> Tensor {
        f.g.value(x).clone()
    }

    /// Content code `[n, 2b, h/4, w/4]` of `x [n, 3, h, w]`.
    pub fn encode_content(&self, domain: usize, x: &Tensor) -> Result<Tensor> {
        self.run(|f| {
            let xi = f.g.constant(x.clone());
            let c = self.domains[domain].content.forward(f, xi)?;
            Ok(Self::one(f, c))
        })
    }

    /// Maps a content code into `domain`'s code space.
    pub fn map_domain(&self, domain: usize, c: &Tensor) -> Result<Tensor> {
        self.run(|f| {
            let ci = f.g.constant(c.clone());
            let z = self.domains[domain].mapper.forward(f, ci)?;
            Ok(Self::one(f, z))
        })
    }

    pub fn encode_style(&self, domain: usize, x: &Image) -> Result<StyleCode> {
        let t = images_to_tensor(&[x])?;
        self.run(|f| {
            let xi = f.g.constant(t);
            let s = self.domains[domain].style.forward(f, xi)?;
            Ok(StyleCode(f.g.value(s).data().to_vec()))
        })
    }

    /// Decodes `z [1, 2b, h, w]` with style `s` into a `4h x 4w` image.
    pub fn generate(&self, domain: usize, z: &Tensor, s: &StyleCode) -> Result<Image> {
        let st = style_tensor(&[s], self.config.style_dim)?;
        let out = self.run(|f| {
            let zi = f.g.constant(z.clone());
            let si = f.g.constant(st);
            let y = self.domains[domain].generator.forward(f, zi, si)?;
            Ok(Self::one(f, y))
        })?;
        Ok(tensor_to_images(&out)?.remove(0))
    }

    /// Score maps, finest scale first.
    pub fn discriminate(&self, domain: usize, x: &Image) -> Result<Vec<Tensor>> {
        let t = images_to_tensor(&[x])?;
        self.run(|f| {
            let xi = f.g.constant(t);
            let maps = self.domains[domain].discriminator.forward(f, xi)?;
            Ok(maps.into_iter().map(|m| Self::one(f, m)).collect())
        })
    }

    /// `G_t(M_t(E_s(x)), style)` for the direction's source `s` and target `t`.
    pub fn translate(&self, x: &Image, style: StyleSource, direction: Direction) -> Result<Image> {
        let (src, dst) = direction.domains();
        let code = match style {
            StyleSource::Image(img) => self.encode_style(dst, img)?,
            StyleSource::Code(c) => c.clone(),
        };
        let c = self.encode_content(src, &images_to_tensor(&[x])?)?;
        let z = self.map_domain(dst, &c)?;
        self.generate(dst, &z, &code)
    }
}
