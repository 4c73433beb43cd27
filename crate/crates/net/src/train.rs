//! Adam and the joint generator / discriminator update.

use archstyle_core::losses::{
    gradient_loss_grad, l1_loss_grad, lsgan_d_loss_grad, lsgan_g_loss_grad, luminance_kl_loss_grad,
    total_generator_loss, LossReport, LossTerms, LossWeights,
};
use archstyle_core::Image;
use rand::Rng;

use crate::bundle::{sample_style, tensor_to_images, TranslatorBundle};
use crate::data::sample_batch;
use crate::graph::{Graph, NodeId};
use crate::model::Fwd;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, indexed by parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adam {
    pub step: u64,
    pub moments: Vec<Option<(Tensor, Tensor)>>,
}

impl Adam {
    pub fn update(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)], p: &AdamParams) {
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - p.beta1.powi(t);
        let c2 = 1.0 - p.beta2.powi(t);
        let (b1, b2) = (p.beta1 as f32, p.beta2 as f32);
        let step_size = (p.lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = p.eps as f32;
        for (id, g) in grads {
            let (m, v) =
                self.moments[id.index()].get_or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            let w = store.get_mut(*id);
            for (((wi, mi), vi), &gi) in w
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                *wi -= step_size * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub params: AdamParams,
    pub generator: Adam,
    pub discriminator: Adam,
}

/// One batch from each domain, `[n, 3, h, w]` in `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub domain1: Tensor,
    pub domain2: Tensor,
}

fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn scaled(shape: &[usize], g: &[f64], s: f64) -> Tensor {
    Tensor::new(shape, g.iter().map(|&v| (v * s) as f32).collect()).expect("gradient matches its node")
}

/// Interleaved per-image RGB gradients back to `[n, 3, h, w]`.
fn image_grads_to_tensor(grads: &[Vec<f64>], shape: &[usize], s: f64) -> Tensor {
    let (h, w) = (shape[2], shape[3]);
    let hw = h * w;
    let mut data = vec![0.0f32; grads.len() * 3 * hw];
    for (i, g) in grads.iter().enumerate() {
        for p in 0..hw {
            for c in 0..3 {
                data[(i * 3 + c) * hw + p] = (g[p * 3 + c] * s) as f32;
            }
        }
    }
    Tensor::new(shape, data).expect("image gradient shape")
}

struct Seeds(Vec<(NodeId, Tensor)>);

impl Seeds {
    /// L1 between two nodes; `b` receives the opposite gradient when it is
    /// itself differentiable.
    fn l1(&mut self, g: &Graph, a: NodeId, b: NodeId, weight: f64, b_trainable: bool) -> Result<f64> {
        let (va, vb) = (g.value(a), g.value(b));
        let r = l1_loss_grad(&to_f64(va), &to_f64(vb))?;
        if weight != 0.0 {
            self.0.push((a, scaled(va.shape(), &r.grad, weight)));
            if b_trainable {
                self.0.push((b, scaled(vb.shape(), &r.grad, -weight)));
            }
        }
        Ok(r.value)
    }

    fn adversarial(&mut self, g: &Graph, maps: &[NodeId], weight: f64) -> Result<f64> {
        let scores: Vec<Vec<f64>> = maps.iter().map(|&m| to_f64(g.value(m))).collect();
        let r = lsgan_g_loss_grad(&scores)?;
        if weight != 0.0 {
            for (&m, gr) in maps.iter().zip(&r.grads) {
                self.0.push((m, scaled(g.value(m).shape(), gr, weight)));
            }
        }
        Ok(r.value)
    }

    /// Mean over the batch of a per-image loss on `out`.
    fn per_image(
        &mut self,
        g: &Graph,
        out: NodeId,
        refs: &[Image],
        weight: f64,
        loss: impl Fn(&Image, &Image) -> archstyle_core::Result<archstyle_core::losses::ValueGrad>,
    ) -> Result<f64> {
        let imgs = tensor_to_images(g.value(out))?;
        let n = imgs.len() as f64;
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(imgs.len());
        for (o, r) in imgs.iter().zip(refs) {
            let vg = loss(o, r)?;
            value += vg.value / n;
            grads.push(vg.grad);
        }
        self.0
            .push((out, image_grads_to_tensor(&grads, g.value(out).shape(), weight / n)));
        Ok(value)
    }
}

/// Translations produced in one generator pass, kept for the discriminator.
struct Fakes {
    target: usize,
    with_style: Tensor,
    with_random: Tensor,
}

/// One generator and one discriminator update covering both translation
/// directions. The discriminator sees the fakes of this generator pass and
/// both updates use the pre-step parameters.
pub fn train_step(
    bundle: &mut TranslatorBundle,
    batch: &Batch,
    w: &LossWeights,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    w.validate()?;
    let shape = batch.domain1.shape().to_vec();
    if batch.domain2.shape() != shape.as_slice() {
        return Err(Error::shape(format!(
            "domain batches differ: {:?} vs {:?}",
            shape,
            batch.domain2.shape()
        )));
    }
    let n = shape[0];
    let sd = bundle.config.style_dim;
    let originals = [tensor_to_images(&batch.domain1)?, tensor_to_images(&batch.domain2)?];

    let mut g = Graph::new();
    let xs = [g.constant(batch.domain1.clone()), g.constant(batch.domain2.clone())];
    let mut seeds = Seeds(Vec::new());
    let mut terms = LossTerms::default();
    let mut fakes = Vec::with_capacity(2);
    for (a, b) in [(0usize, 1usize), (1, 0)] {
        let nets = &bundle.domains;
        let (xa, xb) = (xs[a], xs[b]);
        let r = Tensor::new(&[n, sd], (0..n).flat_map(|_| sample_style(rng, sd).0).collect())?;
        let mut f = Fwd::new(&mut g, &bundle.store, true);
        let ca = nets[a].content.forward(&mut f, xa)?;
        let sa = nets[a].style.forward(&mut f, xa)?;
        let sb = nets[b].style.forward(&mut f, xb)?;
        let za_b = nets[b].mapper.forward(&mut f, ca)?;
        let za_a = nets[a].mapper.forward(&mut f, ca)?;
        let r = f.g.constant(r);
        let x_ab = nets[b].generator.forward(&mut f, za_b, sb)?;
        let x_abr = nets[b].generator.forward(&mut f, za_b, r)?;
        let x_aa = nets[a].generator.forward(&mut f, za_a, sa)?;
        let c_ab = nets[b].content.forward(&mut f, x_ab)?;
        let z_ab = nets[b].mapper.forward(&mut f, c_ab)?;
        let s_r = nets[b].style.forward(&mut f, x_abr)?;
        let z_back = nets[a].mapper.forward(&mut f, c_ab)?;
        let x_aba = nets[a].generator.forward(&mut f, z_back, sa)?;
        f.trainable = false;
        let d_style = nets[b].discriminator.forward(&mut f, x_ab)?;
        let d_random = nets[b].discriminator.forward(&mut f, x_abr)?;

        let mut t = LossTerms {
            x: seeds.l1(&g, x_aa, xa, w.lambda_x, false)?,
            c: seeds.l1(&g, c_ab, ca, w.lambda_c, true)?,
            s: seeds.l1(&g, s_r, r, w.lambda_s, false)?,
            z: seeds.l1(&g, z_ab, za_b, w.lambda_z, true)?,
            cycle: seeds.l1(&g, x_aba, xa, w.lambda_cycle, false)?,
            adv: 0.5 * seeds.adversarial(&g, &d_style, 0.5 * w.lambda_adv)?
                + 0.5 * seeds.adversarial(&g, &d_random, 0.5 * w.lambda_adv)?,
            ..Default::default()
        };
        if w.lambda_gd != 0.0 {
            t.gd = seeds.per_image(&g, x_ab, &originals[a], w.lambda_gd, gradient_loss_grad)?;
        }
        if w.lambda_kl != 0.0 {
            t.kl = seeds.per_image(&g, x_ab, &originals[b], w.lambda_kl, luminance_kl_loss_grad)?;
        }
        terms = terms.sum(&t);
        fakes.push(Fakes {
            target: b,
            with_style: g.value(x_ab).clone(),
            with_random: g.value(x_abr).clone(),
        });
    }
    let mut report = total_generator_loss(&terms, w)?;
    let gen_grads = g.backward(seeds.0)?.into_params();
    drop(g);

    let mut gd = Graph::new();
    let mut d_seeds = Vec::new();
    let mut d_loss = 0.0;
    for fk in &fakes {
        let disc = &bundle.domains[fk.target].discriminator;
        let real_batch = if fk.target == 0 { &batch.domain1 } else { &batch.domain2 };
        let mut f = Fwd::new(&mut gd, &bundle.store, true);
        let real = f.g.constant(real_batch.clone());
        let fs = f.g.constant(fk.with_style.clone());
        let fr = f.g.constant(fk.with_random.clone());
        let real_maps = disc.forward(&mut f, real)?;
        let fs_maps = disc.forward(&mut f, fs)?;
        let fr_maps = disc.forward(&mut f, fr)?;
        let vals = |maps: &[NodeId]| -> Vec<Vec<f64>> { maps.iter().map(|&m| to_f64(gd.value(m))).collect() };
        let real_scores = vals(&real_maps);
        let (v1, gr1, gf1) = lsgan_d_loss_grad(&real_scores, &vals(&fs_maps))?;
        let (v2, gr2, gf2) = lsgan_d_loss_grad(&real_scores, &vals(&fr_maps))?;
        d_loss += 0.5 * (v1 + v2);
        for (k, &m) in real_maps.iter().enumerate() {
            let avg: Vec<f64> = gr1[k].iter().zip(&gr2[k]).map(|(a, b)| 0.5 * (a + b)).collect();
            d_seeds.push((m, scaled(gd.value(m).shape(), &avg, 1.0)));
        }
        for (maps, grads) in [(&fs_maps, &gf1), (&fr_maps, &gf2)] {
            for (&m, gr) in maps.iter().zip(grads) {
                d_seeds.push((m, scaled(gd.value(m).shape(), gr, 0.5)));
            }
        }
    }
    if !d_loss.is_finite() {
        return Err(Error::NonFinite("discriminator".into()));
    }
    let dis_grads = gd.backward(d_seeds)?.into_params();
    drop(gd);

    let opt = bundle.optimizer.get_or_insert_with(OptimizerState::default);
    let params = opt.params;
    opt.generator.update(&mut bundle.store, &gen_grads, &params);
    opt.discriminator.update(&mut bundle.store, &dis_grads, &params);
    report.discriminator = Some(d_loss);
    Ok(report)
}

/// Loop settings for [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub iterations: usize,
    pub batch_size: usize,
    /// Crop size after augmentation.
    pub size: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            iterations: 500,
            batch_size: 2,
            size: 32,
        }
    }
}

fn is_non_finite(e: &Error) -> bool {
    matches!(
        e,
        Error::NonFinite(_) | Error::Core(archstyle_core::Error::NonFinite(_))
    )
}

/// Runs `opts.iterations` steps on augmented batches drawn from the two
/// corpora. `on_step` sees the 1-based iteration and its report and may stop
/// the run by returning an error. A non-finite loss aborts with the
/// iteration number.
pub fn train(
    bundle: &mut TranslatorBundle,
    domain1: &[Image],
    domain2: &[Image],
    w: &LossWeights,
    opts: &TrainOptions,
    rng: &mut impl Rng,
    mut on_step: impl FnMut(usize, &LossReport) -> Result<()>,
) -> Result<()> {
    if opts.iterations == 0 || opts.batch_size == 0 {
        return Err(Error::config(
            "iterations",
            "iterations and batch size must be positive",
        ));
    }
    bundle.config.check_input(opts.size, opts.size)?;
    for it in 1..=opts.iterations {
        let batch = Batch {
            domain1: sample_batch(domain1, opts.batch_size, opts.size, rng)?,
            domain2: sample_batch(domain2, opts.batch_size, opts.size, rng)?,
        };
        let report = train_step(bundle, &batch, w, rng).map_err(|e| {
            if is_non_finite(&e) {
                Error::Diverged {
                    iteration: it,
                    source: Box::new(e),
                }
            } else {
                e
            }
        })?;
        on_step(it, &report)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::new(&[2], vec![1.0, -1.0]).unwrap());
        let mut adam = Adam::default();
        let g = Tensor::new(&[2], vec![0.3, -5.0]).unwrap();
        adam.update(&mut store, &[(id, g)], &AdamParams::default());
        let w = store.get(id).data();
        assert!((w[0] - (1.0 - 1e-4)).abs() < 1e-7, "{w:?}");
        assert!((w[1] - (-1.0 + 1e-4)).abs() < 1e-7, "{w:?}");
    }
}
