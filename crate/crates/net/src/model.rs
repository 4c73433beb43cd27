//! Encoders, mapper, generator and discriminator. Every module only holds
//! [`ParamId`]s; the tensors live in one [`ParamStore`].

use rand::Rng;

use crate::config::{Init, NetConfig, STYLE_MIN_INPUT};
use crate::graph::{Graph, NodeId};
use crate::kernels::PadMode;
use crate::params::{normal_tensor, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

const LEAKY_SLOPE: f32 = 0.2;
const NORMAL_STD: f32 = 0.02;
/// Raw AdaIN scale is offset so a zero MLP output gives unit scale.
const SOFTPLUS_ONE: f32 = 0.541_324_9; // ln(e - 1)

/// Forward-pass context: the graph being recorded and whether parameters
/// are trainable leaves or frozen constants.
pub struct Fwd<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
    pub trainable: bool,
}

impl<'a> Fwd<'a> {
    pub fn new(g: &'a mut Graph, store: &'a ParamStore, trainable: bool) -> Self {
        Self { g, store, trainable }
    }

    fn p(&mut self, id: ParamId) -> NodeId {
        if self.trainable {
            self.g.param(self.store, id)
        } else {
            self.g.frozen_param(self.store, id)
        }
    }
}

/// Adds parameters under a common name prefix.
pub(crate) struct Builder<'a, R: Rng> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut R,
    pub init: Init,
}

impl<R: Rng> Builder<'_, R> {
    fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) -> ParamId {
        let std = match self.init {
            Init::Normal => NORMAL_STD,
            Init::Kaiming => (2.0 / fan_in as f32).sqrt(),
        };
        let t = normal_tensor(shape, std, self.rng);
        self.store.add(name, t)
    }

    fn zeros(&mut self, name: String, shape: &[usize]) -> ParamId {
        self.store.add(name, Tensor::zeros(shape))
    }

    fn ones(&mut self, name: String, shape: &[usize]) -> ParamId {
        self.store.add(name, Tensor::full(shape, 1.0))
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng>(
        bld: &mut Builder<R>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        Self {
            w: bld.weight(format!("{name}.weight"), &[cout, cin, k, k], cin * k * k),
            b: bld.zeros(format!("{name}.bias"), &[cout]),
            stride,
            pad,
        }
    }

    fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (w, b) = (f.p(self.w), f.p(self.b));
        f.g.conv2d(x, w, Some(b), self.stride, self.pad, PadMode::Reflect)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new<R: Rng>(bld: &mut Builder<R>, name: &str, fin: usize, fout: usize) -> Self {
        Self {
            w: bld.weight(format!("{name}.weight"), &[fout, fin], fin),
            b: bld.zeros(format!("{name}.bias"), &[fout]),
        }
    }

    fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (w, b) = (f.p(self.w), f.p(self.b));
        f.g.linear(x, w, Some(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Act {
    Relu,
    Leaky,
}

fn activate(f: &mut Fwd, x: NodeId, act: Act) -> NodeId {
    match act {
        Act::Relu => f.g.relu(x),
        Act::Leaky => f.g.leaky_relu(x, LEAKY_SLOPE),
    }
}

/// Two 3x3 convs with instance norm and a skip connection.
#[derive(Clone, Debug)]
pub struct ResBlock {
    c1: Conv,
    c2: Conv,
    act: Act,
}

impl ResBlock {
    fn new<R: Rng>(bld: &mut Builder<R>, name: &str, ch: usize, act: Act) -> Self {
        Self {
            c1: Conv::new(bld, &format!("{name}.conv1"), ch, ch, 3, 1, 1),
            c2: Conv::new(bld, &format!("{name}.conv2"), ch, ch, 3, 1, 1),
            act,
        }
    }

    fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let h = self.c1.forward(f, x)?;
        let h = f.g.instance_norm(h);
        let h = activate(f, h, self.act);
        let h = self.c2.forward(f, h)?;
        let h = f.g.instance_norm(h);
        f.g.add(x, h)
    }
}

#[derive(Clone, Debug)]
pub struct ContentEncoder {
    down: [Conv; 3],
    res: Vec<ResBlock>,
    shared: ResBlock,
}

impl ContentEncoder {
    pub fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (_, _, h, w) = f.g.value(x).dims4();
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape(format!("image dims {w}x{h} are not divisible by 4")));
        }
        let mut y = x;
        for c in &self.down {
            y = c.forward(f, y)?;
            y = f.g.instance_norm(y);
            y = f.g.relu(y);
        }
        for r in &self.res {
            y = r.forward(f, y)?;
        }
        self.shared.forward(f, y)
    }
}

/// Domain mapping: transposed conv up by 2, then a stride-2 conv back down.
#[derive(Clone, Debug)]
pub struct Mapper {
    up_w: ParamId,
    up_b: ParamId,
    down: Conv,
}

impl Mapper {
    pub fn forward(&self, f: &mut Fwd, c: NodeId) -> Result<NodeId> {
        let (w, b) = (f.p(self.up_w), f.p(self.up_b));
        let y = f.g.conv_transpose2d(c, w, Some(b), 2, 1, 1)?;
        let y = f.g.instance_norm(y);
        let y = f.g.relu(y);
        self.down.forward(f, y)
    }
}

#[derive(Clone, Debug)]
pub struct StyleEncoder {
    convs: Vec<Conv>,
    fc: Linear,
}

impl StyleEncoder {
    pub fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let feat = self.features(f, x)?;
        let pooled = f.g.gap(feat);
        self.fc.forward(f, pooled)
    }

    /// Convolutional trunk before global pooling.
    pub fn features(&self, f: &mut Fwd, x: NodeId) -> Result<NodeId> {
        let (_, _, h, w) = f.g.value(x).dims4();
        if h < STYLE_MIN_INPUT || w < STYLE_MIN_INPUT {
            return Err(Error::shape(format!(
                "style encoder needs at least {STYLE_MIN_INPUT}x{STYLE_MIN_INPUT}, got {w}x{h}"
            )));
        }
        let mut y = x;
        for c in &self.convs {
            y = c.forward(f, y)?;
            y = f.g.relu(y);
        }
        Ok(y)
    }

    /// Fully-connected head applied to pooled features `[n, c]`.
    pub fn head(&self, f: &mut Fwd, pooled: NodeId) -> Result<NodeId> {
        self.fc.forward(f, pooled)
    }
}

#[derive(Clone, Debug)]
struct UpStage {
    conv: Conv,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
pub struct Generator {
    mlp: [Linear; 3],
    res: Vec<(Conv, Conv)>,
    up: [UpStage; 2],
    out: Conv,
    channels: usize,
}

impl Generator {
    /// Decodes code `z [n, 2b, h, w]` with style `s [n, style_dim]`.
    pub fn forward(&self, f: &mut Fwd, z: NodeId, s: NodeId) -> Result<NodeId> {
        let c = self.channels;
        let mut a = s;
        for (i, l) in self.mlp.iter().enumerate() {
            a = l.forward(f, a)?;
            if i + 1 < self.mlp.len() {
                a = f.g.relu(a);
            }
        }
        let mut slot = 0;
        let mut adain = |f: &mut Fwd, x: NodeId| -> Result<NodeId> {
            let mean = f.g.narrow(a, 2 * slot * c, c)?;
            let raw = f.g.narrow(a, (2 * slot + 1) * c, c)?;
            slot += 1;
            let raw = f.g.affine(raw, 1.0, SOFTPLUS_ONE);
            let std = f.g.softplus(raw);
            let h = f.g.instance_norm(x);
            f.g.channel_affine(h, std, mean)
        };
        let mut y = z;
        for (c1, c2) in &self.res {
            let h = c1.forward(f, y)?;
            let h = adain(f, h)?;
            let h = f.g.relu(h);
            let h = c2.forward(f, h)?;
            let h = adain(f, h)?;
            y = f.g.add(y, h)?;
        }
        for st in &self.up {
            y = f.g.upsample2(y);
            y = st.conv.forward(f, y)?;
            y = f.g.layer_norm(y);
            let (gm, bt) = (f.p(st.gamma), f.p(st.beta));
            y = f.g.channel_affine(y, gm, bt)?;
            y = f.g.relu(y);
        }
        let y = self.out.forward(f, y)?;
        let y = f.g.tanh(y);
        Ok(f.g.affine(y, 0.5, 0.5))
    }

    /// Length of the MLP output: a (mean, raw scale) pair per AdaIN layer.
    pub fn adain_params(&self) -> usize {
        4 * self.channels * self.res.len()
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    scales: Vec<(Vec<Conv>, Conv)>,
}

impl Discriminator {
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    /// One `[n, 1, h, w]` score map per scale, finest first.
    pub fn forward(&self, f: &mut Fwd, x: NodeId) -> Result<Vec<NodeId>> {
        let (_, _, h, w) = f.g.value(x).dims4();
        let need = NetConfig::disc_min_input(self.scales.len());
        if h < need || w < need {
            return Err(Error::shape(format!(
                "{} discriminator scales need at least {need}x{need}, got {w}x{h}",
                self.scales.len()
            )));
        }
        let mut input = x;
        let mut out = Vec::with_capacity(self.scales.len());
        for (i, (convs, head)) in self.scales.iter().enumerate() {
            if i > 0 {
                input = f.g.avg_pool2(input)?;
            }
            let mut y = input;
            for c in convs {
                y = c.forward(f, y)?;
                y = f.g.leaky_relu(y, LEAKY_SLOPE);
            }
            out.push(head.forward(f, y)?);
        }
        Ok(out)
    }
}

/// All networks of one domain.
#[derive(Clone, Debug)]
pub struct DomainNets {
    pub content: ContentEncoder,
    pub style: StyleEncoder,
    pub mapper: Mapper,
    pub generator: Generator,
    pub discriminator: Discriminator,
}

/// Builds both domains; the last content-encoder block is created once and
/// referenced by both encoders.
pub(crate) fn build_domains<R: Rng>(cfg: &NetConfig, store: &mut ParamStore, rng: &mut R) -> [DomainNets; 2] {
    let b = cfg.base_width;
    let cc = cfg.code_channels();
    let mut bld = Builder {
        store,
        rng,
        init: cfg.init,
    };
    let shared = ResBlock::new(&mut bld, "shared.content.res", cc, Act::Leaky);
    let mut make = |d: usize| {
        let p = format!("d{d}");
        let content = ContentEncoder {
            down: [
                Conv::new(&mut bld, &format!("{p}.content.down0"), 3, b, 7, 1, 3),
                Conv::new(&mut bld, &format!("{p}.content.down1"), b, cc, 4, 2, 1),
                Conv::new(&mut bld, &format!("{p}.content.down2"), cc, cc, 4, 2, 1),
            ],
            res: (0..4)
                .map(|i| ResBlock::new(&mut bld, &format!("{p}.content.res{i}"), cc, Act::Relu))
                .collect(),
            shared: shared.clone(),
        };
        let widths = [3, b, 2 * b, 4 * b, 4 * b, 4 * b];
        let style = StyleEncoder {
            convs: (0..5)
                .map(|i| {
                    let (k, s, pad) = if i == 0 { (7, 1, 3) } else { (4, 2, 1) };
                    Conv::new(
                        &mut bld,
                        &format!("{p}.style.conv{i}"),
                        widths[i],
                        widths[i + 1],
                        k,
                        s,
                        pad,
                    )
                })
                .collect(),
            fc: Linear::new(&mut bld, &format!("{p}.style.fc"), 4 * b, cfg.style_dim),
        };
        let mapper = Mapper {
            up_w: bld.weight(format!("{p}.mapper.up.weight"), &[cc, cc, 3, 3], cc * 9),
            up_b: bld.zeros(format!("{p}.mapper.up.bias"), &[cc]),
            down: Conv::new(&mut bld, &format!("{p}.mapper.down"), cc, cc, 4, 2, 1),
        };
        let hidden = 4 * b;
        let n_adain = 4 * cc * 4;
        let generator = Generator {
            mlp: [
                Linear::new(&mut bld, &format!("{p}.gen.mlp0"), cfg.style_dim, hidden),
                Linear::new(&mut bld, &format!("{p}.gen.mlp1"), hidden, hidden),
                Linear::new(&mut bld, &format!("{p}.gen.mlp2"), hidden, n_adain),
            ],
            res: (0..4)
                .map(|i| {
                    (
                        Conv::new(&mut bld, &format!("{p}.gen.res{i}.conv1"), cc, cc, 3, 1, 1),
                        Conv::new(&mut bld, &format!("{p}.gen.res{i}.conv2"), cc, cc, 3, 1, 1),
                    )
                })
                .collect(),
            up: [(cc, cc, 0), (cc, b, 1)].map(|(cin, cout, i)| UpStage {
                conv: Conv::new(&mut bld, &format!("{p}.gen.up{i}"), cin, cout, 5, 1, 2),
                gamma: bld.ones(format!("{p}.gen.up{i}.ln.gamma"), &[cout]),
                beta: bld.zeros(format!("{p}.gen.up{i}.ln.beta"), &[cout]),
            }),
            out: Conv::new(&mut bld, &format!("{p}.gen.out"), b, 3, 7, 1, 3),
            channels: cc,
        };
        let dw = [3, b, 2 * b, 4 * b, 8 * b];
        let discriminator = Discriminator {
            scales: (0..cfg.n_disc_scales)
                .map(|k| {
                    let convs = (0..4)
                        .map(|i| {
                            Conv::new(
                                &mut bld,
                                &format!("{p}.dis.scale{k}.conv{i}"),
                                dw[i],
                                dw[i + 1],
                                4,
                                2,
                                1,
                            )
                        })
                        .collect();
                    (
                        convs,
                        Conv::new(&mut bld, &format!("{p}.dis.scale{k}.score"), 8 * b, 1, 1, 1, 0),
                    )
                })
                .collect(),
        };
        DomainNets {
            content,
            style,
            mapper,
            generator,
            discriminator,
        }
    };
    let d1 = make(1);
    let d2 = make(2);
    [d1, d2]
}

/// True for parameters updated by the discriminator optimizer.
pub fn is_discriminator_param(name: &str) -> bool {
    name.contains(".dis.")
}
