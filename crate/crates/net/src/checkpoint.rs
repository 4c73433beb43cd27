//! Checkpoint container.
//!
//! All integers are little-endian `u32`.
//!
//! ```text
//! magic        8 bytes   "ASTYCKPT"
//! version      u32       currently 1
//! meta_len     u32
//! meta         meta_len bytes of UTF-8 `key=value` lines: the network
//!              config plus free-form metadata (branch, iteration, ...)
//! count        u32       number of tensors
//! count times:
//!   name_len   u32
//!   name       name_len bytes of UTF-8
//!   rank       u32
//!   dims       rank x u32
//!   data       prod(dims) x f32 (IEEE-754, little-endian)
//! ```
//!
//! Parameter tensors use their store names (`d1.content.down0.weight`, ...).
//! Optimizer moments, when present, are stored as `opt.{gen,dis}.{m,v}.<name>`
//! with the step counts and Adam settings in the metadata.

use std::io::{Read, Write};
use std::path::Path;

use archstyle_core::kv::KvMap;

use crate::bundle::TranslatorBundle;
use crate::config::{NetConfig, CONFIG_KEYS};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use crate::train::{Adam, AdamParams, OptimizerState};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ASTYCKPT";
pub const VERSION: u32 = 1;

const OPT_KEYS: [&str; 6] = [
    "opt_gen_step",
    "opt_dis_step",
    "adam_lr",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
];

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::shape(format!("{v} does not fit the checkpoint format")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) -> Result<()> {
    put_u32(out, name.len())?;
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len())?;
    for &d in t.shape() {
        put_u32(out, d)?;
    }
    out.reserve(t.numel() * 4);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

fn opt_tensors<'a>(
    tag: &'a str,
    adam: &'a Adam,
    store: &'a ParamStore,
) -> impl Iterator<Item = (String, &'a Tensor)> + 'a {
    adam.moments.iter().enumerate().flat_map(move |(i, mv)| {
        let name = store
            .ids()
            .nth(i)
            .map(|id| store.name(id).to_string())
            .unwrap_or_default();
        mv.iter()
            .flat_map(move |(m, v)| [(format!("opt.{tag}.m.{name}"), m), (format!("opt.{tag}.v.{name}"), v)])
    })
}

/// Serializes the bundle. `meta` entries are stored alongside the config.
pub fn to_bytes(bundle: &TranslatorBundle, meta: &KvMap) -> Result<Vec<u8>> {
    let mut kv = bundle.config.to_kv();
    kv.merge(meta);
    let mut tensors: Vec<(String, &Tensor)> = bundle
        .store
        .ids()
        .map(|id| (bundle.store.name(id).to_string(), bundle.store.get(id)))
        .collect();
    if let Some(opt) = &bundle.optimizer {
        kv.set("opt_gen_step", opt.generator.step);
        kv.set("opt_dis_step", opt.discriminator.step);
        kv.set("adam_lr", opt.params.lr);
        kv.set("adam_beta1", opt.params.beta1);
        kv.set("adam_beta2", opt.params.beta2);
        kv.set("adam_eps", opt.params.eps);
        tensors.extend(opt_tensors("gen", &opt.generator, &bundle.store));
        tensors.extend(opt_tensors("dis", &opt.discriminator, &bundle.store));
    }
    let text = kv.to_string();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, text.len())?;
    out.extend_from_slice(text.as_bytes());
    put_u32(&mut out, tensors.len())?;
    for (name, t) in tensors {
        put_tensor(&mut out, &name, t)?;
    }
    Ok(out)
}

pub fn save(bundle: &TranslatorBundle, meta: &KvMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(bundle, meta)?;
    let io = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or("truncated file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<(KvMap, Vec<(String, Tensor)>), String> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported version {version}"));
    }
    let meta = KvMap::parse(&r.string()?, "checkpoint metadata").map_err(|e| e.to_string())?;
    let count = r.u32()?;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let name = r.string()?;
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or("tensor too large")?;
        let raw = r.take(numel.checked_mul(4).ok_or("tensor too large")?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, Tensor::new(&dims, data).map_err(|e| e.to_string())?));
    }
    if r.pos != bytes.len() {
        return Err("trailing bytes after the last tensor".into());
    }
    Ok((meta, tensors))
}

/// Rebuilds the bundle described by the checkpoint and loads its tensors.
/// Returns the metadata that is not part of the network config.
pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<(TranslatorBundle, KvMap)> {
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let (meta, tensors) = parse(bytes).map_err(bad)?;
    let config = NetConfig::from_kv(&meta).map_err(|e| bad(e.to_string()))?;
    let mut bundle = TranslatorBundle::new(config)?;
    let mut loaded = vec![false; bundle.store.len()];
    let mut opt = OptimizerState::default();
    let mut has_opt = false;
    for (name, t) in tensors {
        if let Some(rest) = name.strip_prefix("opt.") {
            let (tag, rest) = rest
                .split_once('.')
                .ok_or_else(|| bad(format!("bad tensor name `{name}`")))?;
            let (kind, pname) = rest
                .split_once('.')
                .ok_or_else(|| bad(format!("bad tensor name `{name}`")))?;
            let id = bundle
                .store
                .find(pname)
                .ok_or_else(|| bad(format!("optimizer state for unknown parameter `{pname}`")))?;
            let adam = match tag {
                "gen" => &mut opt.generator,
                "dis" => &mut opt.discriminator,
                _ => return Err(bad(format!("bad tensor name `{name}`"))),
            };
            if adam.moments.len() < bundle.store.len() {
                adam.moments.resize(bundle.store.len(), None);
            }
            let slot =
                adam.moments[id.index()].get_or_insert_with(|| (Tensor::zeros(t.shape()), Tensor::zeros(t.shape())));
            match kind {
                "m" => slot.0 = t,
                "v" => slot.1 = t,
                _ => return Err(bad(format!("bad tensor name `{name}`"))),
            }
            has_opt = true;
            continue;
        }
        let id = bundle
            .store
            .find(&name)
            .ok_or_else(|| bad(format!("unexpected tensor `{name}`")))?;
        if bundle.store.get(id).shape() != t.shape() {
            return Err(bad(format!(
                "tensor `{name}` has shape {:?}, the config implies {:?}",
                t.shape(),
                bundle.store.get(id).shape()
            )));
        }
        *bundle.store.get_mut(id) = t;
        loaded[id.index()] = true;
    }
    if let Some(i) = loaded.iter().position(|l| !l) {
        let id = bundle.store.ids().nth(i).expect("index in range");
        return Err(bad(format!("missing tensor `{}`", bundle.store.name(id))));
    }
    if has_opt {
        let num = |k: &str| meta.get_parsed::<f64>(k).map_err(|e| bad(e.to_string()));
        let d = AdamParams::default();
        opt.params = AdamParams {
            lr: num("adam_lr")?.unwrap_or(d.lr),
            beta1: num("adam_beta1")?.unwrap_or(d.beta1),
            beta2: num("adam_beta2")?.unwrap_or(d.beta2),
            eps: num("adam_eps")?.unwrap_or(d.eps),
        };
        opt.generator.step = meta
            .get_u64("opt_gen_step")
            .map_err(|e| bad(e.to_string()))?
            .unwrap_or(0);
        opt.discriminator.step = meta
            .get_u64("opt_dis_step")
            .map_err(|e| bad(e.to_string()))?
            .unwrap_or(0);
        bundle.optimizer = Some(opt);
    }
    let mut extra = KvMap::new(path.display().to_string());
    for k in meta.keys() {
        if !CONFIG_KEYS.contains(&k) && !OPT_KEYS.contains(&k) {
            extra.set(k, meta.get(k).unwrap_or_default());
        }
    }
    Ok((bundle, extra))
}

pub fn load(path: impl AsRef<Path>) -> Result<(TranslatorBundle, KvMap)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
    from_bytes(&bytes, path)
}
