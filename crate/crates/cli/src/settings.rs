//! Layered `key=value` settings: config file, then `--set` pairs, then the
//! dedicated global flags.

use std::path::Path;

use archstyle_core::blending::BlendParams;
use archstyle_core::kv::KvMap;
use archstyle_core::losses::LossWeights;
use archstyle_core::metrics::MetricParams;
use archstyle_core::segmentation::{FillPolicy, DEFAULT_MASK_THRESHOLD};
use archstyle_net::config::CONFIG_KEYS;
use archstyle_net::{AdamParams, NetConfig};

use crate::error::{CliError, Context, Result};

const LOSS_KEYS: [&str; 10] = [
    "lambda_x",
    "lambda_c",
    "lambda_s",
    "lambda_z",
    "lambda_cs",
    "lambda_cycle",
    "lambda_cc",
    "lambda_adv",
    "lambda_gd",
    "lambda_kl",
];

const OTHER_KEYS: [&str; 21] = [
    "blend_beta",
    "blend_iters",
    "blend_solver",
    "blend_cg_tol",
    "blend_cg_max_iter",
    "blend_max_levels",
    "canny_sigma",
    "canny_low",
    "canny_high",
    "inception_splits",
    "eval_size",
    "iterations",
    "batch_size",
    "checkpoint_every",
    "fill",
    "mask_threshold",
    "infer_size",
    "adam_lr",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
];

pub const DEFAULT_INFER_SIZE: usize = 512;

pub fn known_keys() -> Vec<&'static str> {
    CONFIG_KEYS
        .iter()
        .chain(&LOSS_KEYS)
        .chain(&OTHER_KEYS)
        .copied()
        .collect()
}

#[derive(Clone, Debug)]
pub struct Settings {
    kv: KvMap,
}

impl Settings {
    pub fn load(config: Option<&Path>, pairs: &[String]) -> Result<Self> {
        let mut kv = match config {
            Some(p) => {
                crate::error::require_file(p, "config file")?;
                KvMap::load(p).usage()?
            }
            None => KvMap::new("settings"),
        };
        if !pairs.is_empty() {
            let text = pairs.join("\n");
            kv.merge(&KvMap::parse(&text, "--set").usage()?);
        }
        kv.reject_unknown(&known_keys()).usage()?;
        Ok(Self { kv })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.kv.set(key, value);
    }

    pub fn kv(&self) -> &KvMap {
        &self.kv
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.kv.get_usize(key).usage()?.unwrap_or(default))
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        NetConfig::from_kv(&self.kv).usage()
    }

    pub fn loss_weights(&self, mut base: LossWeights) -> Result<LossWeights> {
        base.apply_overrides(&self.kv).usage()?;
        Ok(base)
    }

    pub fn blend_params(&self) -> Result<BlendParams> {
        let mut p = BlendParams::default();
        p.apply_overrides(&self.kv).usage()?;
        Ok(p)
    }

    pub fn metric_params(&self) -> Result<MetricParams> {
        let mut p = MetricParams::default();
        p.apply_overrides(&self.kv).usage()?;
        Ok(p)
    }

    pub fn adam(&self) -> Result<AdamParams> {
        let d = AdamParams::default();
        let get = |k: &str, v: f64| -> Result<f64> { Ok(self.kv.get_f64(k).usage()?.unwrap_or(v)) };
        let p = AdamParams {
            lr: get("adam_lr", d.lr)?,
            beta1: get("adam_beta1", d.beta1)?,
            beta2: get("adam_beta2", d.beta2)?,
            eps: get("adam_eps", d.eps)?,
        };
        let ok = p.lr > 0.0 && (0.0..1.0).contains(&p.beta1) && (0.0..1.0).contains(&p.beta2) && p.eps > 0.0;
        if !ok {
            return Err(CliError::Usage(format!("invalid Adam settings {p:?}")));
        }
        Ok(p)
    }

    pub fn fill(&self) -> Result<FillPolicy> {
        match self.kv.get("fill") {
            Some(v) => v.parse().usage(),
            None => Ok(FillPolicy::default()),
        }
    }

    pub fn mask_threshold(&self) -> Result<f64> {
        Ok(self
            .kv
            .get_f64("mask_threshold")
            .usage()?
            .unwrap_or(DEFAULT_MASK_THRESHOLD))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layering_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# toy run\nbase_width=16\nlambda_gd=1\n").unwrap();
        let s = Settings::load(Some(&path), &["base_width=8".into()]).unwrap();
        assert_eq!(s.net_config().unwrap().base_width, 8);
        assert_eq!(s.loss_weights(LossWeights::background()).unwrap().lambda_gd, 1.0);
        assert!(matches!(
            Settings::load(None, &["bogus=1".into()]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            Settings::load(Some(&dir.path().join("nope")), &[]),
            Err(CliError::Usage(_))
        ));
    }
}
