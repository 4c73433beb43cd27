use std::fmt;
use std::str::FromStr;

use archstyle_core::kv::KvMap;

use crate::{Error, Result};

/// Weight initialization for convolution and linear layers; biases start
/// at zero either way.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Init {
    /// `N(0, 0.02^2)`.
    #[default]
    Normal,
    /// `N(0, 2 / fan_in)`.
    Kaiming,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Init::Normal),
            "kaiming" => Ok(Init::Kaiming),
            other => Err(Error::config(
                "init",
                format!("unknown scheme `{other}` (normal, kaiming)"),
            )),
        }
    }
}

impl fmt::Display for Init {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Init::Normal => "normal",
            Init::Kaiming => "kaiming",
        })
    }
}

/// Architecture hyper-parameters. The content code has `2 * base_width`
/// channels at a quarter of the input resolution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetConfig {
    pub base_width: usize,
    pub style_dim: usize,
    pub n_disc_scales: usize,
    /// Training crop size.
    pub image_size: usize,
    pub seed: u64,
    pub init: Init,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            base_width: 64,
            style_dim: 8,
            n_disc_scales: 3,
            image_size: 256,
            seed: 0,
            init: Init::Normal,
        }
    }
}

pub const CONFIG_KEYS: [&str; 6] = ["base_width", "style_dim", "n_disc_scales", "image_size", "seed", "init"];

/// Smallest input one discriminator scale accepts (four stride-2 convs).
pub const DISC_MIN_INPUT: usize = 16;
/// Smallest input the style encoder accepts.
pub const STYLE_MIN_INPUT: usize = 32;

impl NetConfig {
    pub fn code_channels(&self) -> usize {
        2 * self.base_width
    }

    /// Minimum image side for `n` discriminator scales.
    pub fn disc_min_input(n: usize) -> usize {
        DISC_MIN_INPUT << n.saturating_sub(1)
    }

    /// Training inputs must have sides divisible by 4 and large enough for
    /// the style encoder and every discriminator scale.
    pub fn check_input(&self, width: usize, height: usize) -> Result<()> {
        if !width.is_multiple_of(4) || !height.is_multiple_of(4) {
            return Err(Error::shape(format!("{width}x{height} is not divisible by 4")));
        }
        let need = Self::disc_min_input(self.n_disc_scales).max(STYLE_MIN_INPUT);
        if width.min(height) < need {
            return Err(Error::shape(format!(
                "{width}x{height} is too small; {} discriminator scales need at least {need}",
                self.n_disc_scales
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_width < 8 {
            return Err(Error::config(
                "base_width",
                format!("{} is below the minimum of 8", self.base_width),
            ));
        }
        if self.style_dim == 0 {
            return Err(Error::config("style_dim", "must be positive"));
        }
        if self.n_disc_scales == 0 {
            return Err(Error::config("n_disc_scales", "must be at least 1"));
        }
        self.check_input(self.image_size, self.image_size)
            .map_err(|e| Error::config("image_size", e.to_string()))?;
        Ok(())
    }

    pub fn apply_overrides(&mut self, kv: &KvMap) -> Result<()> {
        if let Some(v) = kv.get_usize("base_width")? {
            self.base_width = v;
        }
        if let Some(v) = kv.get_usize("style_dim")? {
            self.style_dim = v;
        }
        if let Some(v) = kv.get_usize("n_disc_scales")? {
            self.n_disc_scales = v;
        }
        if let Some(v) = kv.get_usize("image_size")? {
            self.image_size = v;
        }
        if let Some(v) = kv.get_u64("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.get("init") {
            self.init = v.parse()?;
        }
        self.validate()
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut c = Self::default();
        c.apply_overrides(kv)?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new("net config");
        kv.set("base_width", self.base_width);
        kv.set("style_dim", self.style_dim);
        kv.set("n_disc_scales", self.n_disc_scales);
        kv.set("image_size", self.image_size);
        kv.set("seed", self.seed);
        kv.set("init", self.init);
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let c = NetConfig {
            base_width: 16,
            n_disc_scales: 2,
            image_size: 32,
            seed: 9,
            init: Init::Kaiming,
            ..Default::default()
        };
        assert_eq!(NetConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn validation() {
        let ok = NetConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            NetConfig { base_width: 4, ..ok },
            NetConfig { n_disc_scales: 0, ..ok },
            NetConfig { image_size: 258, ..ok },
            NetConfig { image_size: 32, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        assert!(NetConfig {
            image_size: 32,
            n_disc_scales: 2,
            ..ok
        }
        .validate()
        .is_ok());
    }
}
