#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use archstyle_core::imagecore::binomial_blur;
use archstyle_core::{Image, Mask};

/// Runs the built binary with a quiet logger unless `-v` is passed.
pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_archstyle"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("spawn archstyle")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Building with a window grid under a graded sky. The mask marks the
/// building.
pub fn facade(w: usize, h: usize) -> (Image, Mask) {
    let (x0, x1, y0) = (w / 8, w - w / 8, h / 3);
    let inside = move |x: usize, y: usize| x >= x0 && x < x1 && y >= y0;
    let img = Image::from_fn(w, h, |x, y| {
        if inside(x, y) {
            let window = (x - x0) % 12 >= 4 && (y - y0) % 16 >= 6 && (y - y0) % 16 < 13;
            if window {
                [0.18, 0.22, 0.30]
            } else {
                let t = ((x * 7 + y * 3) % 11) as f64 / 110.0;
                [0.62 + t, 0.52 + t, 0.42 + t]
            }
        } else {
            let t = y as f64 / h as f64;
            [0.35 + 0.5 * t, 0.55 + 0.25 * t, 0.90 - 0.3 * t]
        }
    })
    .unwrap();
    let mask = Mask::from_fn(w, h, |x, y| if inside(x, y) { 1.0 } else { 0.0 }).unwrap();
    (img, mask)
}

/// A stand-in for a translation that kept the layout but lost detail:
/// tinted, blurred twice and overlaid with a fixed pseudo-random texture.
pub fn degraded(src: &Image) -> Image {
    let planes = src.planes().map(|p| binomial_blur(&binomial_blur(&p)));
    let (w, _) = src.dims();
    let tint = [1.15, 0.85, 0.6];
    Image::from_fn(src.width(), src.height(), |x, y| {
        let n = (((x * 7919 + y * 104_729 + y * w) % 1000) as f64 / 1000.0 - 0.5) * 0.1;
        [0, 1, 2].map(|c| (planes[c].at(x, y) * tint[c] + n).clamp(0.0, 1.0))
    })
    .unwrap()
}
