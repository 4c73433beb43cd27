use archstyle_core::imagecore::{load_png, save_png};
use archstyle_net::{interpolate_style, sample_style, Direction, StyleCode, StyleSource, TranslatorBundle};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::app::{Global, InterpolateArgs};
use crate::error::{require_file, CliError, Context, Result};
use crate::pipeline::{check_working_size, resize_to, translate_at, working_dims};
use crate::settings::{Settings, DEFAULT_INFER_SIZE};

pub fn frame_name(i: usize, t: f64) -> String {
    format!("frame_{i:03}_t{t:.3}.png")
}

fn style_code(
    bundle: &TranslatorBundle,
    path: Option<&std::path::Path>,
    target: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<StyleCode> {
    match path {
        Some(p) => {
            require_file(p, "style image")?;
            let img = load_png(p).stage("load style")?;
            let img = resize_to(&img, working_dims(img.width(), img.height(), size)).stage("encode style")?;
            bundle.encode_style(target, &img).stage("encode style")
        }
        None => Ok(sample_style(rng, bundle.config.style_dim)),
    }
}

pub fn run(a: &InterpolateArgs, g: &Global, s: &Settings) -> Result<()> {
    require_file(&a.input, "input image")?;
    if a.frames < 2 {
        return Err(CliError::Usage(format!("--frames {} must be at least 2", a.frames)));
    }
    let direction: Direction = a.direction.parse().usage()?;
    let size = g
        .size
        .map_or_else(|| s.usize_or("infer_size", DEFAULT_INFER_SIZE), Ok)?;
    check_working_size(size)?;
    require_file(&a.ckpt, "checkpoint")?;
    let (bundle, _) = archstyle_net::checkpoint::load(&a.ckpt).stage("load checkpoint")?;
    let input = load_png(&a.input).stage("load input")?;
    let seed = s.kv().get_u64("seed").usage()?.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = direction.domains().1;
    let sa = style_code(&bundle, a.style_a.as_deref(), target, size, &mut rng)?;
    let sb = style_code(&bundle, a.style_b.as_deref(), target, size, &mut rng)?;
    std::fs::create_dir_all(&g.out_dir).stage("create output directory")?;
    for i in 0..a.frames {
        let t = i as f64 / (a.frames - 1) as f64;
        let code = interpolate_style(&sa, &sb, t).stage("interpolate")?;
        let out = translate_at(&bundle, &input, StyleSource::Code(&code), direction, size, "translate")?;
        let path = g.out_dir.join(frame_name(i, t));
        save_png(&out, &path).stage("write frame")?;
        println!("{}", path.display());
    }
    Ok(())
}
