//! Shared pieces of the commands: working resolution, branch translation
//! and corpus loading.

use std::path::{Path, PathBuf};

use archstyle_core::imagecore::{alpha_composite, load_png, resize_bilinear};
use archstyle_core::metrics::shorter_side_dims;
use archstyle_core::segmentation::{split_regions, FillPolicy};
use archstyle_core::{Image, Mask};
use archstyle_net::checkpoint;
use archstyle_net::{Direction, StyleSource, TranslatorBundle};

use crate::error::{require_dir, CliError, Context, Result};

/// Networks need sides divisible by 4 and the style encoder needs 32.
pub const MIN_WORKING_SIZE: usize = 32;

/// Dims with the shorter side at `target`, each rounded to a multiple of 4.
pub fn working_dims(width: usize, height: usize, target: usize) -> (usize, usize) {
    let (w, h) = shorter_side_dims(width, height, target);
    let round = |v: usize| ((v + 2) / 4 * 4).max(4);
    (round(w), round(h))
}

pub fn resize_to(img: &Image, dims: (usize, usize)) -> archstyle_core::Result<Image> {
    if img.dims() == dims {
        Ok(img.clone())
    } else {
        resize_bilinear(img, dims.0, dims.1)
    }
}

pub fn check_working_size(size: usize) -> Result<()> {
    if size < MIN_WORKING_SIZE {
        return Err(CliError::Usage(format!(
            "--size {size} is below the minimum of {MIN_WORKING_SIZE}"
        )));
    }
    Ok(())
}

/// Loads a branch checkpoint and checks its recorded branch, if any.
pub fn load_branch(path: &Path, branch: &str) -> Result<TranslatorBundle> {
    crate::error::require_file(path, &format!("{branch} checkpoint"))?;
    let (bundle, meta) = checkpoint::load(path).stage("load checkpoint")?;
    match meta.get("branch") {
        Some(b) if b != branch => Err(CliError::Runtime {
            stage: "load checkpoint".into(),
            message: format!(
                "{} was trained for the `{b}` branch, expected `{branch}`",
                path.display()
            ),
        }),
        _ => Ok(bundle),
    }
}

/// Translates `x` at the working resolution and resizes back.
pub fn translate_at(
    bundle: &TranslatorBundle,
    x: &Image,
    style: StyleSource,
    direction: Direction,
    size: usize,
    stage: &str,
) -> Result<Image> {
    let dims = working_dims(x.width(), x.height(), size);
    let xs = resize_to(x, dims).stage(stage)?;
    let out = bundle.translate(&xs, style, direction).stage(stage)?;
    resize_to(&out, x.dims()).stage(stage)
}

/// Style image for one branch, at its own working resolution.
fn branch_style(style: &Image, mask: &Mask, fill: FillPolicy, size: usize, fg: bool) -> Result<Image> {
    let pair = split_regions(style, mask, fill).stage("segment style image")?;
    let img = if fg { pair.foreground } else { pair.background };
    let dims = working_dims(img.width(), img.height(), size);
    resize_to(&img, dims).stage("resize style image")
}

pub struct TransferInputs<'a> {
    pub input: &'a Image,
    pub input_mask: &'a Mask,
    pub style: &'a Image,
    pub style_mask: &'a Mask,
    pub fill: FillPolicy,
    pub direction: Direction,
    pub size: usize,
}

/// Splits, translates each branch with its own networks and composites the
/// branches with the input mask. Output has the input dims.
pub fn transfer(t: &TransferInputs, fg_net: &TranslatorBundle, bg_net: &TranslatorBundle) -> Result<Image> {
    let pair = split_regions(t.input, t.input_mask, t.fill).stage("segment input image")?;
    let fg_style = branch_style(t.style, t.style_mask, t.fill, t.size, true)?;
    let bg_style = branch_style(t.style, t.style_mask, t.fill, t.size, false)?;
    let fg = translate_at(
        fg_net,
        &pair.foreground,
        StyleSource::Image(&fg_style),
        t.direction,
        t.size,
        "translate foreground",
    )?;
    let bg = translate_at(
        bg_net,
        &pair.background,
        StyleSource::Image(&bg_style),
        t.direction,
        t.size,
        "translate background",
    )?;
    alpha_composite(&fg, &bg, t.input_mask).stage("composite")
}

/// PNG files of a directory, sorted by name.
pub fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    require_dir(dir, "corpus directory")?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .stage("list corpus")?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_corpus(dir: &Path, min: usize) -> Result<Vec<Image>> {
    let files = png_files(dir)?;
    if files.len() < min {
        return Err(CliError::Usage(format!(
            "{} holds {} PNG images; at least {min} are required",
            dir.display(),
            files.len()
        )));
    }
    files.iter().map(|f| load_png(f).stage("load corpus")).collect()
}
