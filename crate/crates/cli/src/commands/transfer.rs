use archstyle_core::blending::blend_pipeline;
use archstyle_core::imagecore::{load_png, save_png};
use archstyle_core::segmentation::load_mask;
use archstyle_net::Direction;

use crate::app::{Global, TransferArgs};
use crate::error::{require_file, CliError, Context, Result};
use crate::pipeline::{check_working_size, load_branch, transfer, TransferInputs};
use crate::settings::{Settings, DEFAULT_INFER_SIZE};

pub fn run(a: &TransferArgs, g: &Global, s: &Settings) -> Result<()> {
    for (p, what) in [
        (&a.input, "input image"),
        (&a.input_mask, "input mask"),
        (&a.style, "style image"),
        (&a.style_mask, "style mask"),
    ] {
        require_file(p, what)?;
    }
    let direction: Direction = a.direction.parse().usage()?;
    let size = g
        .size
        .map_or_else(|| s.usize_or("infer_size", DEFAULT_INFER_SIZE), Ok)?;
    check_working_size(size)?;
    let blend_params = s.blend_params()?;
    let fill = s.fill()?;
    let threshold = s.mask_threshold()?;

    let input = load_png(&a.input).stage("load input")?;
    let input_mask = load_mask(&a.input_mask, threshold).usage()?;
    let style = load_png(&a.style).stage("load style")?;
    let style_mask = load_mask(&a.style_mask, threshold).usage()?;
    if input.dims() != input_mask.dims() || style.dims() != style_mask.dims() {
        return Err(CliError::Usage(format!(
            "mask dims must match their images: input {:?} vs mask {:?}, style {:?} vs mask {:?}",
            input.dims(),
            input_mask.dims(),
            style.dims(),
            style_mask.dims()
        )));
    }
    let fg_net = load_branch(&a.fg_ckpt, "fg")?;
    let bg_net = load_branch(&a.bg_ckpt, "bg")?;

    let started = std::time::Instant::now();
    let inputs = TransferInputs {
        input: &input,
        input_mask: &input_mask,
        style: &style,
        style_mask: &style_mask,
        fill,
        direction,
        size,
    };
    let mut out = transfer(&inputs, &fg_net, &bg_net)?;
    if a.blend {
        let outcome = blend_pipeline(&out, &input, &input_mask, &blend_params).stage("blend")?;
        if !outcome.converged {
            log::warn!(
                "blending stopped before reaching cg_tol (residual {:.3e})",
                outcome.residual
            );
        }
        out = outcome.image;
    }
    log::info!("transfer took {:.2}s", started.elapsed().as_secs_f64());
    let path = super::output_path(a.output.as_deref(), &g.out_dir, "transfer.png")?;
    save_png(&out, &path).stage("write output")?;
    println!("{}", path.display());
    Ok(())
}
