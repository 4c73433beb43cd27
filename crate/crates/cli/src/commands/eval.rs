use archstyle_core::blending::blend_pipeline;
use archstyle_core::imagecore::{load_png, save_png};
use archstyle_core::metrics::eval_corpus;
use archstyle_core::segmentation::load_mask;

use crate::app::{BlendArgs, EvalArgs, Global};
use crate::error::{require_dir, require_file, CliError, Context, Result};
use crate::settings::Settings;

pub fn run(a: &EvalArgs, g: &Global, s: &Settings) -> Result<()> {
    require_dir(&a.results, "results directory")?;
    require_dir(&a.refs, "references directory")?;
    if let Some(m) = &a.masks {
        require_dir(m, "masks directory")?;
    }
    if let Some(p) = &a.probs {
        require_file(p, "probability table")?;
    }
    let mut params = s.metric_params()?;
    if let Some(size) = g.size {
        params.eval_size = size;
        params.validate().usage()?;
    }
    let report = eval_corpus(&a.results, &a.refs, a.masks.as_deref(), a.probs.as_deref(), &params).stage("eval")?;
    let path = super::output_path(a.output.as_deref(), &g.out_dir, "eval.csv")?;
    report.write_csv(&path).stage("write report")?;
    println!("images          {}", report.rows.len());
    println!("e-ssim          {:.4}", report.mean_e_ssim());
    println!("ssim            {:.4}", report.mean_ssim());
    if let Some(iou) = report.mean_iou() {
        println!("iou             {iou:.4}");
    }
    if let Some(acc) = report.accuracy {
        println!("accuracy        {acc:.4}");
    }
    if let Some(is) = report.inception_score {
        println!("inception score {is:.4}");
    }
    println!("report          {}", path.display());
    Ok(())
}

pub fn blend(a: &BlendArgs, g: &Global, s: &Settings) -> Result<()> {
    require_file(&a.translated, "translated image")?;
    require_file(&a.source, "source image")?;
    require_file(&a.mask, "mask")?;
    let mut params = s.blend_params()?;
    if let Some(beta) = a.beta {
        params.beta = beta;
    }
    if let Some(iters) = a.iters {
        params.iterations = iters;
    }
    if let Some(solver) = &a.solver {
        params.solver = solver.parse().usage()?;
    }
    params.validate().usage()?;
    let translated = load_png(&a.translated).stage("load translated")?;
    let source = load_png(&a.source).stage("load source")?;
    let mask = load_mask(&a.mask, s.mask_threshold()?).usage()?;
    if translated.dims() != source.dims() || mask.dims() != source.dims() {
        return Err(CliError::Usage(format!(
            "translated {:?}, source {:?} and mask {:?} must share dims",
            translated.dims(),
            source.dims(),
            mask.dims()
        )));
    }
    let outcome = blend_pipeline(&translated, &source, &mask, &params).stage("blend")?;
    log::info!("energy per sweep: {:?}", outcome.energy_history);
    if !outcome.converged {
        log::warn!(
            "blending stopped before reaching cg_tol (residual {:.3e})",
            outcome.residual
        );
    }
    let path = super::output_path(a.output.as_deref(), &g.out_dir, "blend.png")?;
    save_png(&outcome.image, &path).stage("write output")?;
    println!("{}", path.display());
    Ok(())
}
