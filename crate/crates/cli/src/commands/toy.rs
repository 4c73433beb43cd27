use archstyle_core::imagecore::{save_gray_png, save_png};
use archstyle_net::data::toy_corpus;

use crate::app::{Global, ToyArgs};
use crate::error::{CliError, Context, Result};
use crate::settings::Settings;

/// Writes `<out-dir>/domain<d>/toy_NNN.png` and the square masks to
/// `<out-dir>/domain<d>_masks/toy_NNN.png`.
pub fn run(a: &ToyArgs, g: &Global, s: &Settings) -> Result<()> {
    if a.count == 0 {
        return Err(CliError::Usage("--count must be positive".into()));
    }
    let size = g.size.unwrap_or(32);
    let seed = s.kv().get_u64("seed").usage()?.unwrap_or(0);
    let pairs = toy_corpus(a.domain, a.count, size, seed).usage()?;
    let img_dir = g.out_dir.join(format!("domain{}", a.domain));
    let mask_dir = g.out_dir.join(format!("domain{}_masks", a.domain));
    std::fs::create_dir_all(&img_dir).stage("create output directory")?;
    std::fs::create_dir_all(&mask_dir).stage("create output directory")?;
    for (i, (img, mask)) in pairs.iter().enumerate() {
        let name = format!("toy_{i:03}.png");
        save_png(img, img_dir.join(&name)).stage("write image")?;
        save_gray_png(&mask.as_plane(), mask_dir.join(&name)).stage("write mask")?;
    }
    println!("{}", img_dir.display());
    Ok(())
}
