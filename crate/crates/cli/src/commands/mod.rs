pub mod eval;
pub mod interpolate;
pub mod toy;
pub mod train;
pub mod transfer;

use std::path::{Path, PathBuf};

use crate::error::{Context, Result};

/// `explicit` or `<out_dir>/<default_name>`; creates the parent directory.
pub(crate) fn output_path(explicit: Option<&Path>, out_dir: &Path, default_name: &str) -> Result<PathBuf> {
    let path = explicit.map_or_else(|| out_dir.join(default_name), Path::to_path_buf);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).stage("create output directory")?;
    }
    Ok(path)
}
