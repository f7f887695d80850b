use std::path::Path;

use bagau_core::phantom::generate_dataset;
use bagau_core::volume::MANIFEST_FILE;
use bagau_core::Result;

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let manifest = generate_dataset(&cfg.phantom, out)?;
    log::info!("wrote {} phantom cases", manifest.cases.len());
    println!("{}", out.join(MANIFEST_FILE).display());
    Ok(())
}
