//! Write the reference synthetic dataset and its fitted bundle.
//!
//! `cargo run -p aaad-io --example reference_data -- [out_dir]`, default
//! `data/`.

use std::path::PathBuf;

use aaad_core::dataset::{write_forced_fixation, write_psychometric, FitOptions};
use aaad_io::reference::{all_truths, generate_dataset, reference_bundle, Design, REFERENCE_SEED};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "data".into()));
    std::fs::create_dir_all(&dir)?;
    let (psy, ff) = generate_dataset(&all_truths(), &Design::default(), REFERENCE_SEED);
    std::fs::write(dir.join("psychometric.csv"), write_psychometric(&psy))?;
    std::fs::write(dir.join("forced_fixation.csv"), write_forced_fixation(&ff))?;
    let bundle = reference_bundle(REFERENCE_SEED, &FitOptions::default())?;
    std::fs::write(dir.join("reference-bundle.json"), bundle.to_text())?;
    println!("{} psychometric and {} forced-fixation rows written to {}", psy.len(), ff.len(), dir.display());
    Ok(())
}
