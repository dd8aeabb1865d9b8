//! Regenerates the committed 16-8-4 model and 32-vector set under `tests/fixtures`.

use std::path::Path;

use rfmvm::containers::{write_vectors, write_weights};
use rfmvm::inference::synthetic_fixture;

fn main() -> rfmvm::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let (model, set) = synthetic_fixture(&[16, 8, 4], 32, 4, 2024)?;
    write_weights(&dir.join("model.wts"), model.layers())?;
    write_vectors(&dir.join("vectors.vec"), &set)?;
    println!("wrote {} layers and {} vectors to {}", model.layers().len(), set.records.len(), dir.display());
    Ok(())
}
