//! Regenerates the offline fixture corpus.
//!
//! Keys are freshly generated on every run, so the pipeline goldens must be
//! refreshed afterwards (run the acceptance suite with UPDATE_GOLDEN=1).

use std::path::PathBuf;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/fixtures/corpus"));
    match certaudit_testkit::corpus::build(&dir) {
        Ok(n) => println!("wrote {n} targets into {}", dir.display()),
        Err(e) => {
            eprintln!("fixture generation failed: {e}");
            std::process::exit(1);
        }
    }
}
