//! The whole pipeline on the bundled landmark fixture, then the input-length
//! sweep and the ablation table.
//!
//!     cargo run --example pipeline [OUT_DIR]

use std::path::{Path, PathBuf};

use mmrerank::harness::Harness;

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/landmarks/pipeline.toml");
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mmrerank-demo"));
    let mut h = Harness::from_config_file(&config, Some(out.clone()), None).unwrap();
    for stage in h.run_all().unwrap() {
        println!("{:<15} {}", stage.stage, if stage.skipped { "skipped" } else { "done" });
    }
    print!("{}", std::fs::read_to_string(out.join("eval_table.txt")).unwrap());

    h.sweep_doccount(None).unwrap();
    print!("\n{}", h.load_sweep().unwrap().render());
    h.ablate().unwrap();
    print!("\n{}", h.load_ablation().unwrap().render());
    println!("\nartifacts in {}", out.display());
}
