//! Drives the whole eight-stage pipeline through the library API: ingest,
//! match, expand, coc, prompt, interview, eval, report. Artifacts land in a
//! temporary directory under a run id derived from the configuration hash.
//!
//! ```bash
//! cargo run --example full_pipeline
//! ```

use std::path::Path;

use deprofile::pipeline::{run_all, PipelineContext, Stage};

fn main() -> deprofile::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/run.toml");
    let out_dir = std::env::temp_dir().join("deprofile-example");

    // Overrides use the same dotted paths as the CLI's --set flag and
    // participate in the run hash; the output directory does not.
    let overrides = vec![format!("paths.out_dir={}", out_dir.display())];
    let ctx = PipelineContext::new(&config, &overrides, false)?;
    println!("run {} -> {}", ctx.short_hash(), ctx.run_dir.display());

    run_all(&ctx)?;

    for stage in Stage::ALL {
        let dir = ctx.stage_dir(stage);
        let files = std::fs::read_dir(&dir)
            .map(|entries| entries.count())
            .unwrap_or(0);
        println!("  {:<10} {} files", stage.name(), files);
    }

    let table = std::fs::read_to_string(ctx.stage_file(Stage::Report, "table.txt"))
        .expect("report stage writes the table");
    println!("\n{table}");
    Ok(())
}
