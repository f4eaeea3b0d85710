//! Runs a small (window, vector size) sweep over a decorated synthetic
//! corpus with one projection per outcome group, rates a plot and prints
//! the resulting manifest.
//!
//! ```bash
//! cargo run --release -p pathlens --example sweep_gallery [OUT_DIR]
//! ```

use std::path::PathBuf;

use pathlens::corpus::{build_sequences, build_vocab, decorate_outcome, MissingOutcomePolicy};
use pathlens::gallery::{self, ProjectionScope, SweepGrid, SweepPlan};
use pathlens::synth::gen_corpus;
use pathlens::{SkipGramConfig, SynthSpec, TsneConfig};

fn main() -> Result<(), pathlens::Error> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathlens-gallery-example"));
    let spec = SynthSpec { n_students: 60, n_lessons: 3, screens_per_lesson: 12, ..Default::default() };
    let corpus = gen_corpus(&spec)?;
    let sequences = decorate_outcome(&build_sequences(&corpus.events), &corpus.outcomes, MissingOutcomePolicy::Error)?;
    let vocab = build_vocab(&sequences, 1)?;

    let plan = SweepPlan {
        sequences: &sequences,
        vocab: &vocab,
        metadata: &corpus.metadata,
        grid: SweepGrid { windows: vec![1, 3], vector_sizes: vec![2, 7, 12] },
        base: SkipGramConfig::default(),
        tsne: TsneConfig { perplexity: 10.0, ..Default::default() },
        scope: ProjectionScope::PerGroup,
        parallel: true,
    };
    let manifest = gallery::run_sweep(&plan, &out)?;
    for e in &manifest.entries {
        println!("{:<8} files: {:?}", e.plot_id, e.files.keys().collect::<Vec<_>>());
    }
    let rated = gallery::record_rating(&out, "w3-d7", 4)?;
    println!("w3-d7 rating: {:?}", rated.entry("w3-d7").and_then(|e| e.rating));
    println!("gallery written to {}", out.display());
    Ok(())
}
