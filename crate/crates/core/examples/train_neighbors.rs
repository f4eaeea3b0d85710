//! Trains a skip-gram model on a linear-walk synthetic course and prints the
//! nearest neighbors of a few screens. Screens that share neighbors in the
//! walk end up close in embedding space.
//!
//! ```bash
//! cargo run --release -p pathlens --example train_neighbors
//! ```

use pathlens::corpus::{build_sequences, build_vocab};
use pathlens::synth::gen_corpus;
use pathlens::{skipgram, Behavior, SkipGramConfig, SynthSpec};

fn main() -> Result<(), pathlens::Error> {
    let spec = SynthSpec { n_students: 100, n_lessons: 3, screens_per_lesson: 10, behavior: Behavior::Linear, ..Default::default() };
    let corpus = gen_corpus(&spec)?;
    let sequences = build_sequences(&corpus.events);
    let vocab = build_vocab(&sequences, 1)?;
    let config = SkipGramConfig { vector_size: 8, window: 2, ..Default::default() };
    let (model, trace) = skipgram::train(&sequences, &vocab, &config)?;
    println!("mean pair loss per epoch: {:?}", trace.epochs);
    println!("corpus loss: {:.4}", model.corpus_loss(&sequences, config.window)?);

    for token in ["s:1", "s:10", "s:15", "s:30"] {
        let nn = model.nearest_neighbors(token, 3)?;
        let shown: Vec<String> = nn.iter().map(|(t, c)| format!("{t} ({c:.3})")).collect();
        println!("{token:>5} -> {}", shown.join(", "));
    }
    Ok(())
}
