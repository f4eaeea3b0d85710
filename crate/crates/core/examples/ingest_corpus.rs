//! Builds a corpus directory from raw event, forum and outcome CSVs, then
//! reads it back and prints each student's first few tokens.
//!
//! ```bash
//! cargo run -p pathlens --example ingest_corpus
//! ```

use std::fs;

use pathlens::corpus::{ForumScheme, MissingOutcomePolicy};
use pathlens::pipeline::{self, IngestOptions};

const EVENTS: &str = "\
user_id,screen_id,interaction_id
sam,s:3,3
sam,s:1,1
sam,s:2,2
sam,s:4,5
ana,s:1,1
ana,s:4,2
ana,s:2,3
";

const FORUM: &str = "\
user_id,interaction_id,topic
sam,4,L1
";

const OUTCOMES: &str = "\
user_id,passed
sam,true
ana,false
";

fn main() -> Result<(), pathlens::Error> {
    let dir = std::env::temp_dir().join("pathlens-ingest-example");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("events.csv"), EVENTS)?;
    fs::write(dir.join("forum.csv"), FORUM)?;
    fs::write(dir.join("outcomes.csv"), OUTCOMES)?;

    let opts = IngestOptions {
        forum: Some(dir.join("forum.csv")),
        forum_scheme: ForumScheme::PerTopic,
        outcomes: Some(dir.join("outcomes.csv")),
        on_missing: MissingOutcomePolicy::Error,
        ..IngestOptions::new(dir.join("events.csv"))
    };
    let summary = pipeline::ingest(&opts, &dir.join("corpus"))?;
    println!("{summary:?}");

    let (sequences, vocab, _) = pipeline::load_corpus_dir(&dir.join("corpus"))?;
    for s in &sequences {
        println!("{}: {}", s.user_id, s.tokens.join(" "));
    }
    for (t, c) in vocab.tokens().iter().zip(vocab.counts()) {
        println!("  {t}\t{c}");
    }
    Ok(())
}
