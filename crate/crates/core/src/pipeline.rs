//! File-level pipeline stages: ingest logs into a corpus directory, train a
//! model file, project it, and write synthetic logs.
//!
//! A corpus directory holds `sequences.txt`, `vocab.tsv` and optionally
//! `metadata.csv`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::corpus::{
    self, build_sequences, build_vocab, decorate_outcome, interleave_forum, parse_events,
    parse_forum, parse_metadata, parse_outcomes, read_sequences, write_sequences, ForumScheme,
    MissingOutcomePolicy, ScreenMetadata, Sequence, TokenVocab,
};
use crate::skipgram::{self, LossTrace, SkipGramConfig, SkipGramModel};
use crate::synth::SynthCorpus;
use crate::tsne::{self, ProjectionFile, TsneConfig};
use crate::Error;

pub const SEQUENCES_FILE: &str = "sequences.txt";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const METADATA_FILE: &str = "metadata.csv";

pub const EVENTS_CSV: &str = "events.csv";
pub const FORUM_CSV: &str = "forum.csv";
pub const OUTCOMES_CSV: &str = "outcomes.csv";

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub events: PathBuf,
    pub forum: Option<PathBuf>,
    pub forum_scheme: ForumScheme,
    pub outcomes: Option<PathBuf>,
    pub on_missing: MissingOutcomePolicy,
    pub metadata: Option<PathBuf>,
    pub min_count: u64,
}

impl IngestOptions {
    pub fn new(events: impl Into<PathBuf>) -> Self {
        Self {
            events: events.into(),
            forum: None,
            forum_scheme: ForumScheme::PerTopic,
            outcomes: None,
            on_missing: MissingOutcomePolicy::Error,
            metadata: None,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestSummary {
    pub students: usize,
    pub tokens: usize,
    pub vocab_size: usize,
}

fn open(path: &Path) -> Result<BufReader<File>, Error> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Parses the logs, applies the requested decorations and writes a corpus
/// directory.
pub fn ingest(opts: &IngestOptions, out_dir: &Path) -> Result<IngestSummary, Error> {
    let mut events = parse_events(open(&opts.events)?)?;
    if let Some(forum) = &opts.forum {
        let posts = parse_forum(open(forum)?)?;
        events = interleave_forum(&events, &posts, opts.forum_scheme)?;
    }
    let mut sequences = build_sequences(&events);
    if let Some(outcomes) = &opts.outcomes {
        let outcomes = parse_outcomes(open(outcomes)?)?;
        sequences = decorate_outcome(&sequences, &outcomes, opts.on_missing)?;
    }
    let vocab = build_vocab(&sequences, opts.min_count)?;
    fs::create_dir_all(out_dir)?;
    write_corpus_dir(out_dir, &sequences, &vocab)?;
    if let Some(md) = &opts.metadata {
        let metadata = parse_metadata(open(md)?)?;
        corpus::write_metadata(File::create(out_dir.join(METADATA_FILE))?, &metadata)?;
    }
    Ok(IngestSummary {
        students: sequences.len(),
        tokens: sequences.iter().map(|s| s.tokens.len()).sum(),
        vocab_size: vocab.len(),
    })
}

pub fn write_corpus_dir(dir: &Path, sequences: &[Sequence], vocab: &TokenVocab) -> Result<(), Error> {
    let mut seq_out = BufWriter::new(File::create(dir.join(SEQUENCES_FILE))?);
    write_sequences(&mut seq_out, sequences)?;
    seq_out.flush()?;
    let mut vocab_out = BufWriter::new(File::create(dir.join(VOCAB_FILE))?);
    for (t, c) in vocab.tokens().iter().zip(vocab.counts()) {
        writeln!(vocab_out, "{t}\t{c}")?;
    }
    vocab_out.flush()?;
    Ok(())
}

/// Sequences, vocabulary and (possibly empty) metadata of a corpus directory.
pub fn load_corpus_dir(dir: &Path) -> Result<(Vec<Sequence>, TokenVocab, ScreenMetadata), Error> {
    let sequences = read_sequences(open(&dir.join(SEQUENCES_FILE))?)?;
    let vocab_path = dir.join(VOCAB_FILE);
    let vocab = if vocab_path.is_file() {
        let text = fs::read_to_string(&vocab_path)?;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || corpus::CorpusError::MalformedRow(i as u64 + 1);
            let (t, c) = line.split_once('\t').ok_or_else(bad)?;
            entries.push((t.to_string(), c.parse().map_err(|_| bad())?));
        }
        TokenVocab::from_entries(entries)
    } else {
        build_vocab(&sequences, 1)?
    };
    let md_path = dir.join(METADATA_FILE);
    let metadata = if md_path.is_file() {
        parse_metadata(open(&md_path)?)?
    } else {
        ScreenMetadata::new()
    };
    Ok((sequences, vocab, metadata))
}

/// Trains on a corpus directory and writes the model file.
pub fn train_corpus_dir(
    seqs_dir: &Path,
    config: &SkipGramConfig,
    out: &Path,
) -> Result<(SkipGramModel, LossTrace), Error> {
    let (sequences, vocab, _) = load_corpus_dir(seqs_dir)?;
    let (model, trace) = skipgram::train(&sequences, &vocab, config)?;
    model.save(out)?;
    Ok((model, trace))
}

/// Projects every token of a model file to 2-D and writes the projection.
pub fn project_model(model_path: &Path, config: &TsneConfig, out: &Path) -> Result<ProjectionFile, Error> {
    let model = SkipGramModel::load(model_path)?;
    let rows: Vec<Vec<f64>> = (0..model.vocab_size()).map(|i| model.input_row(i).to_vec()).collect();
    let projection = tsne::run_tsne(&rows, config)?;
    let file = projection.to_file(model.vocab().tokens());
    file.save(out)?;
    Ok(file)
}

/// Writes the four CSV inputs of `ingest`.
pub fn write_synth_dir(corpus: &SynthCorpus, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    corpus::write_events(BufWriter::new(File::create(dir.join(EVENTS_CSV))?), &corpus.events)?;
    corpus::write_forum(BufWriter::new(File::create(dir.join(FORUM_CSV))?), &corpus.forum)?;
    corpus::write_outcomes(BufWriter::new(File::create(dir.join(OUTCOMES_CSV))?), &corpus.outcomes)?;
    corpus::write_metadata(BufWriter::new(File::create(dir.join(METADATA_FILE))?), &corpus.metadata)?;
    Ok(())
}
