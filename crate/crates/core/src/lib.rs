//! Continuous representations of learner clickstreams.
//!
//! Event logs become per-student token sequences ([`corpus`]), a skip-gram
//! model learns a vector per token ([`skipgram`]), t-SNE maps the vectors
//! to 2-D ([`tsne`]), and a grid sweep over window and vector size builds a
//! gallery of plots that a domain expert rates ([`gallery`], [`serve`]).
//! [`synth`] generates corpora with planted behavior for testing.

pub mod corpus;
pub mod gallery;
pub mod pipeline;
pub mod serve;
pub mod skipgram;
pub mod synth;
pub mod tsne;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    SkipGram(#[from] skipgram::SkipGramError),
    #[error(transparent)]
    Tsne(#[from] tsne::TsneError),
    #[error(transparent)]
    Gallery(#[from] gallery::GalleryError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub use corpus::{Sequence, TokenVocab};
pub use gallery::{GalleryManifest, ProjectionScope, SweepGrid, SweepPlan};
pub use skipgram::{SkipGramConfig, SkipGramModel, TrainingMode};
pub use synth::{Behavior, SynthSpec};
pub use tsne::{Projection, TsneConfig};
