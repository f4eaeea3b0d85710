use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pathlens::corpus::{ForumScheme, MissingOutcomePolicy};
use pathlens::gallery::{self, ProjectionScope, SweepGrid, SweepPlan};
use pathlens::pipeline::{self, IngestOptions};
use pathlens::synth::{gen_corpus, Behavior, SynthSpec};
use pathlens::{Error, SkipGramConfig, TrainingMode, TsneConfig};

#[derive(Parser)]
#[command(name = "pathlens", version, about = "Skip-gram maps of learner clickstreams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    #[value(name = "per_topic")]
    PerTopic,
    #[value(name = "single_token")]
    SingleToken,
}

#[derive(Clone, Copy, ValueEnum)]
enum MissingArg {
    Error,
    Skip,
}

#[derive(Subcommand)]
enum Command {
    /// Turn event logs into a corpus directory.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        forum: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "per_topic")]
        forum_scheme: SchemeArg,
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "error")]
        on_missing: MissingArg,
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a skip-gram model on a corpus directory.
    Train {
        #[arg(long)]
        seqs: PathBuf,
        #[arg(long)]
        vector_size: usize,
        #[arg(long)]
        window: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 0.025)]
        lr: f64,
        #[arg(long, default_value = "softmax")]
        mode: TrainingMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project a model's token vectors to 2-D.
    Tsne {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic course's event, forum, outcome and metadata CSVs.
    Synth {
        #[arg(long, default_value_t = 100)]
        students: usize,
        #[arg(long, default_value_t = 6)]
        lessons: usize,
        #[arg(long, default_value_t = 20)]
        screens_per_lesson: usize,
        #[arg(long, default_value = "by-outcome")]
        behavior: Behavior,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0.5)]
        pass_fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        forum_rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and project every (window, vector size) cell into a gallery.
    Sweep {
        #[arg(long)]
        seqs: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        windows: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,7,12,17,22,27,32")]
        vector_sizes: Vec<usize>,
        #[arg(long, default_value = "joint")]
        scope: ProjectionScope,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value = "softmax")]
        mode: TrainingMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        /// Run cells one at a time.
        #[arg(long)]
        serial: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rate a gallery plot from 1 to 5.
    Rate { gallery: PathBuf, plot_id: String, rating: i64 },
    /// Serve the gallery API and viewer.
    Serve {
        gallery: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { events, forum, forum_scheme, outcomes, on_missing, metadata, min_count, out } => {
            let opts = IngestOptions {
                events,
                forum,
                forum_scheme: match forum_scheme {
                    SchemeArg::PerTopic => ForumScheme::PerTopic,
                    SchemeArg::SingleToken => ForumScheme::SingleToken,
                },
                outcomes,
                on_missing: match on_missing {
                    MissingArg::Error => MissingOutcomePolicy::Error,
                    MissingArg::Skip => MissingOutcomePolicy::Skip,
                },
                metadata,
                min_count,
            };
            let s = pipeline::ingest(&opts, &out)?;
            println!("{} students, {} tokens, {} vocabulary entries", s.students, s.tokens, s.vocab_size);
        }
        Command::Train { seqs, vector_size, window, epochs, lr, mode, seed, workers, out } => {
            let config = SkipGramConfig {
                vector_size,
                window,
                epochs,
                learning_rate: lr,
                mode,
                seed,
                workers,
                ..Default::default()
            };
            let (_, trace) = pipeline::train_corpus_dir(&seqs, &config, &out)?;
            for (e, loss) in trace.epochs.iter().enumerate() {
                println!("epoch {}: mean loss {loss:.6}", e + 1);
            }
        }
        Command::Tsne { model, perplexity, iters, seed, out } => {
            let config = TsneConfig {
                perplexity,
                iterations: iters,
                seed,
                early_exaggeration_iters: TsneConfig::default().early_exaggeration_iters.min(iters),
                ..Default::default()
            };
            let p = pipeline::project_model(&model, &config, &out)?;
            if let Some(kl) = p.kl_trace.last() {
                println!("final KL {kl:.6}");
            }
        }
        Command::Synth {
            students,
            lessons,
            screens_per_lesson,
            behavior,
            noise,
            pass_fraction,
            forum_rate,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                n_students: students,
                n_lessons: lessons,
                screens_per_lesson,
                behavior,
                noise,
                seed,
                pass_fraction,
                forum_rate,
            };
            pipeline::write_synth_dir(&gen_corpus(&spec)?, &out)?;
        }
        Command::Sweep {
            seqs,
            windows,
            vector_sizes,
            scope,
            epochs,
            mode,
            seed,
            perplexity,
            iters,
            serial,
            out,
        } => {
            let (sequences, vocab, metadata) = pipeline::load_corpus_dir(&seqs)?;
            let plan = SweepPlan {
                sequences: &sequences,
                vocab: &vocab,
                metadata: &metadata,
                grid: SweepGrid { windows, vector_sizes },
                base: SkipGramConfig { epochs, mode, seed, ..Default::default() },
                tsne: TsneConfig {
                    perplexity,
                    iterations: iters,
                    early_exaggeration_iters: TsneConfig::default().early_exaggeration_iters.min(iters),
                    ..Default::default()
                },
                scope,
                parallel: !serial,
            };
            let manifest = gallery::run_sweep(&plan, &out)?;
            for e in &manifest.entries {
                match &e.error {
                    Some(err) => println!("{}: FAILED ({err})", e.plot_id),
                    None => println!("{}: ok", e.plot_id),
                }
            }
        }
        Command::Rate { gallery, plot_id, rating } => {
            gallery::record_rating(&gallery, &plot_id, rating)?;
            println!("{plot_id} rated {rating}");
        }
        Command::Serve { gallery, bind } => {
            let rt = tokio::runtime::Runtime::new()?;
            println!("serving {} on http://{bind}", gallery.display());
            rt.block_on(pathlens::serve::serve(&gallery, bind))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
