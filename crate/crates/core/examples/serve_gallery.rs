//! Builds a tiny gallery, serves it on a local port and exercises the API:
//! fetch the manifest, fetch a plot, post a rating, and show that an
//! invalid rating is refused.
//!
//! ```bash
//! cargo run --release -p pathlens --example serve_gallery
//! ```
//!
//! To keep a gallery running for the viewer, use the binary instead:
//! `pathlens serve GALLERY --bind 127.0.0.1:8080`.

use pathlens::corpus::{build_sequences, build_vocab};
use pathlens::gallery::{self, ProjectionScope, SweepGrid, SweepPlan};
use pathlens::synth::gen_corpus;
use pathlens::{serve, SkipGramConfig, SynthSpec, TsneConfig};
use tokio::net::TcpListener;

#[tokio::main]
async fn main() -> Result<(), pathlens::Error> {
    let dir = std::env::temp_dir().join("pathlens-serve-example");
    let _ = std::fs::remove_dir_all(&dir);
    let spec = SynthSpec { n_students: 30, n_lessons: 2, screens_per_lesson: 9, ..Default::default() };
    let corpus = gen_corpus(&spec)?;
    let sequences = build_sequences(&corpus.events);
    let vocab = build_vocab(&sequences, 1)?;
    let plan = SweepPlan {
        sequences: &sequences,
        vocab: &vocab,
        metadata: &corpus.metadata,
        grid: SweepGrid { windows: vec![1, 2], vector_sizes: vec![3] },
        base: SkipGramConfig { epochs: 2, ..Default::default() },
        tsne: TsneConfig { perplexity: 4.0, iterations: 300, ..Default::default() },
        scope: ProjectionScope::Joint,
        parallel: false,
    };
    gallery::run_sweep(&plan, &dir)?;

    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    let served = dir.clone();
    tokio::spawn(async move { serve::serve_on(listener, &served).await });

    let client = reqwest::Client::new();
    let base = format!("http://{addr}");
    for (path, body) in [
        ("/api/manifest", None),
        ("/api/plots/w2-d3", None),
        ("/api/plots/w9-d9", None),
        ("/api/ratings", Some(r#"{"plot_id": "w2-d3", "rating": 5, "note": "clean"}"#)),
        ("/api/ratings", Some(r#"{"plot_id": "w2-d3", "rating": 9}"#)),
    ] {
        let url = format!("{base}{path}");
        let req = match body {
            Some(b) => client.post(&url).header("content-type", "application/json").body(b),
            None => client.get(&url),
        };
        let resp = req.send().await.map_err(std::io::Error::other)?;
        let status = resp.status();
        let text = resp.text().await.map_err(std::io::Error::other)?;
        let head: String = text.chars().take(100).collect();
        println!("{} {path} -> {status}\n    {head}", if body.is_some() { "POST" } else { "GET" });
    }
    Ok(())
}
