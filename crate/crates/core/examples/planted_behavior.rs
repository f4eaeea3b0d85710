//! Generates a by-outcome synthetic course, trains on the pass/fail
//! decorated corpus and reports how well the planted behavior is recovered:
//! chain neighbors for linear walkers, application-hub cohesion for
//! hub-and-spoke walkers, and pass/fail separation in the joint map.
//!
//! ```bash
//! cargo run --release -p pathlens --example planted_behavior
//! ```

use pathlens::corpus::{build_sequences, build_vocab, decorate_outcome, split_outcome_prefix, MissingOutcomePolicy};
use pathlens::synth::{cohesion, gen_corpus, CohesionSpace};
use pathlens::tsne::run_tsne;
use pathlens::{skipgram, SkipGramConfig, SynthSpec, TsneConfig};

fn main() -> Result<(), pathlens::Error> {
    let spec = SynthSpec { n_students: 200, n_lessons: 6, screens_per_lesson: 20, ..Default::default() };
    let corpus = gen_corpus(&spec)?;
    let sequences = decorate_outcome(
        &build_sequences(&corpus.events),
        &corpus.outcomes,
        MissingOutcomePolicy::Error,
    )?;
    let vocab = build_vocab(&sequences, 1)?;
    let config = SkipGramConfig { vector_size: 12, window: 5, ..Default::default() };
    let (model, trace) = skipgram::train(&sequences, &vocab, &config)?;
    println!("{} students, {} tokens, loss per epoch {:?}", sequences.len(), vocab.len(), trace.epochs);

    // linear walkers: nearest neighbor should sit within one window on the chain
    let position = |t: &str| -> usize { t.trim_start_matches("s:").parse::<usize>().unwrap() };
    let mut hits = 0;
    let mut total = 0;
    for token in vocab.tokens().iter().filter(|t| t.starts_with("p-")) {
        let (_, base) = split_outcome_prefix(token);
        let (nn, _) = &model.nearest_neighbors(token, 1)?[0];
        let (group, nn_base) = split_outcome_prefix(nn);
        total += 1;
        if group == split_outcome_prefix(token).0 && position(base).abs_diff(position(nn_base)) <= config.window {
            hits += 1;
        } else {
            println!("  miss: {token} -> {nn}");
        }
    }
    println!("chain-neighbor rate: {hits}/{total} = {:.3}", hits as f64 / total as f64);

    // hub-and-spoke walkers: applications should cohere more than training
    let mut wins = 0;
    for lesson in 0..spec.n_lessons {
        let name = |pos: &usize| format!("n-{}", SynthSpec::screen_id(*pos));
        let groups = vec![
            ("application".to_string(), spec.application_positions(lesson).iter().map(name).collect()),
            ("training".to_string(), spec.training_positions(lesson).iter().map(name).collect()),
        ];
        let c = cohesion(CohesionSpace::Embedding(&model), &groups)?;
        println!("  L{}: application {:.3} vs training {:.3}", lesson + 1, c[0].1, c[1].1);
        if c[0].1 > c[1].1 {
            wins += 1;
        }
    }
    println!("application cohesion wins in {wins}/{} lessons", spec.n_lessons);

    // joint map: 1-NN group purity
    let rows: Vec<Vec<f64>> = (0..vocab.len()).map(|i| model.input_row(i).to_vec()).collect();
    let projection = run_tsne(&rows, &TsneConfig::default())?;
    let groups: Vec<_> = vocab.tokens().iter().map(|t| split_outcome_prefix(t).0).collect();
    let pts = &projection.points;
    let pure = (0..pts.len())
        .filter(|&i| {
            let nn = (0..pts.len())
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (pts[i][0] - pts[a][0]).powi(2) + (pts[i][1] - pts[a][1]).powi(2);
                    let db = (pts[i][0] - pts[b][0]).powi(2) + (pts[i][1] - pts[b][1]).powi(2);
                    da.total_cmp(&db)
                })
                .unwrap();
            groups[nn] == groups[i]
        })
        .count();
    println!("joint-map 1-NN group purity: {:.3}", pure as f64 / pts.len() as f64);
    Ok(())
}
