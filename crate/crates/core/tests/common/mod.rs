//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use std::path::Path;

use pathlens::corpus::{Sequence, TokenVocab};
use pathlens::tsne::Point2;
use pathlens::SkipGramModel;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn vocab_of_size(v: usize) -> TokenVocab {
    TokenVocab::from_entries((0..v).map(|i| (format!("t{i}"), 1)).collect())
}

/// A model with every weight drawn uniformly from `[-scale, scale]`.
pub fn random_model(rng: &mut ChaCha8Rng, v: usize, d: usize, scale: f64) -> SkipGramModel {
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-scale..scale)).collect::<Vec<_>>();
    let input = draw(v * d);
    let output = draw(v * d);
    SkipGramModel::from_parts(vocab_of_size(v), d, input, output).unwrap()
}

pub fn random_corpus(rng: &mut ChaCha8Rng, v: usize, students: usize, max_len: usize) -> Vec<Sequence> {
    (0..students)
        .map(|s| Sequence {
            user_id: format!("u{s}"),
            tokens: (0..rng.random_range(1..=max_len)).map(|_| format!("t{}", rng.random_range(0..v))).collect(),
        })
        .collect()
}

/// `u_j = Σ_k W_out[k][j] · W[I][k]`, computed entry by entry.
fn score(model: &SkipGramModel, center: usize, j: usize) -> f64 {
    let mut u = 0.0;
    for k in 0..model.dim() {
        u += model.output_row(j)[k] * model.input_row(center)[k];
    }
    u
}

/// `p(O | I) = exp(u_O) / Σ_j exp(u_j)` with no stabilization.
pub fn naive_probability(model: &SkipGramModel, center: usize, context: usize) -> f64 {
    let mut z = 0.0;
    for j in 0..model.vocab_size() {
        z += score(model, center, j).exp();
    }
    score(model, center, context).exp() / z
}

/// `C = Σ_s (1/T_s) Σ_t Σ_{-c ≤ i ≤ c, i ≠ 0} −log p(w_{t+i} | w_t)`,
/// written out as literal nested loops.
pub fn naive_corpus_loss(model: &SkipGramModel, sequences: &[Sequence], window: usize) -> f64 {
    let c = window as i64;
    let mut total = 0.0;
    for seq in sequences {
        let ids: Vec<usize> = seq.tokens.iter().map(|t| model.vocab().index_of(t).unwrap()).collect();
        let len = ids.len() as i64;
        let mut inner = 0.0;
        for t in 0..len {
            for i in -c..=c {
                if i == 0 || t + i < 0 || t + i >= len {
                    continue;
                }
                inner -= naive_probability(model, ids[t as usize], ids[(t + i) as usize]).ln();
            }
        }
        total += inner / len as f64;
    }
    total
}

/// Number of context elements per student, summed as `Σ_s pairs_s / T_s`.
pub fn normalized_pair_count(sequences: &[Sequence], window: usize) -> f64 {
    sequences
        .iter()
        .map(|s| {
            let n = s.tokens.len();
            let pairs: usize = (0..n).map(|t| (t + window).min(n - 1) - t.saturating_sub(window)).sum();
            pairs as f64 / n as f64
        })
        .sum()
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / (norm(a) + norm(b)).max(1e-300)
}

/// Central differences of `f` around `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Fraction of points whose nearest other point carries the same label.
pub fn nn_purity<L: PartialEq>(points: &[Point2], labels: &[L]) -> f64 {
    let n = points.len();
    let dist = |a: usize, b: usize| (points[a][0] - points[b][0]).powi(2) + (points[a][1] - points[b][1]).powi(2);
    let pure = (0..n)
        .filter(|&i| {
            let nn = (0..n).filter(|&j| j != i).min_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b))).unwrap();
            labels[nn] == labels[i]
        })
        .count();
    pure as f64 / n as f64
}

/// Relative path → bytes of every file under `dir`, sorted by path.
pub fn tree_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
