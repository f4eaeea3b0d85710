//! Exact t-SNE: Gaussian neighbor affinities calibrated by perplexity in the
//! input space, Student-t affinities in 2-D, and gradient descent on
//! KL(P ‖ Q) with momentum, adaptive gains and early exaggeration.
//!
//! Everything here is O(N²) in memory and time per iteration.

use std::ops::{Index, IndexMut};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROJECTION_FORMAT: &str = "pathlens-proj/1";

/// Floor applied to off-diagonal P and Q entries.
pub const AFFINITY_FLOOR: f64 = 1e-12;
/// The KL divergence is recorded after every this many iterations.
pub const KL_TRACE_INTERVAL: usize = 10;

// tight enough that the achieved perplexity is within 1e-4 of the target for
// any perplexity below ~10^4
const LOG2_PERPLEXITY_TOL: f64 = 1e-8;
const MAX_BISECTION_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const INIT_STD: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum TsneError {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("perplexity {perplexity} is too large for {n} points")]
    PerplexityTooLarge { perplexity: f64, n: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("embedding diverged at iteration {0}")]
    NonFiniteIterate(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid projection file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TsneError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_early: f64,
    pub momentum_late: f64,
    pub momentum_switch_iter: usize,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            momentum_early: 0.5,
            momentum_late: 0.8,
            momentum_switch_iter: 250,
            early_exaggeration_factor: 4.0,
            early_exaggeration_iters: 100,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TsneError::InvalidConfig(m.to_string()));
        if !(self.perplexity > 0.0 && self.perplexity.is_finite()) {
            return bad("perplexity must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        for m in [self.momentum_early, self.momentum_late] {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        if self.early_exaggeration_factor.is_nan() || self.early_exaggeration_factor <= 0.0 {
            return bad("early_exaggeration_factor must be positive");
        }
        if self.iterations < self.early_exaggeration_iters {
            return bad("iterations must be >= early_exaggeration_iters");
        }
        Ok(())
    }

    /// Index into `kl_trace` of the first value recorded after early
    /// exaggeration has ended.
    pub fn first_post_exaggeration_record(&self) -> usize {
        // record k is taken after iteration (k + 1) * INTERVAL - 1
        self.early_exaggeration_iters / KL_TRACE_INTERVAL
    }
}

/// Dense row-major N × N matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        Self { n, data: rows.concat() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

pub type Point2 = [f64; 2];

/// A 2-D layout plus the KL divergence recorded during optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub points: Vec<Point2>,
    pub kl_trace: Vec<f64>,
}

impl Projection {
    pub fn to_file(&self, tokens: &[String]) -> ProjectionFile {
        ProjectionFile {
            format: PROJECTION_FORMAT.to_string(),
            tokens: tokens.to_vec(),
            xy: self.points.clone(),
            kl_trace: self.kl_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFile {
    pub format: String,
    pub tokens: Vec<String>,
    pub xy: Vec<Point2>,
    pub kl_trace: Vec<f64>,
}

impl ProjectionFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("projection serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(s)?;
        if f.format != PROJECTION_FORMAT {
            return Err(TsneError::Format(format!("unsupported format `{}`", f.format)));
        }
        if f.tokens.len() != f.xy.len() {
            return Err(TsneError::Format("token and coordinate counts differ".into()));
        }
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn projection(&self) -> Projection {
        Projection { points: self.xy.clone(), kl_trace: self.kl_trace.clone() }
    }
}

/// Squared Euclidean distances, each unordered pair computed once.
pub fn pairwise_sq_distances(x: &[Vec<f64>]) -> Result<SquareMatrix> {
    let n = x.len();
    if n < 2 {
        return Err(TsneError::TooFewPoints { needed: 2, got: n });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TsneError::NonFiniteInput);
    }
    let mut d = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    Ok(d)
}

/// Fills `row` with `p_{j|i}` at precision `beta` and returns the entropy in
/// nats. Distances are shifted by the row minimum so the nearest neighbor
/// always carries weight one.
fn gaussian_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (j, p) in row.iter_mut().enumerate() {
        *p = if j == i { 0.0 } else { (-beta * (dist[j] - min)).exp() };
        z += *p;
    }
    let mut h = 0.0;
    for p in row.iter_mut() {
        *p /= z;
        if *p > 0.0 {
            h -= *p * p.ln();
        }
    }
    h
}

/// Row-stochastic `p_{j|i}`, with each row's Gaussian precision found by
/// bisection so that the row's perplexity matches the target.
///
/// Fails if the perplexity cannot be reached at all (above N − 1 or below 1).
pub fn conditional_affinities(dist: &SquareMatrix, perplexity: f64) -> Result<SquareMatrix> {
    let n = dist.n();
    if n < 2 {
        return Err(TsneError::TooFewPoints { needed: 2, got: n });
    }
    if perplexity.is_nan() || perplexity < 1.0 || perplexity > (n - 1) as f64 {
        return Err(TsneError::PerplexityTooLarge { perplexity, n });
    }
    let target = perplexity.log2();
    let mut p = SquareMatrix::zeros(n);
    for i in 0..n {
        let drow = dist.row(i);
        let row = p.row_mut(i);
        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut beta = 1.0;
        for _ in 0..MAX_BISECTION_STEPS {
            let h = gaussian_row(drow, i, beta, row) / std::f64::consts::LN_2;
            let diff = h - target;
            if diff.abs() <= LOG2_PERPLEXITY_TOL {
                break;
            }
            if diff > 0.0 {
                // too flat: sharpen
                lo = beta;
                beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
    }
    Ok(p)
}

/// Perplexity `2^H` of one probability row.
pub fn row_perplexity(row: &[f64]) -> f64 {
    let h: f64 = row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    h.exp2()
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2N`, off-diagonal
/// entries floored and the whole matrix renormalized to sum to one.
pub fn joint_affinities(p_cond: &SquareMatrix) -> SquareMatrix {
    let n = p_cond.n();
    let mut p = SquareMatrix::zeros(n);
    let scale = 2.0 * n as f64;
    for i in 0..n {
        for j in i + 1..n {
            let v = ((p_cond[(i, j)] + p_cond[(j, i)]) / scale).max(AFFINITY_FLOOR);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    let total = p.sum();
    p.data.iter_mut().for_each(|v| *v /= total);
    p
}

/// Student-t affinities of a 2-D layout. Returns `(Q, numerators)`.
pub fn low_dim_affinities(y: &[Point2]) -> (SquareMatrix, SquareMatrix) {
    let n = y.len();
    let mut num = SquareMatrix::zeros(n);
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[(i, j)] = v;
            num[(j, i)] = v;
            z += 2.0 * v;
        }
    }
    let mut q = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[(i, j)] = (num[(i, j)] / z).max(AFFINITY_FLOOR);
            }
        }
    }
    (q, num)
}

/// `∂KL/∂y_i = 4 Σ_j (p_ij − q_ij) n_ij (y_i − y_j)`.
pub fn kl_gradient(p: &SquareMatrix, q: &SquareMatrix, num: &SquareMatrix, y: &[Point2]) -> Vec<Point2> {
    let n = y.len();
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        let (pr, qr, nr) = (p.row(i), q.row(i), num.row(i));
        let mut g = [0.0; 2];
        for j in 0..n {
            if j == i {
                continue;
            }
            let m = (pr[j] - qr[j]) * nr[j];
            g[0] += m * (y[i][0] - y[j][0]);
            g[1] += m * (y[i][1] - y[j][1]);
        }
        grad[i] = [4.0 * g[0], 4.0 * g[1]];
    }
    grad
}

/// `KL(P ‖ Q) = Σ_{i≠j} p_ij log(p_ij / q_ij)`.
pub fn kl_divergence(p: &SquareMatrix, q: &SquareMatrix) -> f64 {
    let n = p.n();
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[(i, j)];
            if i != j && pij > 0.0 {
                kl += pij * (pij / q[(i, j)]).ln();
            }
        }
    }
    kl
}

/// Gaussian initial layout with standard deviation 1e-4.
pub fn random_init(n: usize, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    (0..n).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect()
}

/// Embeds the rows of `x` in 2-D.
pub fn run_tsne(x: &[Vec<f64>], config: &TsneConfig) -> Result<Projection> {
    run_tsne_from(x, config, random_init(x.len(), config.seed))
}

/// Like [`run_tsne`] but starting from a caller-supplied layout.
pub fn run_tsne_from(x: &[Vec<f64>], config: &TsneConfig, init: Vec<Point2>) -> Result<Projection> {
    config.validate()?;
    let n = x.len();
    if n < 4 {
        return Err(TsneError::TooFewPoints { needed: 4, got: n });
    }
    if init.len() != n {
        return Err(TsneError::InvalidConfig("initial layout has the wrong number of rows".into()));
    }
    if config.perplexity >= (n - 1) as f64 / 3.0 {
        return Err(TsneError::PerplexityTooLarge { perplexity: config.perplexity, n });
    }
    let dist = pairwise_sq_distances(x)?;
    let p = joint_affinities(&conditional_affinities(&dist, config.perplexity)?);
    let mut p_exag = p.clone();
    p_exag.data.iter_mut().for_each(|v| *v *= config.early_exaggeration_factor);

    let mut y = init;
    let mut update: Vec<Point2> = vec![[0.0; 2]; n];
    let mut gains: Vec<Point2> = vec![[1.0; 2]; n];
    let mut kl_trace = Vec::with_capacity(config.iterations / KL_TRACE_INTERVAL);

    for iter in 0..config.iterations {
        let p_eff = if iter < config.early_exaggeration_iters { &p_exag } else { &p };
        let (q, num) = low_dim_affinities(&y);
        let grad = kl_gradient(p_eff, &q, &num, &y);
        let momentum = if iter < config.momentum_switch_iter {
            config.momentum_early
        } else {
            config.momentum_late
        };
        for i in 0..n {
            for k in 0..2 {
                let g = grad[i][k];
                gains[i][k] = if (g > 0.0) != (update[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    gains[i][k] * 0.8
                }
                .max(MIN_GAIN);
                update[i][k] = momentum * update[i][k] - config.learning_rate * gains[i][k] * g;
                y[i][k] += update[i][k];
            }
        }
        for k in 0..2 {
            let mean = y.iter().map(|p| p[k]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|p| p[k] -= mean);
        }
        if y.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TsneError::NonFiniteIterate(iter));
        }
        if (iter + 1) % KL_TRACE_INTERVAL == 0 {
            let (q, _) = low_dim_affinities(&y);
            kl_trace.push(kl_divergence(&p, &q));
        }
    }
    Ok(Projection { points: y, kl_trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_small_cases() {
        let d = pairwise_sq_distances(&[vec![0.0], vec![3.0]]).unwrap();
        assert_eq!(d.as_slice(), &[0.0, 9.0, 9.0, 0.0]);
        let d = pairwise_sq_distances(&vec![vec![1.0, 2.0]; 3]).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            pairwise_sq_distances(&[vec![0.0], vec![f64::NAN]]),
            Err(TsneError::NonFiniteInput)
        ));
    }

    #[test]
    fn equidistant_triangle_is_uniform() {
        let d = SquareMatrix::from_rows(&[
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
        let pc = conditional_affinities(&d, 1.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert!((pc[(i, j)] - want).abs() < 1e-15);
            }
        }
        let p = joint_affinities(&pc);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((p[(i, j)] - 1.0 / 6.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn unreachable_perplexity_rejected() {
        let d = pairwise_sq_distances(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(
            conditional_affinities(&d, 2.5),
            Err(TsneError::PerplexityTooLarge { .. })
        ));
    }

    #[test]
    fn run_rejects_perplexity_above_bound() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let cfg = TsneConfig { perplexity: 3.0, ..Default::default() };
        assert!(matches!(run_tsne(&x, &cfg), Err(TsneError::PerplexityTooLarge { .. })));
        let cfg = TsneConfig { perplexity: 2.9, iterations: 100, ..Default::default() };
        assert!(run_tsne(&x, &cfg).is_ok());
    }

    #[test]
    fn symmetric_conditionals_scale_by_n() {
        let pc = SquareMatrix::from_rows(&[
            vec![0.0, 0.7, 0.3],
            vec![0.7, 0.0, 0.3],
            vec![0.3, 0.7, 0.0],
        ]);
        // not symmetric: just check normalization
        assert!((joint_affinities(&pc).sum() - 1.0).abs() < 1e-12);
        let sym = SquareMatrix::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ]);
        let p = joint_affinities(&sym);
        for (a, b) in p.as_slice().iter().zip(sym.as_slice()) {
            assert!((a - b / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn student_t_basics() {
        let (q, num) = low_dim_affinities(&[[0.0, 0.0], [1.0, 0.0]]);
        assert_eq!(num[(0, 1)], 0.5);
        assert_eq!(q[(0, 1)], 0.5);
        assert_eq!(q[(1, 0)], 0.5);
        let (_, num) = low_dim_affinities(&[[2.0, 2.0], [2.0, 2.0]]);
        assert_eq!(num[(0, 1)], 1.0);
    }

    #[test]
    fn gradient_vanishes_when_p_equals_q() {
        let y = vec![[0.0, 0.0], [1.0, 0.3], [-0.4, 2.0], [0.7, -1.1]];
        let (q, num) = low_dim_affinities(&y);
        let g = kl_gradient(&q, &q, &num, &y);
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-15));
        assert!(kl_divergence(&q, &q).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let cfg = TsneConfig { iterations: 50, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TsneConfig { momentum_late: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        assert!(TsneConfig::default().validate().is_ok());
        assert_eq!(TsneConfig::default().first_post_exaggeration_record(), 10);
    }

    #[test]
    fn projection_file_round_trip() {
        let proj = Projection { points: vec![[0.5, -1.25], [1e-300, 3.0]], kl_trace: vec![0.1] };
        let f = proj.to_file(&["a".into(), "b".into()]);
        let back = ProjectionFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.projection(), proj);
    }
}
