//! Projects two well-separated Gaussian clusters to 2-D and prints the KL
//! trace and how often a point's nearest 2-D neighbor shares its cluster.
//!
//! ```bash
//! cargo run --release -p pathlens --example project_tsne
//! ```

use pathlens::tsne::run_tsne;
use pathlens::TsneConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), pathlens::Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 1.0).expect("valid std");
    let x: Vec<Vec<f64>> = (0..80)
        .map(|i| {
            let center = if i < 40 { 0.0 } else { 6.0 };
            (0..10).map(|_| center + noise.sample(&mut rng)).collect()
        })
        .collect();

    let config = TsneConfig { perplexity: 15.0, ..Default::default() };
    let projection = run_tsne(&x, &config)?;
    for (k, kl) in projection.kl_trace.iter().enumerate().step_by(10) {
        println!("iteration {:>4}: KL {kl:.4}", (k + 1) * 10);
    }

    let p = &projection.points;
    let nearest = |i: usize| {
        (0..p.len())
            .filter(|&j| j != i)
            .min_by(|&a, &b| {
                let d = |j: usize| (p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2);
                d(a).total_cmp(&d(b))
            })
            .expect("more than one point")
    };
    let pure = (0..p.len()).filter(|&i| (nearest(i) < 40) == (i < 40)).count();
    println!("1-NN cluster purity: {pure}/{}", p.len());
    Ok(())
}
