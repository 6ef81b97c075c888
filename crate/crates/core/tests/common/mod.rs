#![allow(dead_code)]

use specgraph::bdmcmc::{BdState, BirthDeath};
use specgraph::graph::{all_pairs, Edge, Graph};
use specgraph::gwishart::{log_normconst_mc, GWishartParams, PrecisionMatrix};
use specgraph::linalg::{self, Matrix};
use specgraph::parallel::Execution;
use specgraph::rng::seeded;

/// Every graph on `p` nodes, indexed by the bitmask of `all_pairs` order.
pub fn all_graphs(p: usize) -> Vec<Graph> {
    let pairs: Vec<Edge> = all_pairs(p).collect();
    (0..1u32 << pairs.len())
        .map(|mask| {
            let edges = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, e)| *e);
            Graph::from_edges(p, edges).unwrap()
        })
        .collect()
}

/// `sum_i b_i b_i^T` for `n` draws `b_i ~ N(0, Omega^{-1})`.
pub fn scatter_from(omega: &Matrix, n: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    let p = omega.nrows();
    let l = linalg::cholesky(omega, "omega").unwrap().l();
    let mut u = Matrix::zeros(p, p);
    for _ in 0..n {
        let z = linalg::standard_normal_vector(p, &mut rng);
        let b = l.transpose().solve_upper_triangular(&z).unwrap();
        u += &b * b.transpose();
    }
    u
}

/// Graph posterior `pi(G) I_G(d+n, D+U) / I_G(d, D)` under a uniform prior,
/// from Monte Carlo normalizing constants.
pub fn enumerate_posterior(prior: &GWishartParams, post: &GWishartParams, n_samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    let logs: Vec<f64> = all_graphs(prior.dim())
        .iter()
        .map(|g| {
            log_normconst_mc(post, g, n_samples, &mut rng, Execution::Parallel).unwrap().log_estimate
                - log_normconst_mc(prior, g, n_samples, &mut rng, Execution::Parallel).unwrap().log_estimate
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    logs.iter().map(|l| (l - max).exp() / z).collect()
}

/// Holding-time weighted graph frequencies along `steps` jumps.
pub fn weighted_frequencies(bd: &BirthDeath, post: &GWishartParams, steps: usize, seed: u64) -> Vec<f64> {
    let p = post.dim();
    let graphs = all_graphs(p);
    let mut rng = seeded(seed);
    let mut state = BdState::new(PrecisionMatrix::identity(p));
    let mut acc = vec![0.0; graphs.len()];
    for _ in 0..steps {
        let next = bd.birth_death_step(&state, post, &mut rng).unwrap();
        let k = graphs.iter().position(|g| *g == state.graph).unwrap();
        acc[k] += next.weight;
        state = next;
    }
    let total: f64 = acc.iter().sum();
    acc.iter().map(|a| a / total).collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
