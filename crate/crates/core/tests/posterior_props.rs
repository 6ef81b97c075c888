use proptest::prelude::*;
use specgraph::gibbs::{StoredOmega, WeightedChain};
use specgraph::graph::{all_pairs, Graph};
use specgraph::linalg::{Matrix, Vector};
use specgraph::posterior::{edge_probs, omega_hat, select_bfdr_graph, select_median_graph, EdgeProbMatrix};

fn chain(p: usize, masks: &[u8], weights: &[f64]) -> WeightedChain {
    let pairs: Vec<_> = all_pairs(p).collect();
    let graphs: Vec<Graph> = masks
        .iter()
        .map(|m| Graph::from_edges(p, pairs.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, e)| *e)).unwrap())
        .collect();
    let omegas = weights
        .iter()
        .enumerate()
        .map(|(t, &w)| StoredOmega {
            iteration: t,
            weight: w,
            values: Matrix::identity(p, p) * (1.0 + t as f64),
        })
        .collect();
    WeightedChain {
        n_nodes: p,
        iterations: (0..graphs.len()).collect(),
        graphs,
        weights: weights.to_vec(),
        omegas,
        tau2: vec![1.0; weights.len()],
        log_post: vec![0.0; weights.len()],
        beta_mean: Matrix::zeros(1, p),
        mu_mean: Vector::zeros(p),
    }
}

proptest! {
    #[test]
    fn summaries_ignore_segment_order(
        states in prop::collection::vec((0u8..8, 0.01f64..5.0), 1..30),
        cut in 0usize..30,
    ) {
        let (masks, weights): (Vec<u8>, Vec<f64>) = states.into_iter().unzip();
        let cut = cut % masks.len();
        let a = chain(3, &masks, &weights);
        let rot_m: Vec<u8> = masks[cut..].iter().chain(&masks[..cut]).copied().collect();
        let rot_w: Vec<f64> = weights[cut..].iter().chain(&weights[..cut]).copied().collect();
        let b = chain(3, &rot_m, &rot_w);
        let (pa, pb) = (edge_probs(&a).unwrap(), edge_probs(&b).unwrap());
        prop_assert!((pa.values() - pb.values()).abs().max() < 1e-12);
        let mut b2 = b.clone();
        b2.omegas = a.omegas.iter().skip(cut).chain(a.omegas.iter().take(cut)).cloned().collect();
        prop_assert!((omega_hat(&a).unwrap() - omega_hat(&b2).unwrap()).abs().max() < 1e-12);
    }

    #[test]
    fn median_and_bfdr_graphs_nest(probs in prop::collection::vec(0.0f64..=1.0, 6), alpha in 0.01f64..0.5) {
        let m = EdgeProbMatrix::from_upper(4, &probs).unwrap();
        let median = select_median_graph(&m);
        let bfdr = select_bfdr_graph(&m, alpha).unwrap();
        if bfdr.threshold <= 0.5 {
            prop_assert!(median.edges().all(|e| bfdr.graph.contains(e)));
        } else {
            prop_assert!(bfdr.graph.edges().all(|e| median.contains(e)));
        }
    }

    #[test]
    fn smaller_alpha_never_adds_edges(probs in prop::collection::vec(0.0f64..=1.0, 10), a in 0.01f64..0.9, b in 0.01f64..0.9) {
        let m = EdgeProbMatrix::from_upper(5, &probs).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let small = select_bfdr_graph(&m, lo).unwrap().graph;
        let large = select_bfdr_graph(&m, hi).unwrap().graph;
        prop_assert!(small.n_edges() <= large.n_edges());
    }
}
