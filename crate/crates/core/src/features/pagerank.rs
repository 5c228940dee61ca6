use crate::graph::KnowledgeGraph;

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Power-iteration PageRank on the directed triple graph (parallel edges
/// count separately). Teleport is uniform and the mass of dangling nodes is
/// spread uniformly. Stops once the L1 change drops below `tol` or after
/// `max_iter` sweeps; the result sums to one.
pub fn pagerank(kg: &KnowledgeGraph, damping: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = kg.num_entities();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let out_deg: Vec<usize> = kg.entities().iter().map(|e| kg.out_degree(e.id)).collect();
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iter {
        let dangling: f64 = rank
            .iter()
            .zip(&out_deg)
            .filter(|(_, &d)| d == 0)
            .map(|(r, _)| r)
            .sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for t in kg.triples() {
            let h = t.head.index();
            next[t.tail.index()] += damping * rank[h] / out_deg[h] as f64;
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < tol {
            break;
        }
    }
    let total: f64 = rank.iter().sum();
    rank.iter_mut().for_each(|x| *x /= total);
    rank
}
