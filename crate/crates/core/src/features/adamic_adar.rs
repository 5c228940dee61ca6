use crate::graph::{EntityId, KnowledgeGraph};

/// Sorted, de-duplicated undirected neighbours of every entity, excluding
/// the entity itself.
pub fn undirected_neighbors(kg: &KnowledgeGraph) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); kg.num_entities()];
    for t in kg.triples() {
        if t.head != t.tail {
            adj[t.head.index()].push(t.tail.0);
            adj[t.tail.index()].push(t.head.0);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Σ 1/ln(deg u) over common neighbours `u` of `h` and `t`, where both the
/// neighbourhoods and `deg` are taken on the undirected graph.
pub fn adamic_adar_with(neighbors: &[Vec<u32>], h: EntityId, t: EntityId) -> f64 {
    let (a, b) = (&neighbors[h.index()], &neighbors[t.index()]);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let deg = neighbors[a[i] as usize].len();
                if deg > 1 {
                    total += 1.0 / (deg as f64).ln();
                }
                i += 1;
                j += 1;
            }
        }
    }
    total
}

pub fn adamic_adar(kg: &KnowledgeGraph, h: EntityId, t: EntityId) -> f64 {
    adamic_adar_with(&undirected_neighbors(kg), h, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_entity(&i.to_string(), "n", "x", None).unwrap();
        }
        for (h, t) in edges {
            b.add_triple(&h.to_string(), "r", &t.to_string()).unwrap();
        }
        b.build()
    }

    #[test]
    fn no_common_neighbors() {
        let kg = graph(4, &[(0, 1), (2, 3)]);
        assert_eq!(adamic_adar(&kg, EntityId(0), EntityId(2)), 0.0);
    }

    #[test]
    fn single_hub_of_degree_four() {
        // 0 and 1 share hub 2, which also touches 3 and 4; directions mixed
        let kg = graph(5, &[(0, 2), (2, 1), (2, 3), (4, 2)]);
        let v = adamic_adar(&kg, EntityId(0), EntityId(1));
        assert!((v - 1.0 / 4f64.ln()).abs() < 1e-12);
        assert!((v - 0.7213).abs() < 5e-5);
    }

    #[test]
    fn two_hubs_of_degree_two_and_three() {
        // hub 2 touches {0,1}; hub 3 touches {0,1,4}; parallel edge 0->2 twice via two relations
        let mut b = GraphBuilder::new();
        for i in 0..5 {
            b.add_entity(&i.to_string(), "n", "x", None).unwrap();
        }
        for (h, r, t) in [(0, "r", 2), (0, "s", 2), (1, "r", 2), (3, "r", 0), (3, "r", 1), (4, "r", 3)] {
            b.add_triple(&h.to_string(), r, &t.to_string()).unwrap();
        }
        let kg = b.build();
        let v = adamic_adar(&kg, EntityId(0), EntityId(1));
        assert!((v - (1.0 / 2f64.ln() + 1.0 / 3f64.ln())).abs() < 1e-12);
        assert!((v - 2.3529).abs() < 5e-5);
    }

    proptest! {
        #[test]
        fn symmetric(edges in prop::collection::vec((0usize..8, 0usize..8), 0..30), h in 0u32..8, t in 0u32..8) {
            let kg = graph(8, &edges);
            let nb = undirected_neighbors(&kg);
            prop_assert_eq!(
                adamic_adar_with(&nb, EntityId(h), EntityId(t)),
                adamic_adar_with(&nb, EntityId(t), EntityId(h))
            );
            prop_assert!(adamic_adar_with(&nb, EntityId(h), EntityId(t)) >= 0.0);
        }
    }
}
