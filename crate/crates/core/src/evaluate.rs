//! Ranking metrics over fixed negative sets.
//!
//! Every query side (head or tail) contributes one rank. Ties count against
//! the positive, so a constant scorer with `m` negatives gets rank `m + 1`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, RelationId};
use crate::io::pairwise_sum;
use crate::scores::{QueryScores, ScoreSet};
use crate::splits::QuerySet;

pub fn rank_of_positive(pos_score: f64, neg_scores: &[f64]) -> usize {
    1 + neg_scores.iter().filter(|&&s| s >= pos_score).count()
}

pub fn query_rank(q: &QueryScores) -> usize {
    rank_of_positive(q.positive, &q.negatives)
}

pub fn ranks(set: &ScoreSet) -> Vec<usize> {
    set.queries.iter().map(query_rank).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    /// Query sides left out because their negative pool was empty.
    pub n_excluded: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[usize], n_excluded: usize) -> Metrics {
        let n = ranks.len();
        if n == 0 {
            return Metrics {
                mrr: 0.0,
                hits3: 0.0,
                hits10: 0.0,
                n_queries: 0,
                n_excluded,
            };
        }
        let rr: Vec<f64> = ranks.iter().map(|&r| 1.0 / r as f64).collect();
        let h3 = ranks.iter().filter(|&&r| r <= 3).count();
        let h10 = ranks.iter().filter(|&&r| r <= 10).count();
        Metrics {
            mrr: pairwise_sum(&rr) / n as f64,
            hits3: h3 as f64 / n as f64,
            hits10: h10 as f64 / n as f64,
            n_queries: n,
            n_excluded,
        }
    }
}

pub fn compute_metrics(queries: &QuerySet, set: &ScoreSet) -> Result<Metrics> {
    set.check_queries(queries)?;
    Ok(Metrics::from_ranks(&ranks(set), queries.excluded))
}

pub fn per_relation_breakdown(queries: &QuerySet, set: &ScoreSet) -> Result<BTreeMap<RelationId, Metrics>> {
    set.check_queries(queries)?;
    let mut cells: BTreeMap<RelationId, Vec<usize>> = BTreeMap::new();
    for (q, s) in queries.queries.iter().zip(&set.queries) {
        cells.entry(q.positive.rel).or_default().push(query_rank(s));
    }
    Ok(cells
        .into_iter()
        .map(|(r, ranks)| (r, Metrics::from_ranks(&ranks, 0)))
        .collect())
}

/// How many of a positive triple's two entities carry a description.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionBucket {
    None,
    One,
    Both,
}

pub fn description_breakdown(
    queries: &QuerySet,
    set: &ScoreSet,
    kg: &KnowledgeGraph,
) -> Result<BTreeMap<DescriptionBucket, Metrics>> {
    set.check_queries(queries)?;
    let mut cells: BTreeMap<DescriptionBucket, Vec<usize>> = BTreeMap::new();
    for (q, s) in queries.queries.iter().zip(&set.queries) {
        let described = [q.positive.head, q.positive.tail]
            .iter()
            .map(|&e| kg.entity(e).map(|r| r.has_description() as usize))
            .sum::<Result<usize>>()?;
        let bucket = match described {
            0 => DescriptionBucket::None,
            1 => DescriptionBucket::One,
            _ => DescriptionBucket::Both,
        };
        cells.entry(bucket).or_default().push(query_rank(s));
    }
    Ok(cells
        .into_iter()
        .map(|(b, ranks)| (b, Metrics::from_ranks(&ranks, 0)))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a_better: f64,
    pub b_better: f64,
    pub tie: f64,
}

/// Fraction of queries on which each model ranks the positive strictly
/// better, and the fraction of ties.
pub fn compare_models(a: &ScoreSet, b: &ScoreSet) -> Result<Comparison> {
    a.check_aligned(b)?;
    let n = a.len();
    if n == 0 {
        return Err(Error::MisalignedScoreSets("no queries to compare".into()));
    }
    let (mut wa, mut wb, mut tie) = (0usize, 0usize, 0usize);
    for (qa, qb) in a.queries.iter().zip(&b.queries) {
        match query_rank(qa).cmp(&query_rank(qb)) {
            std::cmp::Ordering::Less => wa += 1,
            std::cmp::Ordering::Greater => wb += 1,
            std::cmp::Ordering::Equal => tie += 1,
        }
    }
    let n = n as f64;
    Ok(Comparison {
        a_better: wa as f64 / n,
        b_better: wb as f64 / n,
        tie: tie as f64 / n,
    })
}

/// Aligned-column table of named metrics, scaled ×100 for reading.
pub fn format_table(rows: &[(String, Metrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>8}", "model", "MRR", "H@3", "H@10", "queries", "excluded");
    for (name, m) in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>6.1}  {:>6.1}  {:>6.1}  {:>7}  {:>8}",
            name,
            m.mrr * 100.0,
            m.hits3 * 100.0,
            m.hits10 * 100.0,
            m.n_queries,
            m.n_excluded
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityId, GraphBuilder};
    use crate::splits::{RankingQuery, Side};

    fn set_with_ranks(ranks: &[usize]) -> ScoreSet {
        // positive 0, negatives 1.0 for the first rank-1 candidates and -1.0 after
        ScoreSet {
            model_name: "m".into(),
            keys: (0..ranks.len()).map(|i| (i, Side::Tail)).collect(),
            queries: ranks
                .iter()
                .map(|&r| QueryScores {
                    positive: 0.0,
                    negatives: (0..12).map(|j| if j + 1 < r { 1.0 } else { -1.0 }).collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_of_positive(2.0, &[1.0, 0.0]), 1);
        assert_eq!(rank_of_positive(0.5, &[0.9, 0.5, 0.1]), 3);
        assert_eq!(rank_of_positive(1.0, &[1.0; 7]), 8);
        assert_eq!(rank_of_positive(1.0, &[]), 1);
    }

    #[test]
    fn metrics_of_hand_ranks() {
        let m = Metrics::from_ranks(&[1, 2, 4], 0);
        assert!((m.mrr - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(m.hits3, 2.0 / 3.0);
        assert_eq!(m.hits10, 1.0);
        let m = Metrics::from_ranks(&[1, 1, 1], 2);
        assert_eq!((m.mrr, m.hits3, m.hits10, m.n_excluded), (1.0, 1.0, 1.0, 2));
        assert_eq!(ranks(&set_with_ranks(&[1, 5, 12])), vec![1, 5, 12]);
    }

    #[test]
    fn constant_scorer_gets_chance_floor() {
        let m = 9;
        let set = ScoreSet {
            model_name: "c".into(),
            keys: vec![(0, Side::Head)],
            queries: vec![QueryScores {
                positive: 0.3,
                negatives: vec![0.3; m],
            }],
        };
        let metrics = Metrics::from_ranks(&ranks(&set), 0);
        assert_eq!(metrics.mrr, 1.0 / (m as f64 + 1.0));
    }

    fn two_relation_graph() -> (KnowledgeGraph, QuerySet) {
        let mut b = GraphBuilder::new();
        b.add_entity("a", "n", "a", Some("first")).unwrap();
        b.add_entity("b", "n", "b", None).unwrap();
        b.add_entity("c", "n", "c", Some("third")).unwrap();
        b.add_entity("d", "n", "d", None).unwrap();
        b.add_triple("a", "r0", "c").unwrap();
        b.add_triple("a", "r1", "b").unwrap();
        b.add_triple("b", "r1", "d").unwrap();
        let kg = b.build();
        let queries = kg
            .triples()
            .iter()
            .enumerate()
            .map(|(i, &t)| RankingQuery {
                triple_index: i,
                positive: t,
                side: Side::Tail,
                candidates: vec![EntityId(3); 12],
            })
            .collect();
        (
            kg,
            QuerySet {
                queries,
                excluded: 0,
            },
        )
    }

    #[test]
    fn relation_cells_match_direct_computation() {
        let (_, qs) = two_relation_graph();
        let set = set_with_ranks(&[1, 2, 4]);
        let cells = per_relation_breakdown(&qs, &set).unwrap();
        assert_eq!(cells[&RelationId(0)], Metrics::from_ranks(&[1], 0));
        assert_eq!(cells[&RelationId(1)], Metrics::from_ranks(&[2, 4], 0));
        let overall = compute_metrics(&qs, &set).unwrap();
        let weighted: f64 = cells.values().map(|m| m.mrr * m.n_queries as f64).sum::<f64>() / 3.0;
        assert!((weighted - overall.mrr).abs() < 1e-12);
    }

    #[test]
    fn description_buckets_match_manual_audit() {
        let (kg, qs) = two_relation_graph();
        let set = set_with_ranks(&[1, 2, 4]);
        let cells = description_breakdown(&qs, &set, &kg).unwrap();
        // (a,c): both described; (a,b): one; (b,d): none
        assert_eq!(cells[&DescriptionBucket::Both].n_queries, 1);
        assert_eq!(cells[&DescriptionBucket::One], Metrics::from_ranks(&[2], 0));
        assert_eq!(cells[&DescriptionBucket::None], Metrics::from_ranks(&[4], 0));
    }

    #[test]
    fn comparison_of_constructed_ranks() {
        let a = set_with_ranks(&[1, 1, 1, 5, 5, 5, 5, 5, 5, 5]);
        let b = set_with_ranks(&[2, 2, 2, 1, 1, 1, 1, 1, 1, 1]);
        let c = compare_models(&a, &b).unwrap();
        assert_eq!((c.a_better, c.b_better, c.tie), (0.3, 0.7, 0.0));
        let same = compare_models(&a, &a).unwrap();
        assert_eq!(same.tie, 1.0);
    }

    #[test]
    fn misaligned_inputs_are_rejected() {
        let (_, qs) = two_relation_graph();
        let set = set_with_ranks(&[1, 2]);
        assert!(matches!(compute_metrics(&qs, &set), Err(Error::MisalignedScoreSets(_))));
        assert!(compare_models(&set, &set_with_ranks(&[1, 2, 3])).is_err());
    }
}
