//! Per-query score matrices: the interchange unit between scoring models,
//! integrators and evaluation.
//!
//! On disk a score set is a TSV of
//! `query_index \t side \t candidate_rank_position \t is_positive \t score`
//! rows (position 0 is the positive, 1.. the fixed negatives in file order)
//! plus a JSON manifest that binds it to the hash of a negatives manifest.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::splits::{QuerySet, Side};

#[derive(Clone, Debug, PartialEq)]
pub struct QueryScores {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    pub model_name: String,
    /// `(triple index, side)` of each query, in canonical order.
    pub keys: Vec<(usize, Side)>,
    pub queries: Vec<QueryScores>,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Builds a score set by calling `score(query_index, candidate)` for the
    /// positive (`None`) and each negative (`Some(position)`).
    pub fn from_fn(model_name: &str, queries: &QuerySet, mut score: impl FnMut(usize, Option<usize>) -> f64) -> Self {
        let mut out = ScoreSet {
            model_name: model_name.to_string(),
            keys: Vec::with_capacity(queries.queries.len()),
            queries: Vec::with_capacity(queries.queries.len()),
        };
        for (qi, q) in queries.queries.iter().enumerate() {
            out.keys.push((q.triple_index, q.side));
            out.queries.push(QueryScores {
                positive: score(qi, None),
                negatives: (0..q.candidates.len()).map(|j| score(qi, Some(j))).collect(),
            });
        }
        out
    }

    /// Checks that `other` has the same queries and candidate counts.
    pub fn check_aligned(&self, other: &ScoreSet) -> Result<()> {
        if self.keys != other.keys {
            return Err(Error::MisalignedScoreSets(format!(
                "`{}` and `{}` cover different queries",
                self.model_name, other.model_name
            )));
        }
        for (i, (a, b)) in self.queries.iter().zip(&other.queries).enumerate() {
            if a.negatives.len() != b.negatives.len() {
                return Err(Error::MisalignedScoreSets(format!(
                    "query {i}: `{}` has {} candidates, `{}` has {}",
                    self.model_name,
                    a.negatives.len(),
                    other.model_name,
                    b.negatives.len()
                )));
            }
        }
        Ok(())
    }

    /// Checks that this score set covers exactly the given queries.
    pub fn check_queries(&self, queries: &QuerySet) -> Result<()> {
        if self.queries.len() != queries.queries.len() {
            return Err(Error::MisalignedScoreSets(format!(
                "`{}` has {} queries, expected {}",
                self.model_name,
                self.queries.len(),
                queries.queries.len()
            )));
        }
        for (i, (q, s)) in queries.queries.iter().zip(self.keys.iter().zip(&self.queries)).enumerate() {
            if (q.triple_index, q.side) != *s.0 || q.candidates.len() != s.1.negatives.len() {
                return Err(Error::MisalignedScoreSets(format!(
                    "`{}` query {i} does not match the negatives",
                    self.model_name
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.queries
            .iter()
            .all(|q| q.positive.is_finite() && q.negatives.iter().all(|s| s.is_finite()))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for ((ti, side), q) in self.keys.iter().zip(&self.queries) {
            s.push_str(&format!("{ti}\t{side}\t0\t1\t{}\n", q.positive));
            for (j, v) in q.negatives.iter().enumerate() {
                s.push_str(&format!("{ti}\t{side}\t{}\t0\t{v}\n", j + 1));
            }
        }
        s
    }

    pub fn from_tsv(model_name: &str, text: &str, path: &Path) -> Result<Self> {
        let mut set = ScoreSet {
            model_name: model_name.to_string(),
            keys: Vec::new(),
            queries: Vec::new(),
        };
        for (line, cols) in io::tsv_rows(text) {
            if cols.len() != 5 {
                return Err(Error::malformed(path, line, format!("expected 5 columns, found {}", cols.len())));
            }
            let bad = |what: &str| Error::malformed(path, line, format!("bad {what}"));
            let ti: usize = cols[0].parse().map_err(|_| bad("query index"))?;
            let side = Side::parse(cols[1]).ok_or_else(|| bad("side"))?;
            let pos: usize = cols[2].parse().map_err(|_| bad("candidate position"))?;
            let is_pos = match cols[3] {
                "1" => true,
                "0" => false,
                _ => return Err(bad("is_positive flag")),
            };
            let score: f64 = cols[4].parse().map_err(|_| bad("score"))?;
            if !score.is_finite() {
                return Err(bad("score (non-finite)"));
            }
            if is_pos != (pos == 0) {
                return Err(Error::malformed(path, line, "position 0 must be the positive"));
            }
            if pos == 0 {
                set.keys.push((ti, side));
                set.queries.push(QueryScores {
                    positive: score,
                    negatives: Vec::new(),
                });
            } else {
                let ok = set.keys.last() == Some(&(ti, side));
                let q = set.queries.last_mut().filter(|_| ok).ok_or_else(|| {
                    Error::malformed(path, line, "negative row before its positive")
                })?;
                if q.negatives.len() + 1 != pos {
                    return Err(Error::malformed(path, line, "candidate positions out of order"));
                }
                q.negatives.push(score);
            }
        }
        Ok(set)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSetManifest {
    pub model_name: String,
    pub negatives_manifest_sha256: String,
    pub n_queries: usize,
    pub scores_file: String,
    pub scores_sha256: String,
}

/// Writes `<stem>.tsv` next to the manifest path.
pub fn write_score_set(set: &ScoreSet, manifest_path: &Path, negatives_manifest_sha256: &str) -> Result<ScoreSetManifest> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let stem = manifest_path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".json").trim_end_matches(".manifest"))
        .unwrap_or("scores");
    let scores_file = format!("{stem}.tsv");
    let tsv = set.to_tsv();
    io::write_bytes(&dir.join(&scores_file), tsv.as_bytes())?;
    let manifest = ScoreSetManifest {
        model_name: set.model_name.clone(),
        negatives_manifest_sha256: negatives_manifest_sha256.to_string(),
        n_queries: set.len(),
        scores_sha256: io::sha256_hex(tsv.as_bytes()),
        scores_file,
    };
    io::write_json(manifest_path, &manifest)?;
    Ok(manifest)
}

/// Loads a score set, refusing it when its manifest is bound to a different
/// negatives manifest or its TSV no longer matches the recorded hash.
pub fn read_score_set(manifest_path: &Path, expected_negatives_sha256: Option<&str>) -> Result<ScoreSet> {
    let manifest: ScoreSetManifest = io::read_json(manifest_path)?;
    if let Some(expected) = expected_negatives_sha256 {
        if manifest.negatives_manifest_sha256 != expected {
            return Err(Error::HashMismatch {
                artifact: manifest_path.display().to_string(),
                expected: expected.to_string(),
                found: manifest.negatives_manifest_sha256,
            });
        }
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let path = dir.join(&manifest.scores_file);
    let text = io::read_to_string(&path)?;
    let found = io::sha256_hex(text.as_bytes());
    if found != manifest.scores_sha256 {
        return Err(Error::HashMismatch {
            artifact: path.display().to_string(),
            expected: manifest.scores_sha256,
            found,
        });
    }
    let set = ScoreSet::from_tsv(&manifest.model_name, &text, &path)?;
    if set.len() != manifest.n_queries {
        return Err(Error::Invalid(format!(
            "{}: {} queries, manifest says {}",
            path.display(),
            set.len(),
            manifest.n_queries
        )));
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> ScoreSet {
        ScoreSet {
            model_name: "m".into(),
            keys: vec![(0, Side::Head), (0, Side::Tail), (3, Side::Tail)],
            queries: vec![
                QueryScores {
                    positive: 0.5,
                    negatives: vec![0.25, -1.0],
                },
                QueryScores {
                    positive: 1e-300,
                    negatives: vec![3.0],
                },
                QueryScores {
                    positive: -0.1,
                    negatives: vec![],
                },
            ],
        }
    }

    #[test]
    fn manifest_binding_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("x.valid.json");
        write_score_set(&sample(), &m, "abc").unwrap();
        assert_eq!(read_score_set(&m, Some("abc")).unwrap(), sample());
        assert!(matches!(read_score_set(&m, Some("abd")), Err(Error::HashMismatch { .. })));
        assert!(dir.path().join("x.valid.tsv").exists());
    }

    #[test]
    fn rows_out_of_order_are_rejected() {
        let p = Path::new("s.tsv");
        assert!(ScoreSet::from_tsv("m", "0\thead\t1\t0\t0.5\n", p).is_err());
        assert!(ScoreSet::from_tsv("m", "0\thead\t0\t1\t0.5\n0\thead\t2\t0\t1\n", p).is_err());
        assert!(ScoreSet::from_tsv("m", "0\thead\t0\t0\t0.5\n", p).is_err());
        assert!(ScoreSet::from_tsv("m", "0\thead\t0\t1\tNaN\n", p).is_err());
    }

    proptest! {
        #[test]
        fn tsv_round_trip_is_lossless(scores in prop::collection::vec(
            (any::<f64>().prop_filter("finite", |v| v.is_finite()),
             prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..5)), 0..8)) {
            let set = ScoreSet {
                model_name: "p".into(),
                keys: (0..scores.len()).map(|i| (i, if i % 2 == 0 { Side::Head } else { Side::Tail })).collect(),
                queries: scores.into_iter().map(|(positive, negatives)| QueryScores { positive, negatives }).collect(),
            };
            let back = ScoreSet::from_tsv("p", &set.to_tsv(), Path::new("p.tsv")).unwrap();
            prop_assert_eq!(back, set);
        }
    }
}
