use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::Serialize;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScoredPair {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

/// Descending score, then ascending `(i, j)`.
fn rank_order(a: &ScoredPair, b: &ScoredPair) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then((a.i, a.j).cmp(&(b.i, b.j)))
}

/// Collapses `(i, j)` and `(j, i)` into one unordered pair `i < j` holding
/// the larger score, drops self-pairs, and sorts by [`rank_order`].
pub fn dedupe_pairs(pairs: impl IntoIterator<Item = ScoredPair>) -> Vec<ScoredPair> {
    let mut best: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for p in pairs {
        if p.i == p.j {
            continue;
        }
        let key = (p.i.min(p.j), p.i.max(p.j));
        best.entry(key)
            .and_modify(|s| *s = s.max(p.score))
            .or_insert(p.score);
    }
    let mut out: Vec<_> = best
        .into_iter()
        .map(|((i, j), score)| ScoredPair { i, j, score })
        .collect();
    out.sort_by(rank_order);
    out
}

/// Top-`k` off-diagonal pairs of the raw scores, symmetrized by max.
pub fn rank_pairs(w: &AffinityMatrix, k: usize) -> Vec<ScoredPair> {
    rank_pairs_raw(w.raw(), k)
}

pub fn rank_pairs_raw(raw: &DenseMatrix, k: usize) -> Vec<ScoredPair> {
    let n = raw.rows();
    let mut ranked = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            ranked.push(ScoredPair {
                i,
                j,
                score: raw[(i, j)].max(raw[(j, i)]),
            });
        }
    }
    ranked.sort_by(rank_order);
    ranked.truncate(k);
    ranked
}

#[derive(Clone, Debug)]
pub struct RecallQuery {
    k: usize,
    predicted: Vec<ScoredPair>,
    truth: BTreeSet<(usize, usize)>,
}

impl RecallQuery {
    /// Dedupes and ranks `predicted`; truth pairs are taken as unordered.
    pub fn new(
        k: usize,
        predicted: impl IntoIterator<Item = ScoredPair>,
        truth: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("recall needs k ≥ 1"));
        }
        Ok(Self {
            k,
            predicted: dedupe_pairs(predicted),
            truth: truth
                .into_iter()
                .filter(|(i, j)| i != j)
                .map(|(i, j)| (i.min(j), i.max(j)))
                .collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn predicted(&self) -> &[ScoredPair] {
        &self.predicted
    }

    pub fn truth(&self) -> &BTreeSet<(usize, usize)> {
        &self.truth
    }
}

/// `|truth ∩ top-k| / |truth|`.
pub fn recall_at_k(q: &RecallQuery) -> Result<f64> {
    if q.truth.is_empty() {
        return Err(Error::UndefinedMetric("recall over an empty truth set".into()));
    }
    let hit = q
        .predicted
        .iter()
        .take(q.k)
        .filter(|p| q.truth.contains(&(p.i, p.j)))
        .count();
    Ok(hit as f64 / q.truth.len() as f64)
}

/// Recall of the top-`k` pairs of a raw score matrix.
pub fn recall_of_scores(raw: &DenseMatrix, truth: &[(usize, usize)], k: usize) -> Result<f64> {
    let q = RecallQuery::new(k, rank_pairs_raw(raw, usize::MAX), truth.iter().copied())?;
    recall_at_k(&q)
}

/// Mean within-class pairwise Euclidean distance over mean between-class
/// distance. Lower means tighter, better separated classes.
pub fn scatter_ratio(features: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if features.rows() != labels.len() {
        return Err(Error::shape("one label per feature row required"));
    }
    let (mut within, mut nw, mut between, mut nb) = (0.0, 0usize, 0.0, 0usize);
    for a in 0..labels.len() {
        for b in a + 1..labels.len() {
            let d = features
                .row(a)
                .iter()
                .zip(features.row(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            if labels[a] == labels[b] {
                within += d;
                nw += 1;
            } else {
                between += d;
                nb += 1;
            }
        }
    }
    if nw == 0 || nb == 0 || between == 0.0 {
        return Err(Error::UndefinedMetric(
            "scatter ratio needs within- and between-class pairs".into(),
        ));
    }
    Ok((within / nw as f64) / (between / nb as f64))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::shape("prediction and label counts differ"));
    }
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy over zero samples".into()));
    }
    let hit = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hit as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(i: usize, j: usize, score: f64) -> ScoredPair {
        ScoredPair { i, j, score }
    }

    #[test]
    fn full_coverage() {
        let q = RecallQuery::new(3, [sp(0, 1, 3.0), sp(1, 2, 2.0), sp(0, 2, 1.0)], [(0, 1), (2, 1)]).unwrap();
        assert_eq!(recall_at_k(&q).unwrap(), 1.0);
    }

    #[test]
    fn half_coverage_at_k1() {
        let q = RecallQuery::new(1, [sp(0, 1, 3.0), sp(1, 2, 2.0)], [(0, 1), (1, 2)]).unwrap();
        assert_eq!(recall_at_k(&q).unwrap(), 0.5);
    }

    #[test]
    fn disjoint() {
        let q = RecallQuery::new(5, [sp(0, 1, 3.0)], [(2, 3)]).unwrap();
        assert_eq!(recall_at_k(&q).unwrap(), 0.0);
    }

    #[test]
    fn empty_truth_is_undefined() {
        let q = RecallQuery::new(5, [sp(0, 1, 3.0)], []).unwrap();
        assert!(matches!(recall_at_k(&q), Err(Error::UndefinedMetric(_))));
        assert!(RecallQuery::new(0, [], [(0, 1)]).is_err());
    }

    #[test]
    fn dedupe_keeps_max_and_breaks_ties() {
        let d = dedupe_pairs([sp(1, 0, 5.0), sp(0, 1, 2.0), sp(2, 3, 5.0), sp(1, 1, 9.0)]);
        assert_eq!(d, vec![sp(0, 1, 5.0), sp(2, 3, 5.0)]);
    }

    #[test]
    fn rank_pairs_examples() {
        let two = AffinityMatrix::from_raw(DenseMatrix::from_rows(&[[0.0, 1.0], [3.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(rank_pairs(&two, 10), vec![sp(0, 1, 3.0)]);

        let inc = AffinityMatrix::from_raw(DenseMatrix::from_fn(4, 4, |r, c| (r * 4 + c) as f64)).unwrap();
        let top = rank_pairs(&inc, 1)[0];
        assert_eq!((top.i, top.j, top.score), (2, 3, 14.0));

        let flat = AffinityMatrix::from_raw(DenseMatrix::filled(4, 4, 0.3)).unwrap();
        let order: Vec<_> = rank_pairs(&flat, 4).iter().map(|p| (p.i, p.j)).collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (0, 3), (1, 2)]);
    }

    #[test]
    fn scatter_ratio_of_tight_clusters() {
        let f = DenseMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]]).unwrap();
        let r = scatter_ratio(&f, &[0, 0, 1, 1]).unwrap();
        let between = (10.0 + 10.0 + 101f64.sqrt() * 2.0) / 4.0;
        assert!((r - 1.0 / between).abs() < 1e-12);
        assert!(scatter_ratio(&f, &[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 1, 2]).unwrap(), 0.75);
        assert!(accuracy(&[], &[]).is_err());
    }
}
