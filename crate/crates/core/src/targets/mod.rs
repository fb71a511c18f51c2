//! Supervision targets built from labels or boxes. No relationship
//! annotations are consumed: pairs are selected from class labels and box
//! overlap alone, except for [`target_from_relations`], which takes an
//! explicit pair list.

mod boxes;
mod scene_file;

pub use boxes::{iou, LabeledBox};
pub use scene_file::{parse_scene, read_scene_file, write_scene, write_scene_file, SceneBoxes};

use serde::{Deserialize, Serialize};

use crate::affinity::TargetMatrix;
use crate::error::{Error, Result};

/// IoU a proposal must exceed to count as covering a ground-truth object.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Category labels of a batch, one per entity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchLabels {
    labels: Vec<usize>,
    num_classes: usize,
}

impl BatchLabels {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `T[a, b] = 1` iff `a ≠ b` share a category.
pub fn target_same_class(labels: &BatchLabels) -> TargetMatrix {
    let l = labels.labels();
    let mut t = TargetMatrix::zeros(l.len());
    for a in 0..l.len() {
        for b in 0..l.len() {
            if a != b && l[a] == l[b] {
                t.set(a, b, true);
            }
        }
    }
    t
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Matched objects must be distinct and of different classes.
    DifferentCategory,
    /// Matched objects must be distinct; classes may coincide.
    DifferentInstance,
}

impl PairMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "different_category" | "category" => Ok(PairMode::DifferentCategory),
            "different_instance" | "instance" => Ok(PairMode::DifferentInstance),
            other => Err(Error::config(format!("unknown pair mode `{other}`"))),
        }
    }
}

/// Index of the ground-truth box each proposal covers: the highest IoU
/// strictly above `iou_thresh`, ties going to the lower index. `None` for
/// proposals that cover nothing.
pub fn match_proposals(
    proposals: &[LabeledBox],
    gt: &[LabeledBox],
    iou_thresh: f64,
) -> Vec<Option<usize>> {
    proposals
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gb) in gt.iter().enumerate() {
                let v = iou(p, gb);
                if v > iou_thresh && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            best.map(|(g, _)| g)
        })
        .collect()
}

/// Proposal-pair target from box overlap: `T[a, b] = 1` iff `a` covers
/// ground truth `α`, `b` covers `β`, `α ≠ β`, and under
/// [`PairMode::DifferentCategory`] their classes differ.
pub fn target_from_boxes(
    proposals: &[LabeledBox],
    gt: &[LabeledBox],
    mode: PairMode,
    iou_thresh: f64,
) -> Result<TargetMatrix> {
    if proposals.is_empty() {
        return Err(Error::DegenerateTarget("no proposals".into()));
    }
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::config(format!(
            "iou threshold must lie in (0, 1), got {iou_thresh}"
        )));
    }
    let matched = match_proposals(proposals, gt, iou_thresh);
    let n = proposals.len();
    let mut t = TargetMatrix::zeros(n);
    for a in 0..n {
        let Some(alpha) = matched[a] else { continue };
        for (b, m) in matched.iter().enumerate() {
            let Some(beta) = *m else { continue };
            if a == b || alpha == beta {
                continue;
            }
            let related = match mode {
                PairMode::DifferentInstance => true,
                PairMode::DifferentCategory => gt[alpha].class_id != gt[beta].class_id,
            };
            if related {
                t.set(a, b, true);
            }
        }
    }
    Ok(t)
}

/// Target from an explicit list of related `(i, j)` pairs, set in both
/// directions.
pub fn target_from_relations(n: usize, pairs: &[(usize, usize)]) -> Result<TargetMatrix> {
    TargetMatrix::from_pairs(n, pairs, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(x: f64, class_id: usize, instance_id: usize) -> LabeledBox {
        LabeledBox::new(x, 0.0, x + 10.0, 10.0, class_id, instance_id).unwrap()
    }

    #[test]
    fn same_class_examples() {
        let t = target_same_class(&BatchLabels::new(vec![0, 0, 1], 2).unwrap());
        assert_eq!(t.pairs(), vec![(0, 1), (1, 0)]);

        let t = target_same_class(&BatchLabels::new(vec![0, 1, 2, 3], 4).unwrap());
        assert!(t.is_empty());

        let t = target_same_class(&BatchLabels::new(vec![2; 4], 3).unwrap());
        assert_eq!(t.selected_count(), 12);
    }

    #[test]
    fn labels_out_of_range_rejected() {
        assert!(BatchLabels::new(vec![0, 3], 3).is_err());
    }

    #[test]
    fn proposals_on_distinct_class_objects() {
        let g = [gt(0.0, 0, 0), gt(50.0, 1, 1)];
        let t = target_from_boxes(&g, &g, PairMode::DifferentCategory, 0.5).unwrap();
        assert_eq!(t.pairs(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn proposals_on_one_object_are_unrelated() {
        let g = [gt(0.0, 0, 0), gt(50.0, 1, 1)];
        let props = [g[0], g[0]];
        for mode in [PairMode::DifferentCategory, PairMode::DifferentInstance] {
            assert!(target_from_boxes(&props, &g, mode, 0.5).unwrap().is_empty());
        }
    }

    #[test]
    fn same_class_instances_depend_on_mode() {
        let g = [gt(0.0, 3, 0), gt(50.0, 3, 1)];
        let cat = target_from_boxes(&g, &g, PairMode::DifferentCategory, 0.5).unwrap();
        assert!(cat.is_empty());
        let inst = target_from_boxes(&g, &g, PairMode::DifferentInstance, 0.5).unwrap();
        assert_eq!(inst.pairs(), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unmatched_proposal_is_unsupervised() {
        let g = [gt(0.0, 0, 0), gt(50.0, 1, 1)];
        let far = LabeledBox::new(200.0, 200.0, 210.0, 210.0, 0, 9).unwrap();
        let props = [g[0], far, g[1]];
        let t = target_from_boxes(&props, &g, PairMode::DifferentCategory, 0.5).unwrap();
        assert!(!t.row_has_target(1));
        assert_eq!(t.pairs(), vec![(0, 2), (2, 0)]);
    }

    #[test]
    fn highest_iou_wins() {
        let g = [gt(0.0, 0, 0), gt(2.0, 1, 1)];
        let p = LabeledBox::new(1.8, 0.0, 11.8, 10.0, 0, 0).unwrap();
        assert_eq!(match_proposals(&[p], &g, 0.5), vec![Some(1)]);
    }

    #[test]
    fn empty_proposals_rejected() {
        assert!(matches!(
            target_from_boxes(&[], &[gt(0.0, 0, 0)], PairMode::DifferentCategory, 0.5),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn explicit_relations_are_symmetric() {
        let t = target_from_relations(4, &[(0, 3), (1, 2)]).unwrap();
        assert!(t.is_symmetric());
        assert_eq!(t.selected_count(), 4);
    }
}
