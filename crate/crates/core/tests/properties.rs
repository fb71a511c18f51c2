use affgraph::affinity::{
    mass_loss, target_mass, AffinityMatrix, LossConfig, LossForm, Scope, TargetMatrix,
};
use affgraph::eval::{rank_pairs_raw, recall_at_k, RecallQuery};
use affgraph::numerics::{softmax_matrix, softmax_rows, DenseMatrix};
use affgraph::targets::{iou, target_from_boxes, target_same_class, BatchLabels, LabeledBox, PairMode};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DenseMatrix::new(rows, cols, v).unwrap())
}

fn square_with_target(max_n: usize) -> impl Strategy<Value = (DenseMatrix, TargetMatrix)> {
    (2..=max_n).prop_flat_map(|n| {
        (matrix(n, n, -4.0, 4.0), prop::collection::vec(any::<bool>(), n * n)).prop_map(move |(raw, bits)| {
            let mut t = DenseMatrix::from_fn(n, n, |i, j| if bits[i * n + j] { 1.0 } else { 0.0 });
            t.set(0, 1, 1.0);
            (raw, TargetMatrix::from_matrix(t).unwrap())
        })
    })
}

fn boxes(max: usize) -> impl Strategy<Value = Vec<LabeledBox>> {
    prop::collection::vec((0.0..40.0f64, 0.0..40.0f64, 1.0..20.0f64, 1.0..20.0f64, 0..3usize), 1..max).prop_map(
        |v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, w, h, c))| LabeledBox::new(x, y, x + w, y + h, c, i).unwrap())
                .collect()
        },
    )
}

/// Brute-force target: each proposal takes the ground truth with the
/// highest IoU strictly above the threshold (lowest index on ties).
fn boxes_oracle(props: &[LabeledBox], gt: &[LabeledBox], mode: PairMode, thresh: f64) -> DenseMatrix {
    let owner = |p: &LabeledBox| -> Option<usize> {
        let mut cands: Vec<(usize, f64)> = gt.iter().map(|g| iou(p, g)).enumerate().filter(|&(_, v)| v > thresh).collect();
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        cands.first().map(|c| c.0)
    };
    let owners: Vec<Option<usize>> = props.iter().map(owner).collect();
    DenseMatrix::from_fn(props.len(), props.len(), |a, b| match (owners[a], owners[b]) {
        (Some(x), Some(y)) if a != b && x != y => {
            let ok = mode == PairMode::DifferentInstance || gt[x].class_id != gt[y].class_id;
            if ok { 1.0 } else { 0.0 }
        }
        _ => 0.0,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_sums_to_one(w in (1..7usize, 1..7usize).prop_flat_map(|(r, c)| matrix(r, c, -50.0, 50.0))) {
        let m = softmax_matrix(&w).unwrap();
        prop_assert!((m.sum() - 1.0).abs() < 1e-12);
        for s in softmax_rows(&w).unwrap().row_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(w in matrix(4, 5, -10.0, 10.0), c in -100.0..100.0f64) {
        let shifted = w.map(|v| v + c);
        let d = softmax_matrix(&w).unwrap().max_abs_diff(&softmax_matrix(&shifted).unwrap()).unwrap();
        prop_assert!(d < 1e-12);
        let d = softmax_rows(&w).unwrap().max_abs_diff(&softmax_rows(&shifted).unwrap()).unwrap();
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_scores(w in matrix(3, 3, -1e300, 1e300)) {
        prop_assert!(softmax_matrix(&w).unwrap().is_finite());
        prop_assert!(softmax_rows(&w).unwrap().is_finite());
    }

    #[test]
    fn matmul_is_associative(a in matrix(3, 4, -2.0, 2.0), b in matrix(4, 2, -2.0, 2.0), c in matrix(2, 5, -2.0, 2.0)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-10);
    }

    #[test]
    fn transposed_products_agree(a in matrix(3, 4, -2.0, 2.0), b in matrix(5, 4, -2.0, 2.0)) {
        let direct = a.matmul(&b.transpose()).unwrap();
        prop_assert!(a.matmul_bt(&b).unwrap().max_abs_diff(&direct).unwrap() < 1e-12);
        let at = a.transpose().matmul_at(&b.transpose()).unwrap();
        prop_assert!(at.max_abs_diff(&direct).unwrap() < 1e-12);
    }

    #[test]
    fn mass_matches_brute_force((raw, t) in square_with_target(7)) {
        let z: f64 = raw.as_slice().iter().map(|v| v.exp()).sum();
        let n = raw.rows();
        let mut expect = 0.0;
        for i in 0..n {
            for j in 0..n {
                if t.get(i, j) {
                    expect += raw[(i, j)].exp() / z;
                }
            }
        }
        let w = AffinityMatrix::normalized_from_raw(raw, Scope::MatrixWise).unwrap();
        let r = target_mass(&w, &t).unwrap();
        prop_assert!((r.mass - expect).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&r.mass));
    }

    #[test]
    fn mass_losses_are_shift_invariant((raw, t) in square_with_target(6), c in -20.0..20.0f64, form_ix in 0..4usize) {
        // Entry-wise BCE reads raw scores directly, so only the softmax forms qualify.
        let form = [LossForm::L2, LossForm::SmoothL1, LossForm::Focal, LossForm::RowFocal][form_ix];
        for scope in [Scope::MatrixWise, Scope::RowWise] {
            let cfg = LossConfig::focal(2.0, 1.0).with_form(form).with_scope(scope);
            let a = mass_loss(&AffinityMatrix::from_raw(raw.clone()).unwrap(), &t, &cfg).unwrap();
            let b = mass_loss(&AffinityMatrix::from_raw(raw.map(|v| v + c)).unwrap(), &t, &cfg).unwrap();
            prop_assert!((a.loss - b.loss).abs() < 1e-9);
            prop_assert!(a.grad_raw.max_abs_diff(&b.grad_raw).unwrap() < 1e-9);
        }
    }

    #[test]
    fn focal_loss_falls_as_mass_rises((raw, t) in square_with_target(6), gamma in 0.0..6.0f64) {
        // One small step against the gradient must not raise the loss.
        let cfg = LossConfig::focal(gamma, 1.0);
        let l = mass_loss(&AffinityMatrix::from_raw(raw.clone()).unwrap(), &t, &cfg).unwrap();
        let mut next = raw.clone();
        next.add_scaled(&l.grad_raw, -1e-3).unwrap();
        let l2 = mass_loss(&AffinityMatrix::from_raw(next).unwrap(), &t, &cfg).unwrap();
        prop_assert!(l2.loss <= l.loss + 1e-12);
        prop_assert!(l2.report.mass >= l.report.mass - 1e-12);
    }

    #[test]
    fn same_class_target_matches_definition(labels in prop::collection::vec(0..5usize, 1..30)) {
        let t = target_same_class(&BatchLabels::new(labels.clone(), 5).unwrap());
        prop_assert!(t.is_symmetric());
        for a in 0..labels.len() {
            for b in 0..labels.len() {
                prop_assert_eq!(t.get(a, b), a != b && labels[a] == labels[b]);
            }
        }
    }

    #[test]
    fn box_targets_match_oracle(props in boxes(12), gt in boxes(6), thresh in 0.05..0.95f64) {
        for mode in [PairMode::DifferentCategory, PairMode::DifferentInstance] {
            let t = target_from_boxes(&props, &gt, mode, thresh).unwrap();
            prop_assert_eq!(t.as_matrix(), &boxes_oracle(&props, &gt, mode, thresh));
            prop_assert!(t.is_symmetric());
        }
    }

    #[test]
    fn instance_target_contains_category_target(props in boxes(12), gt in boxes(6)) {
        let cat = target_from_boxes(&props, &gt, PairMode::DifferentCategory, 0.5).unwrap();
        let inst = target_from_boxes(&props, &gt, PairMode::DifferentInstance, 0.5).unwrap();
        prop_assert!(inst.contains(&cat));
    }

    #[test]
    fn raising_the_threshold_only_removes_pairs(props in boxes(12), gt in boxes(6), lo in 0.05..0.5f64, gap in 0.0..0.45f64) {
        for mode in [PairMode::DifferentCategory, PairMode::DifferentInstance] {
            let loose = target_from_boxes(&props, &gt, mode, lo).unwrap();
            let strict = target_from_boxes(&props, &gt, mode, lo + gap).unwrap();
            prop_assert!(loose.contains(&strict));
        }
    }

    #[test]
    fn recall_is_monotone_in_k(raw in matrix(8, 8, -3.0, 3.0), truth in prop::collection::btree_set((0..8usize, 0..8usize), 1..12)) {
        let truth: Vec<(usize, usize)> = truth.into_iter().filter(|(i, j)| i != j).map(|(i, j)| (i.min(j), i.max(j))).collect();
        prop_assume!(!truth.is_empty());
        let ranked = rank_pairs_raw(&raw, usize::MAX);
        let mut prev = 0.0;
        for k in 1..=ranked.len() + 2 {
            let r = recall_at_k(&RecallQuery::new(k, ranked.clone(), truth.iter().copied()).unwrap()).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn ranking_ignores_constant_shift(ints in prop::collection::vec(-8i32..8, 36), c in -1000i32..1000, k in 1..20usize) {
        // Quarter steps keep every sum exact, so ties survive the shift.
        let raw = DenseMatrix::new(6, 6, ints.iter().map(|&v| v as f64 * 0.25).collect()).unwrap();
        let a: Vec<_> = rank_pairs_raw(&raw, k).into_iter().map(|p| (p.i, p.j)).collect();
        let b: Vec<_> = rank_pairs_raw(&raw.map(|v| v + c as f64), k).into_iter().map(|p| (p.i, p.j)).collect();
        prop_assert_eq!(a, b);
    }
}
