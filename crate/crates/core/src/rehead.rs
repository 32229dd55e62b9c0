//! Toy relation-extraction heads over mean-pooled selected sentences.
//!
//! A path is represented by `[mean(head rows), mean(tail rows)]`; a two-layer
//! scorer maps it to per-relation scores. The end-to-end variant adds an N/A
//! logit and trains with softmax cross-entropy; the threshold variant trains
//! with the multi-label global-threshold loss against a threshold `theta`.

use std::collections::BTreeSet;

use ndarray::{concatenate, Array1, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelationId;
use crate::error::{ReicError, Result};
use crate::nn::{log_sum_exp, DenseLayer, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    #[serde(rename = "end2end")]
    EndToEnd,
    Threshold,
}

impl std::str::FromStr for HeadVariant {
    type Err = ReicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "end2end" => Ok(HeadVariant::EndToEnd),
            "threshold" => Ok(HeadVariant::Threshold),
            other => Err(ReicError::Config(format!("unknown head `{other}` (end2end|threshold)"))),
        }
    }
}

impl std::fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HeadVariant::EndToEnd => "end2end",
            HeadVariant::Threshold => "threshold",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRep(pub Array1<f64>);

/// Row means of the selected head and tail embeddings, head first.
pub fn path_representation(head_rows: ArrayView2<f64>, tail_rows: ArrayView2<f64>) -> Result<PathRep> {
    if head_rows.nrows() == 0 || tail_rows.nrows() == 0 {
        return Err(ReicError::Data(
            "path representation needs at least one sentence per document".into(),
        ));
    }
    if head_rows.ncols() != tail_rows.ncols() {
        return Err(ReicError::shape(
            "path representation",
            head_rows.ncols(),
            tail_rows.ncols(),
        ));
    }
    let h = head_rows.mean_axis(Axis(0)).expect("non-empty");
    let t = tail_rows.mean_axis(Axis(0)).expect("non-empty");
    Ok(PathRep(
        concatenate(Axis(0), &[h.view(), t.view()]).expect("1-d concat"),
    ))
}

/// Gold relation set of an entity pair; empty for N/A.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationLabelSet(pub BTreeSet<RelationId>);

impl RelationLabelSet {
    pub fn from_label(label: Option<RelationId>) -> Self {
        RelationLabelSet(label.into_iter().collect())
    }

    pub fn contains(&self, r: RelationId) -> bool {
        self.0.contains(&r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub variant: HeadVariant,
    pub embed_dim: usize,
    pub hidden: usize,
    pub n_relations: usize,
    pub theta: f64,
    pub train_theta: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReHead {
    pub variant: HeadVariant,
    pub n_relations: usize,
    pub hidden: DenseLayer,
    pub out: DenseLayer,
    pub theta: f64,
    pub grad_theta: f64,
    pub train_theta: bool,
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    input: Array1<f64>,
    activations: Array1<f64>,
}

impl ReHead {
    pub fn new<R: Rng + ?Sized>(cfg: HeadConfig, rng: &mut R) -> Self {
        let outputs = Self::outputs_for(cfg.variant, cfg.n_relations);
        ReHead {
            variant: cfg.variant,
            n_relations: cfg.n_relations,
            hidden: DenseLayer::new(2 * cfg.embed_dim, cfg.hidden, rng),
            out: DenseLayer::new(cfg.hidden, outputs, rng),
            theta: cfg.theta,
            grad_theta: 0.0,
            train_theta: cfg.train_theta,
        }
    }

    pub fn zeros(cfg: HeadConfig) -> Self {
        let outputs = Self::outputs_for(cfg.variant, cfg.n_relations);
        ReHead {
            variant: cfg.variant,
            n_relations: cfg.n_relations,
            hidden: DenseLayer::zeros(2 * cfg.embed_dim, cfg.hidden),
            out: DenseLayer::zeros(cfg.hidden, outputs),
            theta: cfg.theta,
            grad_theta: 0.0,
            train_theta: cfg.train_theta,
        }
    }

    fn outputs_for(variant: HeadVariant, n_relations: usize) -> usize {
        match variant {
            HeadVariant::EndToEnd => n_relations + 1,
            HeadVariant::Threshold => n_relations,
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.out.out_dim()
    }

    /// Raw scores; the end-to-end variant's last entry is the N/A logit.
    pub fn score(&self, rep: &PathRep) -> Result<(Array1<f64>, HeadCache)> {
        let pre = self.hidden.forward(rep.0.view())?;
        let activations = pre.mapv(f64::tanh);
        let scores = self.out.forward(activations.view())?;
        Ok((
            scores,
            HeadCache {
                input: rep.0.clone(),
                activations,
            },
        ))
    }

    pub fn backward(&mut self, cache: &HeadCache, grad_scores: ArrayView1<f64>) {
        let da = self.out.backward(cache.activations.view(), grad_scores);
        let dpre = &da * &cache.activations.mapv(|a| 1.0 - a * a);
        self.hidden.backward(cache.input.view(), dpre.view());
    }
}

impl Parameterized for ReHead {
    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        self.hidden.visit(f);
        self.out.visit(f);
        if self.train_theta {
            f(
                std::slice::from_ref(&self.theta),
                std::slice::from_ref(&self.grad_theta),
            );
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.hidden.visit_mut(f);
        self.out.visit_mut(f);
        if self.train_theta {
            f(
                std::slice::from_mut(&mut self.theta),
                std::slice::from_mut(&mut self.grad_theta),
            );
        }
    }
}

pub fn score_relations(head: &ReHead, rep: &PathRep) -> Result<Array1<f64>> {
    Ok(head.score(rep)?.0)
}

/// Elementwise maximum over paths, with the winning path per entry.
pub fn aggregate_bag_with_argmax(path_scores: &[Array1<f64>]) -> Result<(Array1<f64>, Vec<usize>)> {
    let first = path_scores
        .first()
        .ok_or_else(|| ReicError::Data("cannot aggregate a bag with no paths".into()))?;
    let mut best = first.clone();
    let mut which = vec![0; first.len()];
    for (p, s) in path_scores.iter().enumerate().skip(1) {
        if s.len() != best.len() {
            return Err(ReicError::shape("path scores", best.len(), s.len()));
        }
        for k in 0..s.len() {
            if s[k] > best[k] {
                best[k] = s[k];
                which[k] = p;
            }
        }
    }
    Ok((best, which))
}

pub fn aggregate_bag(path_scores: &[Array1<f64>]) -> Result<Array1<f64>> {
    Ok(aggregate_bag_with_argmax(path_scores)?.0)
}

/// Global-threshold loss
/// `log(e^theta + sum_{r not in gold} e^{y_r}) + log(e^{-theta} + sum_{r in gold} e^{-y_r})`.
pub fn loss_threshold(scores: ArrayView1<f64>, gold: &RelationLabelSet, theta: f64) -> f64 {
    loss_threshold_grad(scores, gold, theta).0
}

/// Loss together with `d/dy` and `d/dtheta`.
pub fn loss_threshold_grad(scores: ArrayView1<f64>, gold: &RelationLabelSet, theta: f64) -> (f64, Array1<f64>, f64) {
    let negatives: Vec<f64> = std::iter::once(theta)
        .chain(
            scores
                .iter()
                .enumerate()
                .filter(|(r, _)| !gold.contains(*r))
                .map(|(_, &y)| y),
        )
        .collect();
    let positives: Vec<f64> = std::iter::once(-theta)
        .chain(
            scores
                .iter()
                .enumerate()
                .filter(|(r, _)| gold.contains(*r))
                .map(|(_, &y)| -y),
        )
        .collect();
    let lse_neg = log_sum_exp(negatives.iter().copied());
    let lse_pos = log_sum_exp(positives.iter().copied());

    let mut grad = Array1::zeros(scores.len());
    for (r, &y) in scores.iter().enumerate() {
        grad[r] = if gold.contains(r) {
            -(-y - lse_pos).exp()
        } else {
            (y - lse_neg).exp()
        };
    }
    let grad_theta = (theta - lse_neg).exp() - (-theta - lse_pos).exp();
    (lse_neg + lse_pos, grad, grad_theta)
}

fn class_index(n_classes: usize, label: Option<RelationId>) -> Result<usize> {
    match label {
        None => Ok(n_classes - 1),
        Some(r) if r + 1 < n_classes => Ok(r),
        Some(r) => Err(ReicError::Data(format!(
            "relation {r} out of range for {} relations",
            n_classes - 1
        ))),
    }
}

/// Softmax cross-entropy over relations plus a trailing N/A class.
pub fn loss_end2end(scores: ArrayView1<f64>, label: Option<RelationId>) -> Result<f64> {
    Ok(loss_end2end_grad(scores, label)?.0)
}

pub fn loss_end2end_grad(scores: ArrayView1<f64>, label: Option<RelationId>) -> Result<(f64, Array1<f64>)> {
    if scores.len() < 2 {
        return Err(ReicError::Data(
            "end-to-end scores need at least one relation plus N/A".into(),
        ));
    }
    let k = class_index(scores.len(), label)?;
    let lse = log_sum_exp(scores.iter().copied());
    let mut grad = scores.mapv(|s| (s - lse).exp());
    grad[k] -= 1.0;
    Ok((lse - scores[k], grad))
}

/// Softmax over all end-to-end outputs.
pub fn softmax(scores: ArrayView1<f64>) -> Array1<f64> {
    let lse = log_sum_exp(scores.iter().copied());
    scores.mapv(|s| (s - lse).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_grad, max_relative_error};
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_threshold(y: &[f64], gold: &RelationLabelSet, theta: f64) -> f64 {
        let mut a = theta.exp();
        let mut b = (-theta).exp();
        for (r, &v) in y.iter().enumerate() {
            if gold.contains(r) {
                b += (-v).exp();
            } else {
                a += v.exp();
            }
        }
        a.ln() + b.ln()
    }

    fn head_cfg(variant: HeadVariant) -> HeadConfig {
        HeadConfig {
            variant,
            embed_dim: 3,
            hidden: 4,
            n_relations: 3,
            theta: 0.0,
            train_theta: false,
        }
    }

    #[test]
    fn single_rows_concatenate() {
        let rep = path_representation(array![[1.0, 2.0]].view(), array![[3.0, 4.0]].view()).unwrap();
        assert_eq!(rep.0, array![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn opposite_rows_cancel() {
        let rep = path_representation(array![[1.0, -2.0], [-1.0, 2.0]].view(), array![[0.5, 0.5]].view()).unwrap();
        assert_eq!(rep.0, array![0.0, 0.0, 0.5, 0.5]);
    }

    #[test]
    fn representation_is_row_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
        let t = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let rep = path_representation(h.view(), t.view()).unwrap();
        for j in 0..3 {
            let mh: f64 = (0..5).map(|i| h[[i, j]]).sum::<f64>() / 5.0;
            let mt: f64 = (0..2).map(|i| t[[i, j]]).sum::<f64>() / 2.0;
            assert!((rep.0[j] - mh).abs() < 1e-15);
            assert!((rep.0[3 + j] - mt).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_selection_rejected() {
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(path_representation(empty.view(), array![[1.0, 1.0]].view()).is_err());
    }

    #[test]
    fn zero_scorer_gives_zero_scores() {
        let head = ReHead::zeros(head_cfg(HeadVariant::EndToEnd));
        let rep = PathRep(array![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let s = score_relations(&head, &rep).unwrap();
        assert_eq!(s, Array1::<f64>::zeros(4));
        assert_eq!(ReHead::zeros(head_cfg(HeadVariant::Threshold)).n_outputs(), 3);
    }

    #[test]
    fn scorer_gradient_matches_finite_differences() {
        for variant in [HeadVariant::EndToEnd, HeadVariant::Threshold] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut head = ReHead::new(head_cfg(variant), &mut rng);
            let rep = PathRep(Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0)));
            let weights = Array1::from_shape_fn(head.n_outputs(), |_| rng.random_range(-1.0..1.0));
            let (scores, cache) = head.score(&rep).unwrap();
            assert_eq!(scores, score_relations(&head, &rep).unwrap());
            head.zero_grads();
            head.backward(&cache, weights.view());
            let mut probe = head.clone();
            let numeric = finite_diff_grad(
                |p| {
                    probe.set_flat_params(p);
                    score_relations(&probe, &rep).unwrap().dot(&weights)
                },
                &head.flat_params(),
                1e-5,
            );
            assert!(max_relative_error(&head.flat_grads(), &numeric) < 1e-4);
        }
    }

    #[test]
    fn aggregation_rules() {
        let one = vec![array![0.3, -1.0]];
        assert_eq!(aggregate_bag(&one).unwrap(), one[0]);
        let two = vec![array![1.0, 0.0], array![0.0, 1.0]];
        let (agg, which) = aggregate_bag_with_argmax(&two).unwrap();
        assert_eq!(agg, array![1.0, 1.0]);
        assert_eq!(which, vec![0, 1]);
        assert!(aggregate_bag(&[]).is_err());
    }

    #[test]
    fn threshold_loss_hand_values() {
        let gold = RelationLabelSet::from_label(Some(0));
        assert!((loss_threshold(array![1.0].view(), &gold, 0.0) - 0.31326).abs() < 1e-5);
        let none = RelationLabelSet::from_label(None);
        assert!((loss_threshold(array![-2.0].view(), &none, 0.0) - 0.12693).abs() < 1e-5);
    }

    #[test]
    fn threshold_loss_vanishes_with_perfect_separation() {
        let gold = RelationLabelSet::from_label(Some(1));
        let l = loss_threshold(array![-60.0, 60.0, -60.0].view(), &gold, 0.0);
        assert!(l < 1e-20);
        assert!(loss_threshold(array![-800.0, 800.0, -800.0].view(), &gold, 0.0).is_finite());
    }

    #[test]
    fn threshold_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let theta = rng.random_range(-1.0..1.0);
            let gold = RelationLabelSet([1usize, 3].into_iter().collect());
            let mut params = y.clone();
            params.push(theta);
            let (_, gy, gt) = loss_threshold_grad(Array1::from(y.clone()).view(), &gold, theta);
            let numeric = finite_diff_grad(
                |p| loss_threshold(Array1::from(p[..5].to_vec()).view(), &gold, p[5]),
                &params,
                1e-5,
            );
            let mut analytic = gy.to_vec();
            analytic.push(gt);
            assert!(max_relative_error(&analytic, &numeric) < 1e-6);
        }
    }

    #[test]
    fn end2end_loss_cases() {
        let uniform = Array1::from_elem(5, 0.7);
        assert!((loss_end2end(uniform.view(), Some(2)).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!(loss_end2end(array![50.0, -50.0, -50.0].view(), Some(0)).unwrap() < 1e-20);
        let s = array![0.2, -1.1, 0.9, 0.4];
        let direct = -((s[3] as f64).exp() / s.iter().map(|v: &f64| v.exp()).sum::<f64>()).ln();
        assert!((loss_end2end(s.view(), None).unwrap() - direct).abs() < 1e-12);
        assert!(loss_end2end(s.view(), Some(3)).is_err());
    }

    #[test]
    fn end2end_gradient_is_softmax_minus_onehot() {
        let s = array![0.2, -1.1, 0.9, 0.4];
        let (_, g) = loss_end2end_grad(s.view(), Some(1)).unwrap();
        let numeric = finite_diff_grad(
            |p| loss_end2end(Array1::from(p.to_vec()).view(), Some(1)).unwrap(),
            s.as_slice().unwrap(),
            1e-5,
        );
        assert!(max_relative_error(g.as_slice().unwrap(), &numeric) < 1e-6);
    }

    proptest! {
        #[test]
        fn stabilized_matches_naive(
            y in prop::collection::vec(-20.0f64..20.0, 1..8),
            theta in -5.0f64..5.0,
            gold_mask in prop::collection::vec(any::<bool>(), 8),
        ) {
            let gold = RelationLabelSet((0..y.len()).filter(|&r| gold_mask[r]).collect());
            let a = loss_threshold(Array1::from(y.clone()).view(), &gold, theta);
            let b = naive_threshold(&y, &gold, theta);
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn threshold_loss_is_monotone(
            y in prop::collection::vec(-5.0f64..5.0, 2..6),
            pick in 0usize..6,
            bump in 0.01f64..1.0,
        ) {
            let r = pick % y.len();
            let gold = RelationLabelSet::from_label(Some(0));
            let base = loss_threshold(Array1::from(y.clone()).view(), &gold, 0.0);
            let mut up = y.clone();
            up[r] += bump;
            let moved = loss_threshold(Array1::from(up).view(), &gold, 0.0);
            if gold.contains(r) { prop_assert!(moved < base); } else { prop_assert!(moved > base); }
        }

        #[test]
        fn aggregation_ignores_order_and_duplicates(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..6),
            rot in 0usize..6,
        ) {
            let paths: Vec<Array1<f64>> = rows.into_iter().map(Array1::from).collect();
            let base = aggregate_bag(&paths).unwrap();
            let mut rotated = paths.clone();
            rotated.rotate_left(rot % paths.len());
            prop_assert_eq!(aggregate_bag(&rotated).unwrap(), base.clone());
            let mut doubled = paths.clone();
            doubled.extend(paths.iter().cloned());
            prop_assert_eq!(aggregate_bag(&doubled).unwrap(), base);
        }
    }
}
