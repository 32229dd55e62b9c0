//! Joint training: the selector builds each document's input, the relation
//! head is trained by backpropagation on bag labels, and the selector is
//! trained by REINFORCE on per-path rewards derived from the head's scores.

mod checkpoint;
mod reward;

pub use checkpoint::{Checkpoint, Tensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use reward::{reward_end2end, reward_threshold, RewardConfig};

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bridge_filter_select, snippet_select, BaselineConfig};
use crate::corpus::{target_sentence_index, Bag, Corpus, DocId, EmbeddingStore, EntityId};
use crate::error::{ReicError, Result};
use crate::metrics::{
    best_f1, bridge_mention_stats, mean_evidence_recall, pr_auc, precision_at_k, BridgeStats, PathSelection,
    RankedPrediction,
};
use crate::nn::{clip_grad_norm, Optimizer, OptimizerKind, Parameterized};
use crate::rehead::{
    aggregate_bag_with_argmax, loss_end2end_grad, loss_threshold_grad, path_representation, softmax, HeadCache,
    HeadConfig, HeadVariant, ReHead, RelationLabelSet,
};
use crate::rng::stream;
use crate::selector::{
    apply_token_cap, backprop_trajectory, select_with, DecodeMode, PolicyConfig, PolicyNetwork, SelectionTrace,
    SelectorConfig,
};

const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_SELECT: u64 = 3;
const TAG_EVAL: u64 = 4;
const ACCUMULATION_CHUNKS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Reic,
    OneStep,
    Snippet,
    Bridge,
}

impl SelectorKind {
    pub fn is_learned(self) -> bool {
        matches!(self, SelectorKind::Reic | SelectorKind::OneStep)
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = ReicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reic" => Ok(SelectorKind::Reic),
            "onestep" => Ok(SelectorKind::OneStep),
            "snippet" => Ok(SelectorKind::Snippet),
            "bridge" => Ok(SelectorKind::Bridge),
            other => Err(ReicError::Config(format!(
                "unknown selector `{other}` (reic|onestep|snippet|bridge)"
            ))),
        }
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelectorKind::Reic => "reic",
            SelectorKind::OneStep => "onestep",
            SelectorKind::Snippet => "snippet",
            SelectorKind::Bridge => "bridge",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_policy: f64,
    pub lr_re: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip: f64,
    pub master_seed: u64,
    pub selector: SelectorKind,
    pub selection: SelectorConfig,
    pub baseline: BaselineConfig,
    pub eval_mode: DecodeMode,
    pub policy: PolicyConfig,
    pub head_hidden: usize,
    pub theta: f64,
    pub train_theta: bool,
    pub optimizer: OptimizerKind,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_policy: 3e-3,
            lr_re: 3e-5,
            epochs: 30,
            batch_size: 8,
            grad_clip: 5.0,
            master_seed: 0,
            selector: SelectorKind::Reic,
            selection: SelectorConfig::default(),
            baseline: BaselineConfig::default(),
            eval_mode: DecodeMode::Argmax,
            policy: PolicyConfig::default(),
            head_hidden: 512,
            theta: 0.0,
            train_theta: false,
            optimizer: OptimizerKind::AdamW,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_policy > 0.0 && self.lr_re > 0.0) {
            return Err(ReicError::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ReicError::Config("batch_size must be at least 1".into()));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(ReicError::Config("grad_clip must be positive".into()));
        }
        if self.policy.embed_dim == 0
            || self.policy.hidden_dim == 0
            || self.policy.scorer_hidden == 0
            || self.head_hidden == 0
        {
            return Err(ReicError::Config("network widths must be at least 1".into()));
        }
        if !self.theta.is_finite() || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(ReicError::Config(
                "theta must be finite and weight_decay non-negative".into(),
            ));
        }
        self.selection.validate()?;
        self.baseline.validate()
    }

    /// Selection settings with `one_step` following the selector kind.
    pub fn selector_config(&self) -> SelectorConfig {
        SelectorConfig {
            one_step: self.selector == SelectorKind::OneStep,
            ..self.selection
        }
    }

    pub fn head_config(&self, variant: HeadVariant, n_relations: usize) -> HeadConfig {
        HeadConfig {
            variant,
            embed_dim: self.policy.embed_dim,
            hidden: self.head_hidden,
            n_relations,
            theta: self.theta,
            train_theta: self.train_theta,
        }
    }
}

struct DocInput {
    doc_id: DocId,
    entity: EntityId,
    target: usize,
    z: Array2<f64>,
}

struct PathInput {
    head: DocInput,
    tail: DocInput,
}

/// Corpus with every document's embedding matrix and target sentence
/// resolved up front.
pub struct PreparedCorpus<'a> {
    corpus: &'a Corpus,
    paths: Vec<Vec<PathInput>>,
}

impl<'a> PreparedCorpus<'a> {
    pub fn new(corpus: &'a Corpus, store: &EmbeddingStore) -> Result<Self> {
        let doc_input = |doc_id: DocId, entity: EntityId| -> Result<DocInput> {
            let doc = corpus.document(doc_id)?;
            let z = store.matrix_f64(doc_id, entity)?;
            if z.nrows() != doc.len() {
                return Err(ReicError::Data(format!(
                    "embedding for (doc {doc_id}, entity {entity}) has {} rows, document has {} sentences",
                    z.nrows(),
                    doc.len()
                )));
            }
            Ok(DocInput {
                doc_id,
                entity,
                target: target_sentence_index(doc, entity)?,
                z,
            })
        };
        let paths = corpus
            .bags
            .iter()
            .map(|bag| {
                bag.paths
                    .iter()
                    .map(|p| {
                        Ok(PathInput {
                            head: doc_input(p.head_doc, bag.head)?,
                            tail: doc_input(p.tail_doc, bag.tail)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedCorpus { corpus, paths })
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    pub fn n_bags(&self) -> usize {
        self.paths.len()
    }

    pub fn embed_dim(&self) -> Option<usize> {
        self.paths.iter().flatten().next().map(|p| p.head.z.ncols())
    }
}

/// Sampled selections of one path's two documents and the reward they
/// earned.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub traces: Vec<SelectionTrace>,
    pub reward: f64,
}

/// Accumulates `scale * sum_i R_i * grad(log pi(trajectories_i))` into the
/// network's gradient buffers. Work is split into a fixed number of chunks
/// whose partial sums are added in order, so the result does not depend on
/// thread scheduling.
pub fn accumulate_policy_gradient(net: &mut PolicyNetwork, rollouts: &mut [Rollout], scale: f64) -> Result<()> {
    if rollouts.is_empty() {
        return Ok(());
    }
    let mut template = net.clone();
    template.zero_grads();
    let chunk = rollouts.len().div_ceil(ACCUMULATION_CHUNKS);
    let parts = rollouts
        .par_chunks_mut(chunk)
        .map(|rs| {
            let mut local = template.clone();
            for r in rs {
                for t in &mut r.traces {
                    backprop_trajectory(&mut local, t, scale * r.reward)?;
                }
            }
            Ok(local)
        })
        .collect::<Result<Vec<_>>>()?;
    for part in &parts {
        net.add_grads_from(part);
    }
    Ok(())
}

/// Mean REINFORCE ascent direction `(1/n) sum_i R_i grad(log pi_i)` as a
/// flat vector in parameter order. Leaves the network's gradients zeroed.
pub fn policy_gradient(net: &mut PolicyNetwork, rollouts: &mut [Rollout]) -> Result<Vec<f64>> {
    net.zero_grads();
    let n = rollouts.len().max(1) as f64;
    accumulate_policy_gradient(net, rollouts, 1.0 / n)?;
    let g = net.flat_grads();
    net.zero_grads();
    Ok(g)
}

/// One policy step maximizing the mean of `R * log pi` over `rollouts`.
/// Returns `false` and leaves the network untouched when every reward is 0.
pub fn reinforce_update(
    net: &mut PolicyNetwork,
    rollouts: &mut [Rollout],
    opt: &mut Optimizer,
    lr: f64,
    grad_clip: f64,
) -> Result<bool> {
    if rollouts.iter().all(|r| r.reward == 0.0) {
        return Ok(false);
    }
    net.zero_grads();
    let n = rollouts.len() as f64;
    accumulate_policy_gradient(net, rollouts, -1.0 / n)?;
    if !net.grads_finite() {
        let rewards: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
        return Err(ReicError::NonFinite(format!(
            "policy network (batch rewards {rewards:?})"
        )));
    }
    clip_grad_norm(net, grad_clip);
    opt.step(net, lr)?;
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub reward: f64,
    pub reward_ema: f64,
    pub re_loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auc: f64,
    pub f1: f64,
    pub p_at_50: f64,
    pub p_at_100: f64,
    pub evidence_recall: f64,
    pub mean_bridge_mentions_pos: f64,
    pub mean_bridge_mentions_na: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_re_loss: f64,
    pub dev: Option<MetricSet>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const EMA_FACTOR: f64 = 0.99;

    /// Appends a step; the moving average starts at the first reward.
    fn push(&mut self, epoch: usize, reward: f64, re_loss: f64) -> StepRecord {
        let reward_ema = match self.steps.last() {
            Some(prev) => Self::EMA_FACTOR * prev.reward_ema + (1.0 - Self::EMA_FACTOR) * reward,
            None => reward,
        };
        let rec = StepRecord {
            step: self.steps.len(),
            epoch,
            reward,
            reward_ema,
            re_loss,
        };
        self.steps.push(rec);
        rec
    }

    /// Reward average at the step `fraction` of the way through training.
    pub fn ema_at_fraction(&self, fraction: f64) -> Option<f64> {
        if self.steps.is_empty() {
            return None;
        }
        let idx = ((self.steps.len() as f64 * fraction).ceil() as usize).clamp(1, self.steps.len()) - 1;
        Some(self.steps[idx].reward_ema)
    }

    pub fn final_ema(&self) -> Option<f64> {
        self.steps.last().map(|s| s.reward_ema)
    }
}

struct PathForward {
    selection: PathSelection,
    scores: Array1<f64>,
    cache: HeadCache,
    traces: Vec<SelectionTrace>,
}

fn rows(z: &Array2<f64>, picked: &[usize]) -> Array2<f64> {
    z.select(Axis(0), picked)
}

fn select_document<R: rand::Rng + ?Sized>(
    cfg: &TrainConfig,
    policy: &PolicyNetwork,
    input: &DocInput,
    corpus: &Corpus,
    bridges: &[EntityId],
    mode: DecodeMode,
    rng: &mut R,
) -> Result<(Vec<usize>, Option<SelectionTrace>)> {
    let doc = corpus.document(input.doc_id)?;
    match cfg.selector {
        SelectorKind::Reic | SelectorKind::OneStep => {
            let state = select_with(policy, input.z.view(), input.target, &cfg.selector_config(), mode, rng)?;
            let kept = apply_token_cap(&state.selected, doc, cfg.selection.token_cap);
            Ok((kept, Some(state.trace)))
        }
        SelectorKind::Snippet => Ok((snippet_select(doc, input.target, &cfg.baseline), None)),
        SelectorKind::Bridge => Ok((
            bridge_filter_select(doc, input.target, input.entity, bridges, &cfg.baseline),
            None,
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_path(
    cfg: &TrainConfig,
    policy: &PolicyNetwork,
    head: &ReHead,
    data: &PreparedCorpus,
    bag: usize,
    path: usize,
    mode: DecodeMode,
    seed_parts: &[u64],
) -> Result<PathForward> {
    let input = &data.paths[bag][path];
    let bridges = &data.corpus.bags[bag].paths[path].bridge_entities;
    let mut rng = stream(cfg.master_seed, seed_parts);
    let (head_sel, head_trace) = select_document(cfg, policy, &input.head, data.corpus, bridges, mode, &mut rng)?;
    let (tail_sel, tail_trace) = select_document(cfg, policy, &input.tail, data.corpus, bridges, mode, &mut rng)?;
    let rep = path_representation(
        rows(&input.head.z, &head_sel).view(),
        rows(&input.tail.z, &tail_sel).view(),
    )?;
    let (scores, cache) = head.score(&rep)?;
    Ok(PathForward {
        selection: PathSelection {
            bag,
            path,
            head: head_sel,
            tail: tail_sel,
        },
        scores,
        cache,
        traces: head_trace.into_iter().chain(tail_trace).collect(),
    })
}

fn forward_bags(
    cfg: &TrainConfig,
    policy: &PolicyNetwork,
    head: &ReHead,
    data: &PreparedCorpus,
    bags: &[usize],
    mode: DecodeMode,
    seed_prefix: &[u64],
) -> Result<Vec<Vec<PathForward>>> {
    let jobs: Vec<(usize, usize)> = bags
        .iter()
        .flat_map(|&b| (0..data.paths[b].len()).map(move |p| (b, p)))
        .collect();
    let mut flat = jobs
        .par_iter()
        .map(|&(b, p)| {
            let mut parts = seed_prefix.to_vec();
            parts.extend([b as u64, p as u64]);
            forward_path(cfg, policy, head, data, b, p, mode, &parts)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(bags
        .iter()
        .map(|&b| flat.by_ref().take(data.paths[b].len()).collect())
        .collect())
}

/// Path reward from the path's own head scores.
pub fn path_reward(head: &ReHead, scores: &Array1<f64>, label: Option<usize>, cfg: &RewardConfig) -> Result<f64> {
    match cfg.variant {
        HeadVariant::EndToEnd => reward_end2end(softmax(scores.view()).view(), label, cfg),
        HeadVariant::Threshold => reward_threshold(scores.view(), label, head.theta, cfg),
    }
}

/// Bag loss and its gradient with respect to each path's scores.
fn bag_loss(head: &ReHead, bag: &Bag, paths: &[PathForward]) -> Result<(f64, Vec<Array1<f64>>, f64)> {
    let scores: Vec<Array1<f64>> = paths.iter().map(|p| p.scores.clone()).collect();
    let (agg, which) = aggregate_bag_with_argmax(&scores)?;
    let (loss, grad, grad_theta) = match head.variant {
        HeadVariant::EndToEnd => {
            let (l, g) = loss_end2end_grad(agg.view(), bag.relation)?;
            (l, g, 0.0)
        }
        HeadVariant::Threshold => {
            loss_threshold_grad(agg.view(), &RelationLabelSet::from_label(bag.relation), head.theta)
        }
    };
    let mut per_path = vec![Array1::zeros(agg.len()); paths.len()];
    for (k, &p) in which.iter().enumerate() {
        per_path[p][k] = grad[k];
    }
    Ok((loss, per_path, grad_theta))
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub reward: RewardConfig,
    pub policy: PolicyNetwork,
    pub head: ReHead,
    pub history: TrainHistory,
    policy_opt: Optimizer,
    head_opt: Optimizer,
    epoch: usize,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, reward: RewardConfig, n_relations: usize) -> Result<Self> {
        let policy = PolicyNetwork::new(cfg.policy, &mut stream(cfg.master_seed, &[TAG_INIT, 0]));
        let head = ReHead::new(
            cfg.head_config(reward.variant, n_relations),
            &mut stream(cfg.master_seed, &[TAG_INIT, 1]),
        );
        Trainer::from_models(cfg, reward, policy, head)
    }

    pub fn from_models(cfg: TrainConfig, reward: RewardConfig, policy: PolicyNetwork, head: ReHead) -> Result<Self> {
        cfg.validate()?;
        reward.validate()?;
        if head.variant != reward.variant {
            return Err(ReicError::Config(format!(
                "head variant {} does not match reward variant {}",
                head.variant, reward.variant
            )));
        }
        if policy.config().embed_dim * 2 != head.hidden.in_dim() {
            return Err(ReicError::Config(
                "policy and head disagree on the embedding width".into(),
            ));
        }
        Ok(Trainer {
            policy_opt: Optimizer::new(cfg.optimizer, cfg.weight_decay),
            head_opt: Optimizer::new(cfg.optimizer, cfg.weight_decay),
            cfg,
            reward,
            policy,
            head,
            history: TrainHistory::default(),
            epoch: 0,
        })
    }

    fn check_data(&self, data: &PreparedCorpus) -> Result<()> {
        if let Some(d) = data.embed_dim() {
            if d != self.cfg.policy.embed_dim {
                return Err(ReicError::shape("embedding width", self.cfg.policy.embed_dim, d));
            }
        }
        if data.corpus.n_relations() != self.head.n_relations {
            return Err(ReicError::shape(
                "relation count",
                self.head.n_relations,
                data.corpus.n_relations(),
            ));
        }
        Ok(())
    }

    /// One batch: head update on bag losses, then a policy update on path
    /// rewards from the same forward pass.
    pub fn train_step(&mut self, data: &PreparedCorpus, bags: &[usize]) -> Result<StepRecord> {
        let step = self.history.steps.len() as u64;
        let forwards = forward_bags(
            &self.cfg,
            &self.policy,
            &self.head,
            data,
            bags,
            DecodeMode::Sample,
            &[TAG_SELECT, step],
        )?;

        let mut rollouts = Vec::new();
        for (&b, paths) in bags.iter().zip(&forwards) {
            let label = data.corpus.bags[b].relation;
            for p in paths {
                rollouts.push(Rollout {
                    traces: p.traces.clone(),
                    reward: path_reward(&self.head, &p.scores, label, &self.reward)?,
                });
            }
        }

        self.head.zero_grads();
        let n_bags = bags.len() as f64;
        let mut loss_sum = 0.0;
        for (&b, paths) in bags.iter().zip(&forwards) {
            let (loss, grads, grad_theta) = bag_loss(&self.head, &data.corpus.bags[b], paths)?;
            loss_sum += loss;
            for (p, g) in paths.iter().zip(&grads) {
                if g.iter().any(|&x| x != 0.0) {
                    self.head.backward(&p.cache, (g / n_bags).view());
                }
            }
            if self.head.train_theta {
                self.head.grad_theta += grad_theta / n_bags;
            }
        }
        if !self.head.grads_finite() {
            return Err(ReicError::NonFinite("relation head".into()));
        }
        clip_grad_norm(&mut self.head, self.cfg.grad_clip);
        self.head_opt.step(&mut self.head, self.cfg.lr_re)?;

        if self.cfg.selector.is_learned() {
            reinforce_update(
                &mut self.policy,
                &mut rollouts,
                &mut self.policy_opt,
                self.cfg.lr_policy,
                self.cfg.grad_clip,
            )?;
        }

        let mean_reward = rollouts.iter().map(|r| r.reward).sum::<f64>() / rollouts.len().max(1) as f64;
        Ok(self.history.push(self.epoch, mean_reward, loss_sum / n_bags))
    }

    /// One pass over the bags in a seed-determined order.
    pub fn run_epoch(&mut self, data: &PreparedCorpus) -> Result<EpochRecord> {
        self.check_data(data)?;
        let mut order: Vec<usize> = (0..data.n_bags()).collect();
        order.shuffle(&mut stream(self.cfg.master_seed, &[TAG_SHUFFLE, self.epoch as u64]));
        let first = self.history.steps.len();
        for batch in order.chunks(self.cfg.batch_size) {
            self.train_step(data, batch)?;
        }
        let steps = &self.history.steps[first..];
        let n = steps.len().max(1) as f64;
        let rec = EpochRecord {
            epoch: self.epoch,
            mean_reward: steps.iter().map(|s| s.reward).sum::<f64>() / n,
            mean_re_loss: steps.iter().map(|s| s.re_loss).sum::<f64>() / n,
            dev: None,
        };
        log::info!(
            "epoch {} reward {:.4} re_loss {:.4}",
            rec.epoch,
            rec.mean_reward,
            rec.mean_re_loss
        );
        self.history.epochs.push(rec);
        self.epoch += 1;
        Ok(rec)
    }

    pub fn evaluate(&self, data: &PreparedCorpus) -> Result<EvalReport> {
        evaluate(&self.policy, &self.head, data, &self.cfg)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: PolicyNetwork,
    pub head: ReHead,
    pub history: TrainHistory,
}

/// Trains for `cfg.epochs` epochs, recording dev metrics after each epoch
/// when a dev set is given.
pub fn train_with_dev(
    data: &PreparedCorpus,
    dev: Option<&PreparedCorpus>,
    cfg: TrainConfig,
    reward: RewardConfig,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg, reward, data.corpus.n_relations())?;
    trainer.check_data(data)?;
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
        if let Some(dev) = dev {
            let metrics = trainer.evaluate(dev)?.metrics;
            trainer.history.epochs.last_mut().expect("epoch just recorded").dev = Some(metrics);
        }
    }
    Ok(TrainOutcome {
        policy: trainer.policy,
        head: trainer.head,
        history: trainer.history,
    })
}

pub fn train(data: &PreparedCorpus, cfg: TrainConfig, reward: RewardConfig) -> Result<TrainOutcome> {
    train_with_dev(data, None, cfg, reward)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub metrics: MetricSet,
    pub bridge: BridgeStats,
    pub selections: Vec<PathSelection>,
    pub predictions: Vec<RankedPrediction>,
}

/// Bag-level scores ranked over every non-N/A relation: softmax
/// probabilities for the end-to-end head, raw scores for the threshold head.
pub fn bag_predictions(
    head: &ReHead,
    bag_index: usize,
    bag: &Bag,
    path_scores: &[Array1<f64>],
) -> Result<Vec<RankedPrediction>> {
    let (agg, _) = aggregate_bag_with_argmax(path_scores)?;
    let ranked = match head.variant {
        HeadVariant::EndToEnd => softmax(agg.view()),
        HeadVariant::Threshold => agg,
    };
    Ok((0..head.n_relations)
        .map(|r| RankedPrediction::new(bag_index, r, ranked[r], bag.relation == Some(r)))
        .collect())
}

fn or_nan(r: Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(ReicError::UndefinedMetric(_)) => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Metrics and selection statistics over every bag of `data`. In argmax
/// mode the result is fully deterministic; in sample mode it is determined
/// by the master seed.
pub fn evaluate(policy: &PolicyNetwork, head: &ReHead, data: &PreparedCorpus, cfg: &TrainConfig) -> Result<EvalReport> {
    let bags: Vec<usize> = (0..data.n_bags()).collect();
    let forwards = forward_bags(cfg, policy, head, data, &bags, cfg.eval_mode, &[TAG_EVAL])?;
    let mut predictions = Vec::new();
    let mut selections = Vec::new();
    for (b, paths) in forwards.into_iter().enumerate() {
        let scores: Vec<Array1<f64>> = paths.iter().map(|p| p.scores.clone()).collect();
        predictions.extend(bag_predictions(head, b, &data.corpus.bags[b], &scores)?);
        selections.extend(paths.into_iter().map(|p| p.selection));
    }
    let bridge = bridge_mention_stats(&selections, data.corpus)?;
    let metrics = MetricSet {
        auc: or_nan(pr_auc(&predictions))?,
        f1: or_nan(best_f1(&predictions))?,
        p_at_50: precision_at_k(&predictions, 50)?,
        p_at_100: precision_at_k(&predictions, 100)?,
        evidence_recall: mean_evidence_recall(&selections, data.corpus)?.unwrap_or(f64::NAN),
        mean_bridge_mentions_pos: bridge.mean_positive_bags.unwrap_or(f64::NAN),
        mean_bridge_mentions_na: bridge.mean_na_bags.unwrap_or(f64::NAN),
    };
    Ok(EvalReport {
        metrics,
        bridge,
        selections,
        predictions,
    })
}
