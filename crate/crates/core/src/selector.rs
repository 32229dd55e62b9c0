//! Sequential evidence-sentence selection.
//!
//! Starting from the target sentence, a recurrent cell summarizes what has
//! been selected so far; a two-layer scorer rates every remaining sentence
//! from `[z_m, h]` and the next sentence is drawn from the masked softmax of
//! those scores. Each run records a trace so the log-probability of the
//! sampled trajectory can be differentiated afterwards.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{ReicError, Result};
use crate::nn::{masked_softmax, DenseLayer, LstmCache, LstmCell, LstmState, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub scorer_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            embed_dim: 768,
            hidden_dim: 512,
            scorer_hidden: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Maximum number of sentences selected after the target sentence.
    pub max_steps: usize,
    pub token_cap: usize,
    pub one_step: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            max_steps: 15,
            token_cap: 512,
            one_step: false,
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 || self.token_cap == 0 {
            return Err(ReicError::Config("T and token_cap must both be at least 1".into()));
        }
        Ok(())
    }
}

/// How the next sentence is picked from the selection distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Sample,
    #[default]
    Argmax,
}

impl std::str::FromStr for DecodeMode {
    type Err = ReicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(DecodeMode::Sample),
            "argmax" => Ok(DecodeMode::Argmax),
            other => Err(ReicError::Config(format!(
                "unknown eval mode `{other}` (sample|argmax)"
            ))),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Sample => "sample",
            DecodeMode::Argmax => "argmax",
        })
    }
}

/// Scorer `[z, h] -> tanh -> scalar logit` plus the recurrent cell that
/// produces `h`. Scorer input columns are `z` first, then `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNetwork {
    pub scorer_hidden: DenseLayer,
    pub scorer_out: DenseLayer,
    pub recurrent: LstmCell,
}

impl PolicyNetwork {
    pub fn new<R: Rng + ?Sized>(cfg: PolicyConfig, rng: &mut R) -> Self {
        PolicyNetwork {
            scorer_hidden: DenseLayer::new(cfg.embed_dim + cfg.hidden_dim, cfg.scorer_hidden, rng),
            scorer_out: DenseLayer::new(cfg.scorer_hidden, 1, rng),
            recurrent: LstmCell::new(cfg.embed_dim, cfg.hidden_dim, rng),
        }
    }

    /// All-zero parameters: a uniform policy over unselected sentences.
    pub fn zeros(cfg: PolicyConfig) -> Self {
        PolicyNetwork {
            scorer_hidden: DenseLayer::zeros(cfg.embed_dim + cfg.hidden_dim, cfg.scorer_hidden),
            scorer_out: DenseLayer::zeros(cfg.scorer_hidden, 1),
            recurrent: LstmCell::zeros(cfg.embed_dim, cfg.hidden_dim),
        }
    }

    pub fn config(&self) -> PolicyConfig {
        PolicyConfig {
            embed_dim: self.recurrent.input_dim,
            hidden_dim: self.recurrent.hidden_dim,
            scorer_hidden: self.scorer_hidden.out_dim(),
        }
    }

    fn embed_dim(&self) -> usize {
        self.recurrent.input_dim
    }

    /// `Z W_z^T`: the embedding half of the first scorer layer, shared by
    /// every step of a trajectory.
    fn project_candidates(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.embed_dim() {
            return Err(ReicError::shape("sentence embedding", self.embed_dim(), z.ncols()));
        }
        let w_z = self.scorer_hidden.weight.slice(s![.., ..self.embed_dim()]);
        Ok(z.dot(&w_z.t()))
    }

    /// Returns `(tanh activations, logits)` for every sentence.
    fn score(&self, projected: &Array2<f64>, h: &Array1<f64>) -> (Array2<f64>, Array1<f64>) {
        let w_h = self.scorer_hidden.weight.slice(s![.., self.embed_dim()..]);
        let shift = w_h.dot(h) + &self.scorer_hidden.bias;
        let activations = (projected + &shift).mapv(f64::tanh);
        let logits = activations.dot(&self.scorer_out.weight.row(0)) + self.scorer_out.bias[0];
        (activations, logits)
    }
}

impl Parameterized for PolicyNetwork {
    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64])) {
        self.scorer_hidden.visit(f);
        self.scorer_out.visit(f);
        self.recurrent.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.scorer_hidden.visit_mut(f);
        self.scorer_out.visit_mut(f);
        self.recurrent.visit_mut(f);
    }
}

/// Selection distribution over sentences given recurrent summary `h`;
/// exactly zero where `mask` is false.
pub fn selection_probabilities(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    h: ArrayView1<f64>,
    mask: &[bool],
) -> Result<Array1<f64>> {
    if z.nrows() != mask.len() {
        return Err(ReicError::shape("selection mask", z.nrows(), mask.len()));
    }
    if h.len() != net.recurrent.hidden_dim {
        return Err(ReicError::shape("recurrent summary", net.recurrent.hidden_dim, h.len()));
    }
    let projected = net.project_candidates(z)?;
    let (_, logits) = net.score(&projected, &h.to_owned());
    masked_softmax(logits.view(), mask)
}

#[derive(Clone, Debug)]
struct TracedState {
    lstm: LstmCache,
    h: Array1<f64>,
    activations: Array2<f64>,
}

#[derive(Clone, Debug)]
struct Draw {
    state: usize,
    probs: Array1<f64>,
    chosen: usize,
}

/// Forward cache of one selection run.
#[derive(Clone, Debug)]
pub struct SelectionTrace {
    z: Array2<f64>,
    states: Vec<TracedState>,
    draws: Vec<Draw>,
    replayed: bool,
}

impl SelectionTrace {
    /// Sum of log-probabilities of the drawn sentences, recomputed from the
    /// cached distributions.
    pub fn log_prob(&self) -> f64 {
        self.draws.iter().map(|d| d.probs[d.chosen].ln()).sum()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    /// Allows one more [`backprop_trajectory`] over this trace.
    pub fn reset(&mut self) {
        self.replayed = false;
    }
}

#[derive(Clone, Debug)]
pub struct SelectionState {
    /// Selection order; starts with the target sentence.
    pub selected: Vec<usize>,
    /// `false` exactly at selected positions.
    pub mask: Vec<bool>,
    pub rec_state: LstmState,
    pub logprob_sum: f64,
    pub trace: SelectionTrace,
}

fn pick<R: Rng + ?Sized>(probs: &Array1<f64>, mode: DecodeMode, rng: &mut R) -> usize {
    match mode {
        DecodeMode::Sample => WeightedIndex::new(probs.iter().copied())
            .expect("masked softmax yields a valid distribution")
            .sample(rng),
        DecodeMode::Argmax => {
            probs
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &p)| {
                        if p > best.1 {
                            (i, p)
                        } else {
                            best
                        }
                    },
                )
                .0
        }
    }
}

fn check_target(z: ArrayView2<f64>, target: usize) -> Result<()> {
    if target >= z.nrows() {
        return Err(ReicError::NotFound(format!(
            "target sentence {target} out of range for a {}-sentence document",
            z.nrows()
        )));
    }
    Ok(())
}

fn run<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    target: usize,
    max_steps: usize,
    one_step: bool,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<SelectionState> {
    check_target(z, target)?;
    let m = z.nrows();
    let projected = net.project_candidates(z)?;
    let mut mask = vec![true; m];
    mask[target] = false;
    let mut selected = vec![target];
    let mut rec_state = LstmState::zeros(net.recurrent.hidden_dim);
    let mut states: Vec<TracedState> = Vec::new();
    let mut draws = Vec::new();
    let mut logprob_sum = 0.0;
    let mut last = target;

    let steps = max_steps.min(m - 1);
    for t in 0..steps {
        if t == 0 || !one_step {
            let (next, cache) = net.recurrent.step(z.row(last), &rec_state)?;
            rec_state = next;
            let (activations, _) = net.score(&projected, &rec_state.h);
            states.push(TracedState {
                lstm: cache,
                h: rec_state.h.clone(),
                activations,
            });
        }
        let state = states.len() - 1;
        let logits = states[state].activations.dot(&net.scorer_out.weight.row(0)) + net.scorer_out.bias[0];
        let probs = masked_softmax(logits.view(), &mask)?;
        let chosen = pick(&probs, mode, rng);
        logprob_sum += probs[chosen].ln();
        draws.push(Draw { state, probs, chosen });
        mask[chosen] = false;
        selected.push(chosen);
        last = chosen;
    }

    Ok(SelectionState {
        selected,
        mask,
        rec_state,
        logprob_sum,
        trace: SelectionTrace {
            z: z.to_owned(),
            states,
            draws,
            replayed: false,
        },
    })
}

/// Multi-step sampling: the recurrent cell consumes the target sentence and
/// then each newly selected sentence before the next draw. Stops early once
/// every sentence is selected.
pub fn select<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    target: usize,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<SelectionState> {
    run(net, z, target, cfg.max_steps, false, DecodeMode::Sample, rng)
}

/// Draws `T` distinct sentences from the distribution computed once at the
/// initial state, renormalizing over the remainder after each draw.
pub fn select_one_step<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    target: usize,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<SelectionState> {
    run(net, z, target, cfg.max_steps, true, DecodeMode::Sample, rng)
}

/// Dispatches on `cfg.one_step` and the decode mode.
pub fn select_with<R: Rng + ?Sized>(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    target: usize,
    cfg: &SelectorConfig,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<SelectionState> {
    run(net, z, target, cfg.max_steps, cfg.one_step, mode, rng)
}

/// Log-probability of a given selection order (excluding the target), by
/// teacher-forced re-evaluation of the policy.
pub fn trajectory_log_prob(
    net: &PolicyNetwork,
    z: ArrayView2<f64>,
    target: usize,
    choices: &[usize],
    one_step: bool,
) -> Result<f64> {
    check_target(z, target)?;
    let projected = net.project_candidates(z)?;
    let mut mask = vec![true; z.nrows()];
    mask[target] = false;
    let mut state = LstmState::zeros(net.recurrent.hidden_dim);
    let mut last = target;
    let mut logits = Array1::zeros(0);
    let mut total = 0.0;
    for (t, &c) in choices.iter().enumerate() {
        if t == 0 || !one_step {
            state = net.recurrent.step(z.row(last), &state)?.0;
            logits = net.score(&projected, &state.h).1;
        }
        let probs = masked_softmax(logits.view(), &mask)?;
        if c >= mask.len() || !mask[c] {
            return Err(ReicError::Data(format!("choice {c} is not an available candidate")));
        }
        total += probs[c].ln();
        mask[c] = false;
        last = c;
    }
    Ok(total)
}

/// Accumulates `scale * grad(sum_t log pi(s_t | S_{t-1}))` into the
/// network's gradient buffers, through every recurrent step of the trace.
pub fn backprop_trajectory(net: &mut PolicyNetwork, trace: &mut SelectionTrace, scale: f64) -> Result<()> {
    if trace.replayed {
        return Err(ReicError::DoubleAccumulation);
    }
    trace.replayed = true;
    if scale == 0.0 || trace.draws.is_empty() {
        return Ok(());
    }
    let m = trace.z.nrows();
    let d = net.embed_dim();

    // d(log p_chosen)/d(logit_j) = [j == chosen] - p_j
    let mut dlogits = vec![Array1::<f64>::zeros(m); trace.states.len()];
    for draw in &trace.draws {
        let dl = &mut dlogits[draw.state];
        dl.scaled_add(-scale, &draw.probs);
        dl[draw.chosen] += scale;
    }

    let w_out = net.scorer_out.weight.row(0).to_owned();
    let mut dpre_total = Array2::<f64>::zeros((m, net.scorer_hidden.out_dim()));
    let mut dh_scorer = Vec::with_capacity(trace.states.len());
    for (state, dl) in trace.states.iter().zip(&dlogits) {
        let a = &state.activations;
        net.scorer_out.grad_weight.row_mut(0).scaled_add(1.0, &a.t().dot(dl));
        net.scorer_out.grad_bias[0] += dl.sum();

        let mut dpre = dl.view().insert_axis(Axis(1)).dot(&w_out.view().insert_axis(Axis(0)));
        dpre.zip_mut_with(a, |g, &act| *g *= 1.0 - act * act);
        let dsum = dpre.sum_axis(Axis(0));
        dpre_total += &dpre;

        let mut gw_h = net.scorer_hidden.grad_weight.slice_mut(s![.., d..]);
        for (mut row, &g) in gw_h.outer_iter_mut().zip(dsum.iter()) {
            row.scaled_add(g, &state.h);
        }
        net.scorer_hidden.grad_bias += &dsum;
        let w_h = net.scorer_hidden.weight.slice(s![.., d..]);
        dh_scorer.push(w_h.t().dot(&dsum));
    }
    let gw_z = dpre_total.t().dot(&trace.z);
    net.scorer_hidden
        .grad_weight
        .slice_mut(s![.., ..d])
        .scaled_add(1.0, &gw_z);

    let hd = net.recurrent.hidden_dim;
    let mut dh_carry = Array1::<f64>::zeros(hd);
    let mut dc_carry = Array1::<f64>::zeros(hd);
    for (state, dh) in trace.states.iter().zip(&dh_scorer).rev() {
        let dh_total = dh + &dh_carry;
        let (_, dh_prev, dc_prev) = net.recurrent.backward(&state.lstm, dh_total.view(), dc_carry.view());
        dh_carry = dh_prev;
        dc_carry = dc_prev;
    }
    Ok(())
}

/// Longest prefix of `selection` (in selection order) whose cumulative
/// token count fits in `cap`; the first index is always kept.
pub fn apply_token_cap(selection: &[usize], doc: &Document, cap: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(selection.len());
    let mut used = 0usize;
    for (k, &i) in selection.iter().enumerate() {
        let tokens = doc.sentences[i].token_count as usize;
        if k > 0 && used + tokens > cap {
            break;
        }
        used += tokens;
        out.push(i);
    }
    out
}
