use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{Dims, Gate, Matrix, Tensors};
use crate::error::{Error, Result};

/// All trainable weights of the recurrent policy.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParameters {
    dims: Dims,
    pub weights: Tensors,
}

/// Per-tensor gradients, congruent with [`LstmParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    dims: Dims,
    pub grads: Tensors,
}

/// Recurrent state carried between turns of one dialog.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

/// Which actions domain code permits at the current turn.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionMask(Vec<bool>);

/// A probability distribution over action templates.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl LstmParameters {
    pub fn zeros(dims: Dims) -> Self {
        LstmParameters {
            dims,
            weights: Tensors::zeros(dims),
        }
    }

    pub fn from_tensors(dims: Dims, weights: Tensors) -> Result<Self> {
        validate_dims(dims)?;
        if !weights.dims_match(dims) {
            return Err(Error::InvalidDimension(
                "tensor shapes do not match the declared dimensions".into(),
            ));
        }
        if !weights.is_finite() {
            return Err(Error::NonFinite("parameters"));
        }
        Ok(LstmParameters { dims, weights })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn obs_size(&self) -> usize {
        self.dims.obs_size
    }

    pub fn action_count(&self) -> usize {
        self.dims.action_count
    }

    pub fn hidden(&self) -> usize {
        self.dims.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input_dim()
    }
}

impl Gradients {
    pub fn zeros(dims: Dims) -> Self {
        Gradients {
            dims,
            grads: Tensors::zeros(dims),
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn norm(&self) -> f64 {
        self.grads.l2_norm()
    }
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }
}

impl ActionMask {
    pub fn new(bits: Vec<bool>) -> Self {
        ActionMask(bits)
    }

    pub fn all(action_count: usize) -> Self {
        ActionMask(vec![true; action_count])
    }

    pub fn none(action_count: usize) -> Self {
        ActionMask(vec![false; action_count])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, action: usize) -> bool {
        self.0.get(action).copied().unwrap_or(false)
    }

    pub fn set(&mut self, action: usize, permitted: bool) {
        self.0[action] = permitted;
    }

    pub fn count_permitted(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }
}

impl From<Vec<bool>> for ActionMask {
    fn from(bits: Vec<bool>) -> Self {
        ActionMask(bits)
    }
}

impl ActionDistribution {
    /// Highest-probability action; the lowest id wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob(&self, action: usize) -> f64 {
        self.probs[action]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn validate_dims(dims: Dims) -> Result<()> {
    if dims.obs_size == 0 || dims.action_count == 0 || dims.hidden == 0 {
        return Err(Error::InvalidDimension(format!(
            "obs_size={}, action_count={}, hidden={} (all must be at least 1)",
            dims.obs_size, dims.action_count, dims.hidden
        )));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases, forget-gate bias 1.
pub fn init_parameters(
    obs_size: usize,
    action_count: usize,
    hidden: usize,
    seed: u64,
) -> Result<LstmParameters> {
    let dims = Dims {
        obs_size,
        action_count,
        hidden,
    };
    validate_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Tensors::zeros(dims);
    for m in weights.input_weights.iter_mut() {
        glorot_fill(m, &mut rng);
    }
    for m in weights.recurrent_weights.iter_mut() {
        glorot_fill(m, &mut rng);
    }
    glorot_fill(&mut weights.output_weights, &mut rng);
    weights.gate_biases[Gate::Forget as usize].fill(1.0);
    Ok(LstmParameters { dims, weights })
}

fn glorot_fill(m: &mut Matrix, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for v in m.as_mut_slice() {
        *v = rng.random_range(-limit..=limit);
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of one recurrent step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    x: Vec<(usize, f64)>,
    prev: LstmState,
    /// Gate activations in [`Gate`] order.
    gates: [Vec<f64>; 4],
    tanh_cell: Vec<f64>,
}

pub(crate) fn sparse(x: &[f64]) -> Vec<(usize, f64)> {
    x.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect()
}

pub(crate) fn step_sparse(
    params: &LstmParameters,
    state: &LstmState,
    x: Vec<(usize, f64)>,
) -> (LstmState, StepCache) {
    let w = &params.weights;
    let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
        let mut z = w.gate_biases[g].clone();
        w.input_weights[g].mul_sparse_acc(&x, &mut z);
        w.recurrent_weights[g].mul_vec_acc(&state.hidden, &mut z);
        if g == Gate::Cell as usize {
            z.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            z.iter_mut().for_each(|v| *v = logistic(*v));
        }
        z
    });
    let [i, f, g, o] = &gates;
    let cell: Vec<f64> = (0..params.hidden())
        .map(|k| f[k] * state.cell[k] + i[k] * g[k])
        .collect();
    let tanh_cell: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden: Vec<f64> = o.iter().zip(&tanh_cell).map(|(o, t)| o * t).collect();
    let next = LstmState { hidden, cell };
    let cache = StepCache {
        x,
        prev: state.clone(),
        gates,
        tanh_cell,
    };
    (next, cache)
}

/// Advances the recurrence by one input vector.
pub fn lstm_step(params: &LstmParameters, state: &LstmState, x: &[f64]) -> Result<LstmState> {
    if x.len() != params.input_dim() {
        return Err(Error::Dimension {
            what: "lstm input",
            expected: params.input_dim(),
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm input"));
    }
    if state.hidden.len() != params.hidden() || state.cell.len() != params.hidden() {
        return Err(Error::Dimension {
            what: "lstm state",
            expected: params.hidden(),
            actual: state.hidden.len(),
        });
    }
    Ok(step_sparse(params, state, sparse(x)).0)
}

pub(crate) fn logits(params: &LstmParameters, hidden: &[f64]) -> Vec<f64> {
    let mut z = params.weights.output_bias.clone();
    params.weights.output_weights.mul_vec_acc(hidden, &mut z);
    z
}

/// Softmax restricted to permitted entries; equal to multiplying the full
/// softmax by the mask and renormalizing.
pub(crate) fn masked_softmax(logits: &[f64], mask: &ActionMask) -> Result<ActionDistribution> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(k, _)| mask.get(*k))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyMask);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(k, &z)| if mask.get(k) { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(ActionDistribution { probs })
}

/// `log π(action)` under the masked softmax, computed in log space.
fn masked_log_prob(logits: &[f64], mask: &ActionMask, action: usize) -> f64 {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(k, _)| mask.get(*k))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse: f64 = logits
        .iter()
        .enumerate()
        .filter(|(k, _)| mask.get(*k))
        .map(|(_, &z)| (z - max).exp())
        .sum::<f64>()
        .ln();
    logits[action] - max - lse
}

/// Output layer followed by the action mask and renormalization.
pub fn output_distribution(
    params: &LstmParameters,
    hidden: &[f64],
    mask: &ActionMask,
) -> Result<ActionDistribution> {
    if hidden.len() != params.hidden() {
        return Err(Error::Dimension {
            what: "hidden vector",
            expected: params.hidden(),
            actual: hidden.len(),
        });
    }
    check_mask(params, mask)?;
    masked_softmax(&logits(params, hidden), mask)
}

/// Plain softmax over every action; the inference fallback for an empty mask.
pub fn unmasked_distribution(params: &LstmParameters, hidden: &[f64]) -> ActionDistribution {
    masked_softmax(
        &logits(params, hidden),
        &ActionMask::all(params.action_count()),
    )
    .expect("a full mask always permits an action")
}

fn check_mask(params: &LstmParameters, mask: &ActionMask) -> Result<()> {
    if mask.len() != params.action_count() {
        return Err(Error::Dimension {
            what: "action mask",
            expected: params.action_count(),
            actual: mask.len(),
        });
    }
    Ok(())
}

/// Concatenates observation, previous-action one-hot and mask into the
/// sparse network input.
pub(crate) fn network_input(
    params: &LstmParameters,
    observation: &[f64],
    previous_action: Option<usize>,
    mask: &ActionMask,
) -> Result<Vec<(usize, f64)>> {
    if observation.len() != params.obs_size() {
        return Err(Error::Dimension {
            what: "observation",
            expected: params.obs_size(),
            actual: observation.len(),
        });
    }
    if observation.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    check_mask(params, mask)?;
    let obs_size = params.obs_size();
    let actions = params.action_count();
    let mut x = sparse(observation);
    if let Some(a) = previous_action {
        if a >= actions {
            return Err(Error::ActionOutOfRange {
                action: a,
                action_count: actions,
            });
        }
        x.push((obs_size + a, 1.0));
    }
    x.extend(
        mask.bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| (obs_size + actions + k, 1.0)),
    );
    Ok(x)
}

/// Dense form of [`network_input`], for inspection and tests.
pub fn assemble_input(
    params: &LstmParameters,
    observation: &[f64],
    previous_action: Option<usize>,
    mask: &ActionMask,
) -> Result<Vec<f64>> {
    let mut dense = vec![0.0; params.input_dim()];
    for (i, v) in network_input(params, observation, previous_action, mask)? {
        dense[i] = v;
    }
    Ok(dense)
}

/// Per-turn record of a teacher-forced forward pass.
pub(crate) struct Trace {
    pub caches: Vec<StepCache>,
    pub hidden: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
}

fn check_sequences(
    params: &LstmParameters,
    observations: &[Vec<f64>],
    masks: &[ActionMask],
    actions: &[usize],
) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::InvalidDimension("dialog has no turns".into()));
    }
    for (what, len) in [("masks", masks.len()), ("actions", actions.len())] {
        if len != observations.len() {
            return Err(Error::Dimension {
                what,
                expected: observations.len(),
                actual: len,
            });
        }
    }
    for &a in actions {
        if a >= params.action_count() {
            return Err(Error::ActionOutOfRange {
                action: a,
                action_count: params.action_count(),
            });
        }
    }
    Ok(())
}

pub(crate) fn trace_dialog(
    params: &LstmParameters,
    observations: &[Vec<f64>],
    masks: &[ActionMask],
    actions: &[usize],
) -> Result<Trace> {
    check_sequences(params, observations, masks, actions)?;
    let mut state = LstmState::zeros(params.hidden());
    let mut trace = Trace {
        caches: Vec::with_capacity(observations.len()),
        hidden: Vec::with_capacity(observations.len()),
        logits: Vec::with_capacity(observations.len()),
    };
    for t in 0..observations.len() {
        let prev = if t == 0 { None } else { Some(actions[t - 1]) };
        let x = network_input(params, &observations[t], prev, &masks[t])?;
        let (next, cache) = step_sparse(params, &state, x);
        trace.logits.push(logits(params, &next.hidden));
        trace.hidden.push(next.hidden.clone());
        trace.caches.push(cache);
        state = next;
    }
    Ok(trace)
}

/// Runs a whole dialog from a zero state. `action_history[t]` feeds the
/// previous-action input of turn `t + 1`.
pub fn forward_dialog(
    params: &LstmParameters,
    observations: &[Vec<f64>],
    masks: &[ActionMask],
    action_history: &[usize],
) -> Result<Vec<ActionDistribution>> {
    let trace = trace_dialog(params, observations, masks, action_history)?;
    trace
        .logits
        .iter()
        .zip(masks)
        .map(|(z, m)| masked_softmax(z, m))
        .collect()
}

/// Full backpropagation through time given `∂loss/∂logits` per turn.
pub(crate) fn backprop(params: &LstmParameters, trace: &Trace, dlogits: &[Vec<f64>]) -> Gradients {
    let h = params.hidden();
    let w = &params.weights;
    let mut out = Gradients::zeros(params.dims());
    let g = &mut out.grads;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for t in (0..trace.caches.len()).rev() {
        let cache = &trace.caches[t];
        let dz = &dlogits[t];
        g.output_weights.add_outer(dz, &trace.hidden[t]);
        for (b, d) in g.output_bias.iter_mut().zip(dz) {
            *b += d;
        }
        let mut dh = dh_next.clone();
        w.output_weights.t_mul_vec_acc(dz, &mut dh);

        let [i, f, gc, o] = &cache.gates;
        let mut dgate: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; h]);
        for k in 0..h {
            let tc = cache.tanh_cell[k];
            let dc = dh[k] * o[k] * (1.0 - tc * tc) + dc_next[k];
            dgate[Gate::Output as usize][k] = dh[k] * tc * o[k] * (1.0 - o[k]);
            dgate[Gate::Input as usize][k] = dc * gc[k] * i[k] * (1.0 - i[k]);
            dgate[Gate::Cell as usize][k] = dc * i[k] * (1.0 - gc[k] * gc[k]);
            dgate[Gate::Forget as usize][k] = dc * cache.prev.cell[k] * f[k] * (1.0 - f[k]);
            dc_next[k] = dc * f[k];
        }
        let mut dh_prev = vec![0.0; h];
        for gate in 0..4 {
            let d = &dgate[gate];
            g.input_weights[gate].add_outer_sparse(d, &cache.x);
            g.recurrent_weights[gate].add_outer(d, &cache.prev.hidden);
            for (b, v) in g.gate_biases[gate].iter_mut().zip(d) {
                *b += v;
            }
            w.recurrent_weights[gate].t_mul_vec_acc(d, &mut dh_prev);
        }
        dh_next = dh_prev;
    }
    out
}

/// Summed cross-entropy of one dialog and its exact gradient.
pub fn supervised_gradients(
    params: &LstmParameters,
    observations: &[Vec<f64>],
    masks: &[ActionMask],
    labels: &[usize],
) -> Result<(Gradients, f64)> {
    check_sequences(params, observations, masks, labels)?;
    for (turn, (&label, mask)) in labels.iter().zip(masks).enumerate() {
        if !mask.get(label) {
            return Err(Error::MaskedLabel { turn, label });
        }
    }
    let trace = trace_dialog(params, observations, masks, labels)?;
    let mut loss = 0.0;
    let mut dlogits = Vec::with_capacity(labels.len());
    for ((z, mask), &label) in trace.logits.iter().zip(masks).zip(labels) {
        loss -= masked_log_prob(z, mask, label);
        let mut d = masked_softmax(z, mask)?.probs;
        d[label] -= 1.0;
        dlogits.push(d);
    }
    Ok((backprop(params, &trace, &dlogits), loss))
}

/// Summed `log π(a_t)` of recorded actions under `params`.
pub fn sequence_log_prob(
    params: &LstmParameters,
    observations: &[Vec<f64>],
    masks: &[ActionMask],
    actions: &[usize],
) -> Result<f64> {
    let trace = trace_dialog(params, observations, masks, actions)?;
    let mut total = 0.0;
    for (turn, ((z, mask), &a)) in trace.logits.iter().zip(masks).zip(actions).enumerate() {
        if !mask.get(a) {
            return Err(Error::MaskedLabel { turn, label: a });
        }
        total += masked_log_prob(z, mask, a);
    }
    Ok(total)
}

/// `(G − b) · Σ_t ∇ log π(a_t | h_t)`: the ascent direction of one episode.
pub fn reinforce_gradients(
    params: &LstmParameters,
    trajectory: &crate::training::Trajectory,
    ret: f64,
    baseline: f64,
) -> Result<Gradients> {
    let observations = &trajectory.observations;
    let masks = &trajectory.masks;
    let actions = &trajectory.actions;
    check_sequences(params, observations, masks, actions)?;
    for (turn, &p) in trajectory.behavior_probs.iter().enumerate() {
        if p <= 0.0 {
            return Err(Error::ZeroProbability { turn });
        }
    }
    let trace = trace_dialog(params, observations, masks, actions)?;
    let advantage = ret - baseline;
    let mut dlogits = Vec::with_capacity(actions.len());
    for (turn, ((z, mask), &a)) in trace.logits.iter().zip(masks).zip(actions).enumerate() {
        let dist = masked_softmax(z, mask)?;
        if dist.probs[a] <= 0.0 {
            return Err(Error::ZeroProbability { turn });
        }
        // ∂ log π(a) / ∂z = onehot(a) − π
        let d: Vec<f64> = dist
            .probs
            .iter()
            .enumerate()
            .map(|(k, p)| advantage * (if k == a { 1.0 } else { 0.0 } - p))
            .collect();
        dlogits.push(d);
    }
    Ok(backprop(params, &trace, &dlogits))
}
