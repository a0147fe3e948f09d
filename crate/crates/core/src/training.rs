//! Supervised training, REINFORCE with an importance-sampled baseline,
//! SL-consistency restoration and interleaved SL/RL schedules.

use std::collections::VecDeque;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{
    encode_dialog, ActionKind, DomainPack, EncodedDialog, LabeledDialog, SelectionMode, Session,
};
use crate::error::{Error, Result};
use crate::eval::rl_success_rate;
use crate::features::Featurizer;
use crate::metrics::{MetricsRow, MetricsSink, Stopwatch};
use crate::neural::{
    apply_gradients, forward_dialog, init_parameters, reinforce_gradients, sequence_log_prob,
    supervised_gradients, AdaDeltaState, ActionMask, LstmParameters, CLIP_NORM,
};

/// Discount applied per system turn.
pub const GAMMA: f64 = 0.95;

/// Floor on importance weights in [`estimate_baseline`].
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// `gamma^(T−1)` on success, 0 on failure. The standard discount is
/// evaluated as the exact rational `19^k / 20^k` rounded once, so it agrees
/// bit for bit with the decimal value `0.95^k`.
pub fn discounted_return(system_turns: usize, success: bool, gamma: f64) -> Result<f64> {
    if system_turns == 0 {
        return Err(Error::Config("an episode needs at least one system turn".into()));
    }
    if !success {
        return Ok(0.0);
    }
    let k = system_turns - 1;
    Ok(if gamma == GAMMA && k <= 19 {
        nineteen_twentieths_pow(k as u32)
    } else {
        gamma.powi(k as i32)
    })
}

/// `(19/20)^k` correctly rounded to nearest, ties to even, for `k ≤ 19`.
fn nineteen_twentieths_pow(k: u32) -> f64 {
    // 19^k / 20^k = (19^k / 5^k) · 2^(−2k); the quotient of the first factor
    // is taken with 55 significant bits plus a sticky remainder.
    let num = 19u128.pow(k);
    let den = 5u128.pow(k);
    let mut shift = 0i32;
    while (num << shift) / den < 1 << 54 {
        shift += 1;
    }
    let scaled = num << shift;
    let mut q = scaled / den;
    let sticky = !scaled.is_multiple_of(den);
    let low = q & 3;
    q >>= 2;
    if low == 3 || (low == 2 && (sticky || q & 1 == 1)) {
        q += 1;
    }
    q as f64 * 2f64.powi(2 - shift - 2 * k as i32)
}

/// [`discounted_return`] with the standard discount of 0.95.
pub fn compute_return(system_turns: usize, success: bool) -> Result<f64> {
    discounted_return(system_turns, success, GAMMA)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub success: bool,
    /// System actions taken, API calls included.
    pub system_turns: usize,
    pub ret: f64,
}

/// One RL episode as seen by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<usize>,
    /// Probability of each action under the policy that sampled it.
    pub behavior_probs: Vec<f64>,
    pub outcome: EpisodeOutcome,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlConfig {
    pub hidden: usize,
    pub epochs: usize,
    /// Upper bound on epochs when training to 100% training accuracy.
    pub epoch_cap: usize,
    /// Train until every training turn is predicted correctly instead of
    /// for a fixed number of epochs.
    pub stop_at_train_acc: bool,
    /// Reshuffle dialog order every epoch.
    pub shuffle: bool,
    pub seed: u64,
}

impl SlConfig {
    /// 128 hidden units and 12 epochs.
    pub fn babi() -> Self {
        SlConfig {
            hidden: 128,
            epochs: 12,
            epoch_cap: 200,
            stop_at_train_acc: false,
            shuffle: false,
            seed: 0,
        }
    }

    /// 32 hidden units, trained to 100% training accuracy.
    pub fn dialer() -> Self {
        SlConfig {
            hidden: 32,
            stop_at_train_acc: true,
            ..SlConfig::babi()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 || self.epoch_cap == 0 {
            return Err(Error::Config("hidden, epochs and epoch_cap must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SlConfig {
    fn default() -> Self {
        SlConfig::babi()
    }
}

/// Parameters and optimizer state owned by one trainer.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: LstmParameters,
    pub opt: AdaDeltaState,
}

impl Trainer {
    pub fn new(params: LstmParameters) -> Self {
        let opt = AdaDeltaState::new(params.dims());
        Trainer { params, opt }
    }

    /// One clipped AdaDelta step on one dialog; returns the loss before
    /// the step.
    pub fn sl_step(&mut self, dialog: &EncodedDialog) -> Result<f64> {
        let (grads, loss) = supervised_gradients(
            &self.params,
            &dialog.observations,
            &dialog.masks,
            &dialog.labels,
        )?;
        apply_gradients(&mut self.params, grads, &mut self.opt, CLIP_NORM)?;
        Ok(loss)
    }

    /// One pass over `dialogs` in the given order; returns the summed loss.
    pub fn sl_epoch(&mut self, dialogs: &[EncodedDialog], order: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for &i in order {
            total += self.sl_step(&dialogs[i])?;
        }
        Ok(total)
    }

    /// Ascends `(G − b)·∇ Σ log π(a_t)` by descending its negation.
    pub fn rl_step(&mut self, trajectory: &Trajectory, baseline: f64) -> Result<f64> {
        let mut grads = reinforce_gradients(&self.params, trajectory, trajectory.outcome.ret, baseline)?;
        grads.grads.scale(-1.0);
        apply_gradients(&mut self.params, grads, &mut self.opt, CLIP_NORM)
    }
}

/// Turns whose greedy prediction equals the label, and the turn count.
pub fn teacher_forced_hits(params: &LstmParameters, dialog: &EncodedDialog) -> Result<(usize, usize)> {
    let dists = forward_dialog(params, &dialog.observations, &dialog.masks, &dialog.labels)?;
    let hits = dists
        .iter()
        .zip(&dialog.labels)
        .filter(|(d, &l)| d.argmax() == l)
        .count();
    Ok((hits, dialog.labels.len()))
}

/// Fraction of labeled turns predicted correctly under teacher forcing.
pub fn label_accuracy(params: &LstmParameters, dialogs: &[EncodedDialog]) -> Result<f64> {
    let mut hits = 0;
    let mut total = 0;
    for d in dialogs {
        let (h, t) = teacher_forced_hits(params, d)?;
        hits += h;
        total += t;
    }
    Ok(if total == 0 { 1.0 } else { hits as f64 / total as f64 })
}

/// Indices of dialogs not reproduced exactly by greedy replay.
pub fn unreconstructed(params: &LstmParameters, dialogs: &[EncodedDialog]) -> Result<Vec<usize>> {
    let mut failing = Vec::new();
    for (i, d) in dialogs.iter().enumerate() {
        let (h, t) = teacher_forced_hits(params, d)?;
        if h != t {
            failing.push(i);
        }
    }
    Ok(failing)
}

pub fn encode_all<P: DomainPack>(
    pack: &P,
    featurizer: &Featurizer,
    dialogs: &[LabeledDialog<P::ApiResult>],
) -> Result<Vec<EncodedDialog>> {
    dialogs
        .iter()
        .map(|d| encode_dialog(pack, featurizer, d))
        .collect()
}

/// Supervised training on already-encoded dialogs, starting from `trainer`.
pub fn train_encoded(
    trainer: &mut Trainer,
    dialogs: &[EncodedDialog],
    config: &SlConfig,
    sink: &mut dyn MetricsSink,
) -> Result<usize> {
    config.validate()?;
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dialogs.len()).collect();
    let limit = if config.stop_at_train_acc {
        config.epoch_cap
    } else {
        config.epochs
    };
    let mut epochs_run = 0;
    for epoch in 0..limit {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let loss = trainer.sl_epoch(dialogs, &order)?;
        epochs_run = epoch + 1;
        let accuracy = label_accuracy(&trainer.params, dialogs)?;
        debug!("epoch {epochs_run}: loss {loss:.4}, train accuracy {accuracy:.4}");
        sink.record(MetricsRow {
            phase: "sl",
            index: epochs_run,
            loss: Some(loss),
            score: Some(accuracy),
            wall_ms: clock.ms(),
        });
        if config.stop_at_train_acc && accuracy >= 1.0 {
            break;
        }
    }
    Ok(epochs_run)
}

/// Initializes parameters from `config.seed` and trains on `dialogs`.
pub fn train_supervised<P: DomainPack>(
    dialogs: &[LabeledDialog<P::ApiResult>],
    pack: &P,
    featurizer: &Featurizer,
    config: &SlConfig,
    sink: &mut dyn MetricsSink,
) -> Result<LstmParameters> {
    config.validate()?;
    let encoded = encode_all(pack, featurizer, dialogs)?;
    let obs = featurizer
        .layout(pack.context_len(), pack.api_feature_len())
        .obs_size();
    let params = init_parameters(obs, pack.action_count(), config.hidden, config.seed)?;
    let mut trainer = Trainer::new(params);
    let epochs = train_encoded(&mut trainer, &encoded, config, sink)?;
    info!(
        "supervised training: {} dialogs, {epochs} epochs",
        dialogs.len()
    );
    Ok(trainer.params)
}

/// Weighted importance sampling estimate of the current policy's return
/// over `recent` episodes.
pub fn estimate_baseline(recent: &[Trajectory], params: &LstmParameters) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in recent {
        if t.is_empty() {
            continue;
        }
        let current = sequence_log_prob(params, &t.observations, &t.masks, &t.actions)?;
        let behavior: f64 = t.behavior_probs.iter().map(|p| p.ln()).sum();
        let w = (current - behavior).min(700.0).exp().max(WEIGHT_FLOOR);
        num += w * t.outcome.ret;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// What the simulated user does after a system action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserTurn {
    Say(String),
    End { success: bool },
}

/// A user simulator for a domain pack.
pub trait Simulator<P: DomainPack> {
    /// Starts an episode and returns the opening user utterance.
    fn begin<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String;

    /// Reacts to the system action just emitted. `state` is the entity
    /// state after the action and any API result were recorded.
    fn react<R: Rng + ?Sized>(
        &mut self,
        pack: &P,
        state: &P::State,
        action: usize,
        api_result: Option<&P::ApiResult>,
        rng: &mut R,
    ) -> UserTurn;

    /// Episodes are failures once this many system actions were taken.
    fn max_turns(&self) -> usize;
}

/// Plays one episode. Returns the trajectory and the session transcript.
pub fn rollout<P, S, R>(
    pack: &P,
    params: &LstmParameters,
    featurizer: &Featurizer,
    sim: &mut S,
    mode: SelectionMode,
    gamma: f64,
    rng: &mut R,
) -> Result<(Trajectory, Vec<(crate::engine::Speaker, String)>)>
where
    P: DomainPack,
    S: Simulator<P>,
    R: Rng + ?Sized,
{
    let mut session = Session::new(pack, params, featurizer)?;
    let mut user = sim.begin(rng);
    let mut traj = Trajectory {
        observations: Vec::new(),
        masks: Vec::new(),
        actions: Vec::new(),
        behavior_probs: Vec::new(),
        outcome: EpisodeOutcome {
            success: false,
            system_turns: 0,
            ret: 0.0,
        },
    };
    let mut success = false;
    while traj.len() < sim.max_turns() {
        let step = session.step(&user, mode, rng)?;
        traj.behavior_probs.push(step.distribution.prob(step.action));
        traj.observations.push(step.observation);
        traj.masks.push(step.mask);
        traj.actions.push(step.action);
        let reply = sim.react(
            pack,
            session.entity_state(),
            step.action,
            step.api_result.as_ref(),
            rng,
        );
        match reply {
            UserTurn::Say(text) => user = text,
            UserTurn::End { success: s } => {
                success = s;
                break;
            }
        }
        debug_assert!(step.kind == ActionKind::Text || step.kind == ActionKind::Api);
    }
    let turns = traj.len();
    traj.outcome = EpisodeOutcome {
        success,
        system_turns: turns,
        ret: discounted_return(turns.max(1), success, gamma)?,
    };
    Ok((traj, session.transcript().to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlConfig {
    pub gamma: f64,
    pub baseline_window: usize,
    /// Number of RL dialogs.
    pub dialogs: usize,
    /// Dialog counts at which the frozen greedy policy is evaluated.
    pub eval_points: Vec<usize>,
    pub eval_episodes: usize,
    /// Restore SL consistency after every update when an SL set exists.
    pub consistency_check: bool,
    pub consistency_epoch_cap: usize,
    pub seed: u64,
}

impl RlConfig {
    /// Every 10 dialogs up to 100, then every 100.
    pub fn default_eval_points(dialogs: usize) -> Vec<usize> {
        let mut points: Vec<usize> = (0..=10).map(|k| k * 10).collect();
        points.extend((2..).map(|k| k * 100).take_while(|&p| p <= dialogs));
        points.retain(|&p| p <= dialogs);
        points
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        if self.baseline_window == 0 {
            return Err(Error::Config("baseline window must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            gamma: GAMMA,
            baseline_window: 100,
            dialogs: 1000,
            eval_points: RlConfig::default_eval_points(1000),
            eval_episodes: 500,
            consistency_check: true,
            consistency_epoch_cap: 200,
            seed: 0,
        }
    }
}

/// SL dialogs added to the SL set during RL, one every `every` RL dialogs
/// starting before dialog 0.
#[derive(Debug, Clone)]
pub struct InterleaveSchedule<R> {
    pub dialogs: Vec<LabeledDialog<R>>,
    pub every: usize,
}

impl<R> InterleaveSchedule<R> {
    /// The dialog to inject before RL dialog `index`, if any.
    pub fn injection(&self, index: usize) -> Option<&LabeledDialog<R>> {
        if self.every == 0 || !index.is_multiple_of(self.every) {
            return None;
        }
        self.dialogs.get(index / self.every)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restoration {
    /// RL dialog index after which restoration ran.
    pub after_dialog: usize,
    pub epochs: usize,
    /// Greedy reconstruction of the SL set succeeded (always true when
    /// returned, kept for reporting).
    pub reconstructed: bool,
}

#[derive(Debug, Clone)]
pub struct RlRun {
    pub params: LstmParameters,
    /// (RL dialogs so far, greedy success rate).
    pub curve: Vec<(usize, f64)>,
    pub restorations: Vec<Restoration>,
    pub returns: Vec<f64>,
}

/// Runs supervised epochs on `sl_set` until greedy replay reproduces every
/// labeled action. Returns the number of epochs run (0 when already
/// consistent).
pub fn sl_consistency_restore(
    trainer: &mut Trainer,
    sl_set: &[EncodedDialog],
    epoch_cap: usize,
) -> Result<usize> {
    if sl_set.is_empty() {
        return Ok(0);
    }
    let order: Vec<usize> = (0..sl_set.len()).collect();
    let mut failing = unreconstructed(&trainer.params, sl_set)?;
    let mut epochs = 0;
    while !failing.is_empty() {
        if epochs == epoch_cap {
            return Err(Error::ReconstructionFailed { epochs, failing });
        }
        trainer.sl_epoch(sl_set, &order)?;
        epochs += 1;
        failing = unreconstructed(&trainer.params, sl_set)?;
    }
    Ok(epochs)
}

/// The REINFORCE loop with optional SL-consistency restoration and
/// interleaved SL dialogs. `make_sim(seed)` builds a fresh simulator.
#[allow(clippy::too_many_arguments)]
pub fn run_rl<P, S, F>(
    config: &RlConfig,
    make_sim: F,
    pack: &P,
    featurizer: &Featurizer,
    params: LstmParameters,
    sl_set: &[LabeledDialog<P::ApiResult>],
    schedule: Option<&InterleaveSchedule<P::ApiResult>>,
    sink: &mut dyn MetricsSink,
) -> Result<RlRun>
where
    P: DomainPack + Sync,
    S: Simulator<P> + Send,
    F: Fn(u64) -> S + Sync,
{
    config.validate()?;
    let clock = Stopwatch::start();
    let mut trainer = Trainer::new(params);
    let mut sl_encoded = encode_all(pack, featurizer, sl_set)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sim = make_sim(config.seed);
    let mut window: VecDeque<Trajectory> = VecDeque::with_capacity(config.baseline_window);
    let mut curve = Vec::new();
    let mut restorations = Vec::new();
    let mut returns = Vec::with_capacity(config.dialogs);

    let evaluate = |done: usize, params: &LstmParameters, sink: &mut dyn MetricsSink| {
        let eval_seed = config.seed.wrapping_mul(1_000_003).wrapping_add(done as u64);
        let rate = rl_success_rate(params, pack, featurizer, &make_sim, config.eval_episodes, eval_seed)?;
        sink.record(MetricsRow {
            phase: "rl",
            index: done,
            loss: None,
            score: Some(rate),
            wall_ms: clock.ms(),
        });
        Ok::<_, Error>((done, rate))
    };

    for i in 0..config.dialogs {
        if config.eval_points.contains(&i) {
            curve.push(evaluate(i, &trainer.params, sink)?);
        }
        if let Some(d) = schedule.and_then(|s| s.injection(i)) {
            sl_encoded.push(encode_dialog(pack, featurizer, d)?);
        }
        let (traj, _) = rollout(
            pack,
            &trainer.params,
            featurizer,
            &mut sim,
            SelectionMode::Sample,
            config.gamma,
            &mut rng,
        )?;
        let recent: Vec<Trajectory> = window.iter().cloned().collect();
        let baseline = estimate_baseline(&recent, &trainer.params)?;
        trainer.rl_step(&traj, baseline)?;
        returns.push(traj.outcome.ret);
        if window.len() == config.baseline_window {
            window.pop_front();
        }
        window.push_back(traj);
        if config.consistency_check && !sl_encoded.is_empty() {
            let epochs = sl_consistency_restore(&mut trainer, &sl_encoded, config.consistency_epoch_cap)?;
            restorations.push(Restoration {
                after_dialog: i,
                epochs,
                reconstructed: true,
            });
        }
    }
    if config.eval_points.contains(&config.dialogs) {
        curve.push(evaluate(config.dialogs, &trainer.params, sink)?);
    }
    Ok(RlRun {
        params: trainer.params,
        curve,
        restorations,
        returns,
    })
}
