use std::collections::VecDeque;
use std::sync::Arc;

use hcn::dialer::{generate_directory, sl_dialogs, DialerDomain, SimulatorConfig, UserSimulator};
use hcn::engine::EncodedDialog;
use hcn::features::Featurizer;
use hcn::metrics::NullSink;
use hcn::neural::{
    adadelta_step, apply_gradients, clip_global_norm, forward_dialog, init_parameters,
    write_checkpoint, ActionMask, AdaDeltaState, Gradients, LstmParameters,
};
use hcn::training::{
    encode_all, estimate_baseline, label_accuracy, run_rl, sl_consistency_restore, train_encoded,
    train_supervised, unreconstructed, EpisodeOutcome, InterleaveSchedule, RlConfig, SlConfig,
    Trainer, Trajectory,
};
use hcn::Error;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(seed: u64) -> SlConfig {
    SlConfig {
        hidden: 16,
        seed,
        ..SlConfig::dialer()
    }
}

fn checkpoint_bytes(params: &LstmParameters) -> Vec<u8> {
    let mut out = Vec::new();
    write_checkpoint(&mut out, params, None).unwrap();
    out
}

fn dialer() -> (DialerDomain, Vec<hcn::engine::LabeledDialog<hcn::dialer::DialerApiResult>>) {
    let directory = Arc::new(generate_directory(3, 20).unwrap());
    let domain = DialerDomain::new(directory);
    let dialogs = sl_dialogs(&domain, 3).unwrap();
    (domain, dialogs)
}

#[test]
fn overfits_a_two_turn_dialog() {
    let mut mask = ActionMask::all(3);
    mask.set(2, false);
    let dialog = EncodedDialog {
        observations: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        masks: vec![mask.clone(), mask],
        labels: vec![0, 1],
    };
    let dialogs = [dialog];
    let mut trainer = Trainer::new(init_parameters(2, 3, 8, 0).unwrap());
    let epochs = train_encoded(&mut trainer, &dialogs, &small_config(0), &mut NullSink).unwrap();
    assert!(epochs <= 200);
    assert_eq!(label_accuracy(&trainer.params, &dialogs).unwrap(), 1.0);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let (domain, dialogs) = dialer();
    let featurizer = Featurizer::none();
    let config = SlConfig {
        shuffle: true,
        ..small_config(11)
    };
    let a = train_supervised(&dialogs[..5], &domain, &featurizer, &config, &mut NullSink).unwrap();
    let b = train_supervised(&dialogs[..5], &domain, &featurizer, &config, &mut NullSink).unwrap();
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));

    let other = SlConfig { seed: 12, ..config };
    let c = train_supervised(&dialogs[..5], &domain, &featurizer, &other, &mut NullSink).unwrap();
    assert_ne!(checkpoint_bytes(&a), checkpoint_bytes(&c));
}

fn bandit_trajectory(action: usize, prob: f64) -> Trajectory {
    let ret = if action == 0 { 1.0 } else { 0.0 };
    Trajectory {
        observations: vec![vec![1.0]],
        masks: vec![ActionMask::all(2)],
        actions: vec![action],
        behavior_probs: vec![prob],
        outcome: EpisodeOutcome {
            success: action == 0,
            system_turns: 1,
            ret,
        },
    }
}

fn p_first(params: &LstmParameters) -> f64 {
    forward_dialog(params, &[vec![1.0]], &[ActionMask::all(2)], &[0]).unwrap()[0].prob(0)
}

#[test]
fn reinforce_learns_a_two_armed_bandit() {
    let mut trainer = Trainer::new(init_parameters(1, 2, 32, 5).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut window: VecDeque<Trajectory> = VecDeque::new();
    let mut p = p_first(&trainer.params);
    for update in 0..200 {
        let action = if rng.random::<f64>() < p { 0 } else { 1 };
        let prob = if action == 0 { p } else { 1.0 - p };
        let traj = bandit_trajectory(action, prob);
        let recent: Vec<Trajectory> = window.iter().cloned().collect();
        let baseline = estimate_baseline(&recent, &trainer.params).unwrap();
        trainer.rl_step(&traj, baseline).unwrap();
        if window.len() == 20 {
            window.pop_front();
        }
        window.push_back(traj);
        let next = p_first(&trainer.params);
        assert!(next >= p - 1e-12, "update {update}: {p} -> {next}");
        p = next;
    }
    assert!(p > 0.95, "final probability {p}");
}

#[test]
fn baseline_examples() {
    let params = init_parameters(1, 2, 4, 9).unwrap();
    let p0 = p_first(&params);

    let mut single = bandit_trajectory(0, 0.3);
    single.outcome.ret = 0.7;
    assert!((estimate_baseline(&[single], &params).unwrap() - 0.7).abs() < 1e-12);

    // Behaviour equal to the current policy: plain mean.
    let mut a = bandit_trajectory(0, p0);
    a.outcome.ret = 0.9;
    let mut b = bandit_trajectory(0, p0);
    b.outcome.ret = 0.3;
    let mean = estimate_baseline(&[a.clone(), b.clone()], &params).unwrap();
    assert!((mean - 0.6).abs() < 1e-12);

    // Halving the behaviour probability doubles the weight.
    a.behavior_probs = vec![p0 / 2.0];
    let weighted = estimate_baseline(&[a, b], &params).unwrap();
    assert!((weighted - (2.0 * 0.9 + 0.3) / 3.0).abs() < 1e-12);

    assert_eq!(estimate_baseline(&[], &params).unwrap(), 0.0);
}

fn reconstructed_trainer() -> (Trainer, Vec<EncodedDialog>) {
    let (domain, dialogs) = dialer();
    let featurizer = Featurizer::none();
    let encoded = encode_all(&domain, &featurizer, &dialogs[..3]).unwrap();
    let mut trainer = Trainer::new(init_parameters(17, 14, 16, 2).unwrap());
    train_encoded(&mut trainer, &encoded, &small_config(2), &mut NullSink).unwrap();
    assert!(unreconstructed(&trainer.params, &encoded).unwrap().is_empty());
    (trainer, encoded)
}

fn corrupt(params: &mut LstmParameters) {
    params.weights.output_weights.as_mut_slice().iter_mut().for_each(|w| *w = -*w);
    params.weights.output_bias.iter_mut().enumerate().for_each(|(k, b)| *b = k as f64);
}

#[test]
fn restoration_is_a_no_op_on_a_consistent_policy() {
    let (mut trainer, encoded) = reconstructed_trainer();
    let before = checkpoint_bytes(&trainer.params);
    assert_eq!(sl_consistency_restore(&mut trainer, &encoded, 50).unwrap(), 0);
    assert_eq!(checkpoint_bytes(&trainer.params), before);
    assert_eq!(sl_consistency_restore(&mut trainer, &[], 50).unwrap(), 0);
    assert_eq!(checkpoint_bytes(&trainer.params), before);
}

#[test]
fn restoration_repairs_a_corrupted_policy() {
    let (mut trainer, encoded) = reconstructed_trainer();
    corrupt(&mut trainer.params);
    assert!(!unreconstructed(&trainer.params, &encoded).unwrap().is_empty());
    let epochs = sl_consistency_restore(&mut trainer, &encoded, 200).unwrap();
    assert!(epochs > 0);
    assert!(unreconstructed(&trainer.params, &encoded).unwrap().is_empty());
}

#[test]
fn restoration_reports_an_exhausted_cap() {
    let (mut trainer, encoded) = reconstructed_trainer();
    corrupt(&mut trainer.params);
    match sl_consistency_restore(&mut trainer, &encoded, 1) {
        Err(Error::ReconstructionFailed { epochs, failing }) => {
            assert_eq!(epochs, 1);
            assert!(!failing.is_empty());
        }
        other => panic!("expected a reconstruction failure, got {other:?}"),
    }
}

#[test]
fn interleaved_dialogs_join_the_consistency_set() {
    let (domain, dialogs) = dialer();
    let featurizer = Featurizer::none();
    let config = small_config(4);
    let params = train_supervised(&dialogs[..2], &domain, &featurizer, &config, &mut NullSink).unwrap();
    let schedule = InterleaveSchedule {
        dialogs: dialogs[2..5].to_vec(),
        every: 10,
    };
    let rl = RlConfig {
        dialogs: 30,
        eval_points: vec![],
        baseline_window: 10,
        consistency_epoch_cap: 200,
        seed: 4,
        ..RlConfig::default()
    };
    let directory = domain.directory().clone();
    let make_sim = |s: u64| {
        UserSimulator::new(
            directory.clone(),
            SimulatorConfig {
                seed: s,
                ..SimulatorConfig::default()
            },
        )
    };
    let run = run_rl(
        &rl,
        make_sim,
        &domain,
        &featurizer,
        params,
        &dialogs[..2],
        Some(&schedule),
        &mut NullSink,
    )
    .unwrap();
    assert_eq!(run.restorations.len(), 30);
    assert_eq!(run.returns.len(), 30);
    let all = encode_all(&domain, &featurizer, &dialogs[..5]).unwrap();
    assert!(unreconstructed(&run.params, &all).unwrap().is_empty());
}

#[test]
fn clipping_happens_before_adadelta() {
    let params = init_parameters(2, 3, 4, 8).unwrap();
    let mut grads = Gradients::zeros(params.dims());
    for (k, g) in grads.grads.output_bias.iter_mut().enumerate() {
        *g = 10.0 * (k as f64 + 1.0);
    }

    let mut applied = params.clone();
    let mut opt = AdaDeltaState::new(params.dims());
    let norm = apply_gradients(&mut applied, grads.clone(), &mut opt, 1.0).unwrap();
    assert!(norm > 1.0);

    let mut manual = params.clone();
    let mut manual_opt = AdaDeltaState::new(params.dims());
    let mut clipped = grads.clone();
    clip_global_norm(&mut clipped, 1.0);
    assert!((clipped.norm() - 1.0).abs() < 1e-12);
    adadelta_step(&mut manual, &clipped, &mut manual_opt).unwrap();
    assert_eq!(checkpoint_bytes(&applied), checkpoint_bytes(&manual));

    let mut unclipped = params.clone();
    let mut unclipped_opt = AdaDeltaState::new(params.dims());
    adadelta_step(&mut unclipped, &grads, &mut unclipped_opt).unwrap();
    assert_ne!(checkpoint_bytes(&applied), checkpoint_bytes(&unclipped));
}
