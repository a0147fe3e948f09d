//! A live session driven by the recorded user turns must see exactly the
//! observations that the teacher-forced encoder produces.

use std::sync::Arc;

use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec};
use hcn::babi::{BabiDomain, BabiOptions, BabiTask};
use hcn::dialer::{generate_directory, sl_dialogs, DialerDomain};
use hcn::engine::{encode_dialog, DomainPack, LabeledDialog, SelectionMode, Session};
use hcn::features::{Featurizer, Vocabulary};
use hcn::metrics::NullSink;
use hcn::neural::{forward_dialog, LstmParameters};
use hcn::training::{train_supervised, SlConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn replay<P: DomainPack>(
    pack: &P,
    params: &LstmParameters,
    featurizer: &Featurizer,
    dialogs: &[LabeledDialog<P::ApiResult>],
) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (n, dialog) in dialogs.iter().enumerate() {
        let encoded = encode_dialog(pack, featurizer, dialog).unwrap();
        let reference =
            forward_dialog(params, &encoded.observations, &encoded.masks, &encoded.labels).unwrap();
        let mut session = Session::new(pack, params, featurizer).unwrap();
        for (t, turn) in dialog.turns.iter().enumerate() {
            let step = session.step(&turn.user, SelectionMode::Greedy, &mut rng).unwrap();
            let same_bits = step
                .observation
                .iter()
                .zip(&encoded.observations[t])
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits && step.observation.len() == encoded.observations[t].len());
            assert_eq!(step.mask, encoded.masks[t], "dialog {n} turn {t}");
            for (a, b) in step.distribution.probs.iter().zip(&reference[t].probs) {
                assert_eq!(a.to_bits(), b.to_bits(), "dialog {n} turn {t}: {a} vs {b}");
            }
            assert_eq!(step.action, turn.label, "dialog {n} turn {t}");
            assert_eq!(step.rendered, turn.reference);
        }
    }
}

#[test]
fn dialer_sessions_match_teacher_forcing() {
    let directory = Arc::new(generate_directory(8, 30).unwrap());
    let domain = DialerDomain::new(directory);
    let dialogs = sl_dialogs(&domain, 8).unwrap();
    let featurizer = Featurizer::none();
    let config = SlConfig {
        seed: 8,
        ..SlConfig::dialer()
    };
    let params = train_supervised(&dialogs, &domain, &featurizer, &config, &mut NullSink).unwrap();
    replay(&domain, &params, &featurizer, &dialogs);
}

#[test]
fn babi_sessions_match_teacher_forcing() {
    let data = synthetic_task5(&SyntheticSpec {
        train: 20,
        test: 5,
        seed: 2,
    });
    let (domain, labeled) =
        BabiDomain::build(BabiOptions::new(BabiTask::Task5), &data.train, &data.kb, &data.test).unwrap();
    let vocab = Vocabulary::build(labeled.iter().flat_map(|d| d.turns.iter().map(|t| t.user.as_str())));
    let featurizer = Featurizer {
        vocab: Some(vocab),
        embeddings: None,
    };
    let config = SlConfig {
        hidden: 32,
        stop_at_train_acc: true,
        seed: 2,
        ..SlConfig::babi()
    };
    let params = train_supervised(&labeled, &domain, &featurizer, &config, &mut NullSink).unwrap();

    // A query the user later revises has no result block in the data, while
    // a live session would receive one; only dialogs whose every call
    // carries results see identical inputs.
    let fully_recorded: Vec<_> = labeled
        .into_iter()
        .filter(|d| {
            d.turns.iter().all(|t| {
                !domain.templates()[t.label].is_api() || t.api_result.as_ref().is_some_and(|r| !r.is_empty())
            })
        })
        .collect();
    assert!(fully_recorded.len() >= 10);
    replay(&domain, &params, &featurizer, &fully_recorded);
}
