use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec};
use hcn::babi::{BabiDomain, BabiOptions, BabiTask};
use hcn::dialer::{generate_directory, sl_dialogs, DialerDomain, DialerState};
use hcn::engine::{ActionTemplate, DomainPack};
use hcn::eval::{curve_csv, delta_p, learning_curve, turn_and_dialog_accuracy, TurnReport, TurnResult};
use hcn::features::Featurizer;
use hcn::metrics::NullSink;
use hcn::neural::ActionMask;
use hcn::training::{train_supervised, SlConfig};

fn turn(correct: bool) -> TurnResult {
    TurnResult {
        predicted: 0,
        label: if correct { 0 } else { 1 },
        correct,
    }
}

#[test]
fn three_of_four_turns() {
    let report = TurnReport::from_dialogs(vec![vec![turn(true), turn(true), turn(false), turn(true)]]);
    assert_eq!(report.turn_accuracy, 0.75);
    assert_eq!(report.dialog_accuracy, 0.0);
    assert_eq!(report.first_errors(), vec![Some(2)]);
}

/// Builds first-error lists for `wins` HCN wins, `losses` rule wins and
/// `ties` ties.
fn profiles(wins: usize, losses: usize, ties: usize) -> (Vec<Option<usize>>, Vec<Option<usize>>) {
    let mut hcn = Vec::new();
    let mut rule = Vec::new();
    for k in 0..wins {
        hcn.push(if k % 2 == 0 { None } else { Some(5) });
        rule.push(Some(k % 3));
    }
    for k in 0..losses {
        hcn.push(Some(k % 2));
        rule.push(if k % 2 == 0 { None } else { Some(4) });
    }
    for k in 0..ties {
        let e = if k % 2 == 0 { None } else { Some(k) };
        hcn.push(e);
        rule.push(e);
    }
    (hcn, rule)
}

#[test]
fn delta_p_fixtures() {
    let (hcn, rule) = profiles(10, 4, 6);
    assert_eq!(hcn.len(), 20);
    assert!((delta_p(&hcn, &rule).unwrap() - 0.3).abs() < 1e-15);
    assert!((delta_p(&rule, &hcn).unwrap() + 0.3).abs() < 1e-15);
    assert_eq!(delta_p(&hcn, &hcn).unwrap(), 0.0);

    let errorless = vec![None; 7];
    let rule_errs: Vec<Option<usize>> = (0..7).map(Some).collect();
    assert_eq!(delta_p(&errorless, &rule_errs).unwrap(), 1.0);

    assert!(delta_p(&hcn, &rule[..3]).is_err());
}

fn trained_dialer() -> (DialerDomain, Vec<hcn::engine::LabeledDialog<hcn::dialer::DialerApiResult>>, hcn::neural::LstmParameters) {
    let directory = Arc::new(generate_directory(6, 30).unwrap());
    let domain = DialerDomain::new(directory);
    let dialogs = sl_dialogs(&domain, 6).unwrap();
    let config = SlConfig {
        seed: 6,
        ..SlConfig::dialer()
    };
    let params = train_supervised(&dialogs, &domain, &Featurizer::none(), &config, &mut NullSink).unwrap();
    (domain, dialogs, params)
}

#[test]
fn a_model_that_predicts_every_label_scores_one() {
    let (domain, dialogs, params) = trained_dialer();
    let report = turn_and_dialog_accuracy(&params, &domain, &Featurizer::none(), &dialogs).unwrap();
    assert_eq!(report.turn_accuracy, 1.0);
    assert_eq!(report.dialog_accuracy, 1.0);
    assert!(report.first_errors().iter().all(Option::is_none));
}

/// Delegates to the dialer but garbles the rendering of one turn.
struct Corrupting<'a> {
    inner: &'a DialerDomain,
    target: usize,
    renders: AtomicUsize,
}

impl DomainPack for Corrupting<'_> {
    type State = DialerState;
    type Mentions = <DialerDomain as DomainPack>::Mentions;
    type ApiResult = <DialerDomain as DomainPack>::ApiResult;

    fn templates(&self) -> &[ActionTemplate] {
        self.inner.templates()
    }
    fn context_len(&self) -> usize {
        self.inner.context_len()
    }
    fn initial_state(&self) -> DialerState {
        self.inner.initial_state()
    }
    fn extract_entities(&self, text: &str) -> Self::Mentions {
        self.inner.extract_entities(text)
    }
    fn update_state(&self, state: &mut DialerState, mentions: &Self::Mentions, text: &str) {
        self.inner.update_state(state, mentions, text)
    }
    fn action_mask(&self, state: &DialerState) -> ActionMask {
        self.inner.action_mask(state)
    }
    fn context_features(&self, state: &DialerState, mentions: &Self::Mentions) -> Vec<f64> {
        self.inner.context_features(state, mentions)
    }
    fn slot_value(&self, state: &DialerState, action: usize, slot: &str) -> Option<String> {
        self.inner.slot_value(state, action, slot)
    }
    fn render(&self, state: &DialerState, action: usize) -> hcn::Result<String> {
        if self.renders.fetch_add(1, Ordering::SeqCst) == self.target {
            return Ok("garbled".into());
        }
        self.inner.render(state, action)
    }
    fn record_action(&self, state: &mut DialerState, action: usize) {
        self.inner.record_action(state, action)
    }
    fn dispatch_api(&self, state: &DialerState, action: usize) -> hcn::Result<Self::ApiResult> {
        self.inner.dispatch_api(state, action)
    }
    fn api_feature_len(&self) -> usize {
        self.inner.api_feature_len()
    }
    fn absorb_api_result(&self, state: &mut DialerState, action: usize, result: &Self::ApiResult) -> Vec<f64> {
        self.inner.absorb_api_result(state, action, result)
    }
}

#[test]
fn a_wrong_prediction_does_not_leak_into_later_turns() {
    let (domain, dialogs, params) = trained_dialer();
    let featurizer = Featurizer::none();
    for dialog in dialogs.iter().take(5) {
        let one = std::slice::from_ref(dialog);
        let clean = turn_and_dialog_accuracy(&params, &domain, &featurizer, one).unwrap();
        for target in 0..dialog.len() {
            let corrupting = Corrupting {
                inner: &domain,
                target,
                renders: AtomicUsize::new(0),
            };
            let report = turn_and_dialog_accuracy(&params, &corrupting, &featurizer, one).unwrap();
            for (t, (a, b)) in report.dialogs[0].iter().zip(&clean.dialogs[0]).enumerate() {
                if t == target {
                    assert!(!a.correct);
                } else {
                    assert_eq!(a, b, "turn {t} after corrupting turn {target}");
                }
            }
        }
    }
}

#[test]
fn dialog_accuracy_never_exceeds_turn_accuracy() {
    let (domain, dialogs, _) = trained_dialer();
    let weak = train_supervised(
        &dialogs[..2],
        &domain,
        &Featurizer::none(),
        &SlConfig {
            hidden: 8,
            epochs: 1,
            stop_at_train_acc: false,
            ..SlConfig::dialer()
        },
        &mut NullSink,
    )
    .unwrap();
    let report = turn_and_dialog_accuracy(&weak, &domain, &Featurizer::none(), &dialogs).unwrap();
    assert!(report.turn_accuracy < 1.0);
    assert!(report.dialog_accuracy <= report.turn_accuracy);
}

#[test]
fn single_run_curves_are_reproducible() {
    let data = synthetic_task5(&SyntheticSpec {
        train: 30,
        test: 10,
        seed: 1,
    });
    let (domain, labeled) =
        BabiDomain::build(BabiOptions::new(BabiTask::Task5), &data.train, &data.kb, &data.test).unwrap();
    let test = domain.label_dialogs(&data.test);
    let config = SlConfig {
        hidden: 16,
        epochs: 2,
        seed: 9,
        ..SlConfig::babi()
    };
    let featurizer = Featurizer::none();
    let run = || learning_curve(&labeled, &test, &domain, &domain, &featurizer, &[1, 5], 1, &config).unwrap();
    let a = run();
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|p| p.runs.len() == 1));
    assert_eq!(curve_csv(&a), curve_csv(&run()));

    let five = learning_curve(&labeled, &test, &domain, &domain, &featurizer, &[2], 5, &config).unwrap();
    assert_eq!(five[0].runs.len(), 5);
    assert!(learning_curve(&labeled, &test, &domain, &domain, &featurizer, &[31], 1, &config).is_err());
}
