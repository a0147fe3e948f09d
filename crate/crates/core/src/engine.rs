//! The per-turn operational loop.
//!
//! A [`Session`] couples frozen network parameters with a [`DomainPack`]
//! and a [`Featurizer`]. Each call to [`Session::step`] featurizes the user
//! input, lets domain code track entities and compute the action mask and
//! context features, runs one recurrent step, selects an action, fills the
//! template and dispatches API actions.
//!
//! The same featurization path drives [`teacher_forced`], which walks a
//! labeled dialog feeding the reference actions back as history. Training
//! and evaluation both go through it, so the network sees identical inputs
//! whether a dialog is replayed or played live.

use std::fmt;

use log::warn;
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::features::{assemble_observation, Featurizer};
use crate::neural::{
    masked_softmax, network_input, step_sparse, unmasked_distribution, ActionDistribution,
    ActionMask, LstmParameters, LstmState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    Text,
    Api,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Text => "text",
            ActionKind::Api => "api",
        })
    }
}

/// A system action with `<slot>` markers for entity values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTemplate {
    pub id: usize,
    pub kind: ActionKind,
    pub surface: String,
    pub api_name: Option<String>,
}

impl ActionTemplate {
    pub fn text(id: usize, surface: impl Into<String>) -> Self {
        ActionTemplate {
            id,
            kind: ActionKind::Text,
            surface: surface.into(),
            api_name: None,
        }
    }

    pub fn api(id: usize, surface: impl Into<String>, api_name: impl Into<String>) -> Self {
        ActionTemplate {
            id,
            kind: ActionKind::Api,
            surface: surface.into(),
            api_name: Some(api_name.into()),
        }
    }

    pub fn is_api(&self) -> bool {
        self.kind == ActionKind::Api
    }

    /// Slot names in order of appearance, without angle brackets.
    pub fn slots(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut rest = self.surface.as_str();
        while let Some(start) = rest.find('<') {
            let after = &rest[start + 1..];
            match after.find('>') {
                Some(end) if end > 0 && !after[..end].contains(char::is_whitespace) => {
                    out.push(&after[..end]);
                    rest = &after[end + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }
}

/// Replaces every `<slot>` marker using `lookup`. A slot without a value is
/// an error: the action mask should have ruled the action out.
pub fn render_action(
    template: &ActionTemplate,
    mut lookup: impl FnMut(&str) -> Option<String>,
) -> Result<String> {
    let mut out = template.surface.clone();
    for slot in template.slots() {
        let value = lookup(slot).ok_or_else(|| Error::MissingSlot(slot.to_string()))?;
        out = out.replacen(&format!("<{slot}>"), &value, 1);
    }
    Ok(out)
}

/// Developer-supplied domain code.
///
/// The engine never looks inside `State`; it only hands it back to the pack.
pub trait DomainPack {
    type State: Clone;
    type Mentions;
    type ApiResult: Clone;

    fn templates(&self) -> &[ActionTemplate];

    fn action_count(&self) -> usize {
        self.templates().len()
    }

    /// Fixed width of [`DomainPack::context_features`].
    fn context_len(&self) -> usize;

    fn api_feature_len(&self) -> usize {
        0
    }

    fn initial_state(&self) -> Self::State;

    fn extract_entities(&self, text: &str) -> Self::Mentions;

    fn update_state(&self, state: &mut Self::State, mentions: &Self::Mentions, text: &str);

    fn action_mask(&self, state: &Self::State) -> ActionMask;

    fn context_features(&self, state: &Self::State, mentions: &Self::Mentions) -> Vec<f64>;

    fn slot_value(&self, state: &Self::State, action: usize, slot: &str) -> Option<String>;

    fn render(&self, state: &Self::State, action: usize) -> Result<String> {
        let template = self.templates().get(action).ok_or(Error::ActionOutOfRange {
            action,
            action_count: self.action_count(),
        })?;
        render_action(template, |slot| self.slot_value(state, action, slot))
    }

    /// Bookkeeping once `action` has been emitted (e.g. marking an offer).
    fn record_action(&self, _state: &mut Self::State, _action: usize) {}

    fn dispatch_api(&self, state: &Self::State, action: usize) -> Result<Self::ApiResult>;

    /// Folds an API result into the entity state and returns the API
    /// features for the next observation. The default ignores the result.
    fn absorb_api_result(
        &self,
        _state: &mut Self::State,
        _action: usize,
        _result: &Self::ApiResult,
    ) -> Vec<f64> {
        vec![0.0; self.api_feature_len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    Greedy,
    Sample,
}

/// Argmax (lowest id on ties) or a draw proportional to the probabilities.
pub fn select_action<R: Rng + ?Sized>(
    dist: &ActionDistribution,
    mode: SelectionMode,
    rng: &mut R,
) -> usize {
    match mode {
        SelectionMode::Greedy => dist.argmax(),
        SelectionMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = dist.argmax();
            for (k, &p) in dist.probs.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                acc += p;
                last = k;
                if u < acc {
                    return k;
                }
            }
            last
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
    Api,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::User => "USER",
            Speaker::System => "SYS",
            Speaker::Api => "API",
        })
    }
}

/// Formats transcript entries as `USER: …` / `SYS: …` / `API: …` lines.
pub fn format_transcript(entries: &[(Speaker, String)]) -> String {
    entries
        .iter()
        .map(|(s, t)| format!("{s}: {t}\n"))
        .collect()
}

/// Everything that happened in one engine step.
#[derive(Debug, Clone)]
pub struct StepOutcome<R> {
    pub action: usize,
    pub kind: ActionKind,
    pub rendered: String,
    pub distribution: ActionDistribution,
    pub observation: Vec<f64>,
    pub mask: ActionMask,
    /// Set when the mask was empty and the unmasked softmax was used.
    pub unmasked_fallback: bool,
    pub api_result: Option<R>,
}

/// One live conversation.
pub struct Session<'a, P: DomainPack> {
    pack: &'a P,
    params: &'a LstmParameters,
    featurizer: &'a Featurizer,
    lstm_state: LstmState,
    entity_state: P::State,
    previous_action: Option<usize>,
    api_features: Vec<f64>,
    transcript: Vec<(Speaker, String)>,
}

fn check_compatible<P: DomainPack>(
    pack: &P,
    params: &LstmParameters,
    featurizer: &Featurizer,
) -> Result<()> {
    if pack.action_count() != params.action_count() {
        return Err(Error::Dimension {
            what: "domain action count",
            expected: params.action_count(),
            actual: pack.action_count(),
        });
    }
    let obs = featurizer
        .layout(pack.context_len(), pack.api_feature_len())
        .obs_size();
    if obs != params.obs_size() {
        return Err(Error::Dimension {
            what: "observation size",
            expected: params.obs_size(),
            actual: obs,
        });
    }
    Ok(())
}

/// Featurize → extract → track → mask/context → observation.
fn observe<P: DomainPack>(
    pack: &P,
    featurizer: &Featurizer,
    state: &mut P::State,
    api_features: &[f64],
    user_text: &str,
) -> Result<(Vec<f64>, ActionMask)> {
    let bow = featurizer.bow(user_text);
    let embedding = featurizer.embedding(user_text);
    let mentions = pack.extract_entities(user_text);
    pack.update_state(state, &mentions, user_text);
    let mask = pack.action_mask(state);
    let context = pack.context_features(state, &mentions);
    let layout = featurizer.layout(pack.context_len(), pack.api_feature_len());
    let obs = assemble_observation(&bow, &embedding, &context, api_features, &layout)?;
    Ok((obs.into_vec(), mask))
}

impl<'a, P: DomainPack> Session<'a, P> {
    pub fn new(pack: &'a P, params: &'a LstmParameters, featurizer: &'a Featurizer) -> Result<Self> {
        check_compatible(pack, params, featurizer)?;
        Ok(Session {
            pack,
            params,
            featurizer,
            lstm_state: LstmState::zeros(params.hidden()),
            entity_state: pack.initial_state(),
            previous_action: None,
            api_features: vec![0.0; pack.api_feature_len()],
            transcript: Vec::new(),
        })
    }

    pub fn transcript(&self) -> &[(Speaker, String)] {
        &self.transcript
    }

    pub fn entity_state(&self) -> &P::State {
        &self.entity_state
    }

    pub fn lstm_state(&self) -> &LstmState {
        &self.lstm_state
    }

    pub fn previous_action(&self) -> Option<usize> {
        self.previous_action
    }

    /// Runs one pass of the loop for `user_text` and emits a single action.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        user_text: &str,
        mode: SelectionMode,
        rng: &mut R,
    ) -> Result<StepOutcome<P::ApiResult>> {
        let pack = self.pack;
        let (observation, mask) = observe(
            pack,
            self.featurizer,
            &mut self.entity_state,
            &self.api_features,
            user_text,
        )?;
        let x = network_input(self.params, &observation, self.previous_action, &mask)?;
        let (next, _) = step_sparse(self.params, &self.lstm_state, x);
        self.lstm_state = next;
        let logits = crate::neural::output_logits(self.params, &self.lstm_state.hidden);
        let (distribution, unmasked_fallback) = match masked_softmax(&logits, &mask) {
            Ok(d) => (d, false),
            Err(Error::EmptyMask) => {
                warn!("action mask permits nothing; falling back to the unmasked distribution");
                (unmasked_distribution(self.params, &self.lstm_state.hidden), true)
            }
            Err(e) => return Err(e),
        };
        let action = select_action(&distribution, mode, rng);
        let rendered = pack.render(&self.entity_state, action)?;
        pack.record_action(&mut self.entity_state, action);
        let kind = pack.templates()[action].kind;
        self.transcript.push((Speaker::User, user_text.to_string()));
        let api_result = match kind {
            ActionKind::Text => {
                self.transcript.push((Speaker::System, rendered.clone()));
                None
            }
            ActionKind::Api => {
                self.transcript.push((Speaker::Api, rendered.clone()));
                let result = pack.dispatch_api(&self.entity_state, action)?;
                self.api_features = pack.absorb_api_result(&mut self.entity_state, action, &result);
                Some(result)
            }
        };
        self.previous_action = Some(action);
        Ok(StepOutcome {
            action,
            kind,
            rendered,
            distribution,
            observation,
            mask,
            unmasked_fallback,
            api_result,
        })
    }

    /// Steps once for `user_text`, then keeps stepping with an empty
    /// utterance while the emitted action is an API call, up to `max_chain`
    /// actions in total.
    pub fn respond<R: Rng + ?Sized>(
        &mut self,
        user_text: &str,
        mode: SelectionMode,
        rng: &mut R,
        max_chain: usize,
    ) -> Result<Vec<StepOutcome<P::ApiResult>>> {
        let mut out = vec![self.step(user_text, mode, rng)?];
        while out.len() < max_chain.max(1) && out.last().map(|o| o.kind) == Some(ActionKind::Api) {
            out.push(self.step("", mode, rng)?);
        }
        Ok(out)
    }
}

/// One turn of a labeled dialog.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTurn<R> {
    pub user: String,
    pub label: usize,
    /// The reference system output, as a rendered string.
    pub reference: String,
    /// What the API returned when `label` is an API action.
    pub api_result: Option<R>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDialog<R> {
    pub turns: Vec<LabeledTurn<R>>,
}

impl<R> LabeledDialog<R> {
    pub fn labels(&self) -> Vec<usize> {
        self.turns.iter().map(|t| t.label).collect()
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

/// Network inputs of a labeled dialog under teacher forcing.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDialog {
    pub observations: Vec<Vec<f64>>,
    pub masks: Vec<ActionMask>,
    pub labels: Vec<usize>,
}

/// What [`teacher_forced`] shows the visitor at each turn.
pub struct TurnView<'s, S> {
    pub index: usize,
    pub observation: Vec<f64>,
    pub mask: ActionMask,
    pub label: usize,
    /// Entity state after tracking this turn's input, before the label is
    /// recorded.
    pub state: &'s S,
}

/// Walks a labeled dialog, recording the reference action after every turn.
pub fn teacher_forced<P, F>(
    pack: &P,
    featurizer: &Featurizer,
    dialog: &LabeledDialog<P::ApiResult>,
    mut visit: F,
) -> Result<()>
where
    P: DomainPack,
    F: FnMut(TurnView<'_, P::State>) -> Result<()>,
{
    let mut state = pack.initial_state();
    let mut api_features = vec![0.0; pack.api_feature_len()];
    for (index, turn) in dialog.turns.iter().enumerate() {
        if turn.label >= pack.action_count() {
            return Err(Error::ActionOutOfRange {
                action: turn.label,
                action_count: pack.action_count(),
            });
        }
        let (observation, mask) = observe(pack, featurizer, &mut state, &api_features, &turn.user)?;
        visit(TurnView {
            index,
            observation,
            mask,
            label: turn.label,
            state: &state,
        })?;
        pack.record_action(&mut state, turn.label);
        if let Some(result) = &turn.api_result {
            api_features = pack.absorb_api_result(&mut state, turn.label, result);
        }
    }
    Ok(())
}

pub fn encode_dialog<P: DomainPack>(
    pack: &P,
    featurizer: &Featurizer,
    dialog: &LabeledDialog<P::ApiResult>,
) -> Result<EncodedDialog> {
    let mut enc = EncodedDialog {
        observations: Vec::with_capacity(dialog.len()),
        masks: Vec::with_capacity(dialog.len()),
        labels: Vec::with_capacity(dialog.len()),
    };
    teacher_forced(pack, featurizer, dialog, |view| {
        enc.observations.push(view.observation);
        enc.masks.push(view.mask);
        enc.labels.push(view.label);
        Ok(())
    })?;
    Ok(enc)
}

/// Per-turn greedy predictions under teacher forcing, with their rendering
/// in the teacher-forced entity state. A prediction that cannot be rendered
/// yields `None`.
pub fn predict_teacher_forced<P: DomainPack>(
    pack: &P,
    params: &LstmParameters,
    featurizer: &Featurizer,
    dialog: &LabeledDialog<P::ApiResult>,
) -> Result<Vec<(usize, Option<String>)>> {
    check_compatible(pack, params, featurizer)?;
    let mut lstm = LstmState::zeros(params.hidden());
    let mut previous = None;
    let mut out = Vec::with_capacity(dialog.len());
    teacher_forced(pack, featurizer, dialog, |view| {
        let x = network_input(params, &view.observation, previous, &view.mask)?;
        let (next, _) = step_sparse(params, &lstm, x);
        lstm = next;
        let logits = crate::neural::output_logits(params, &lstm.hidden);
        let dist = match masked_softmax(&logits, &view.mask) {
            Ok(d) => d,
            Err(Error::EmptyMask) => unmasked_distribution(params, &lstm.hidden),
            Err(e) => return Err(e),
        };
        let predicted = dist.argmax();
        out.push((predicted, pack.render(view.state, predicted).ok()));
        previous = Some(view.label);
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn slot_markers_are_found_in_order() {
        let t = ActionTemplate::text(0, "<name> is in the <location> of town");
        assert_eq!(t.slots(), vec!["name", "location"]);
        assert!(ActionTemplate::text(1, "a < b > c").slots().is_empty());
    }

    #[test]
    fn rendering_substitutes_entities() {
        let t = ActionTemplate::text(0, "<city>, right?");
        let r = render_action(&t, |s| (s == "city").then(|| "Seattle".to_string())).unwrap();
        assert_eq!(r, "Seattle, right?");

        let plain = ActionTemplate::text(1, "hello what can i help you with today");
        assert_eq!(render_action(&plain, |_| None).unwrap(), plain.surface);

        match render_action(&t, |_| None) {
            Err(Error::MissingSlot(slot)) => assert_eq!(slot, "city"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn greedy_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = ActionDistribution {
            probs: vec![0.2, 0.5, 0.3],
        };
        assert_eq!(select_action(&d, SelectionMode::Greedy, &mut rng), 1);
        let d = ActionDistribution {
            probs: vec![0.5, 0.5, 0.0],
        };
        assert_eq!(select_action(&d, SelectionMode::Greedy, &mut rng), 0);
    }

    #[test]
    fn sampling_frequencies_follow_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = ActionDistribution {
            probs: vec![0.25, 0.75, 0.0],
        };
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[select_action(&d, SelectionMode::Sample, &mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        assert!((counts[0] as f64 / 10_000.0 - 0.25).abs() <= 0.02);
        assert!((counts[1] as f64 / 10_000.0 - 0.75).abs() <= 0.02);
    }

    #[test]
    fn transcript_lines() {
        let t = vec![
            (Speaker::User, "hi".to_string()),
            (Speaker::System, "hello".to_string()),
            (Speaker::Api, "api_call x".to_string()),
        ];
        assert_eq!(format_transcript(&t), "USER: hi\nSYS: hello\nAPI: api_call x\n");
    }
}
