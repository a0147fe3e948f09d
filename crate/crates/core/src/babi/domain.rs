//! The restaurant-booking domain pack.
//!
//! [`BabiDomain::build`] derives everything from the training dialogs:
//! the lexicon, the template inventory, the offer/refer role of each
//! template that names a restaurant, the mined table of queries known to
//! return nothing, and the set of mask rules that the data never violates.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use log::warn;

use super::data::{BabiDialog, DbLine, DbRow};
use super::lexicon::{templatize, Lexicon, Mention, Slot, SubstitutionContext};
use crate::engine::{ActionKind, ActionTemplate, DomainPack, LabeledDialog, LabeledTurn};
use crate::error::{Error, Result};
use crate::neural::ActionMask;

pub const UNK: &str = "UNK";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BabiTask {
    /// bAbI Task5 and Task5-OOV: full booking dialogs.
    Task5,
    /// bAbI Task6: DSTC2 restaurant dialogs.
    Task6,
    /// No entity tracking, no mask, no context features: raw utterances
    /// as actions.
    Custom,
}

impl BabiTask {
    pub fn tracked_slots(self) -> &'static [Slot] {
        match self {
            BabiTask::Task5 => &Slot::ALL,
            BabiTask::Task6 => &[Slot::Cuisine, Slot::Location, Slot::Price],
            BabiTask::Custom => &[],
        }
    }

    /// Slots that must be filled before `api_call` is permitted.
    pub fn required_api_slots(self) -> &'static [Slot] {
        match self {
            BabiTask::Task5 => &Slot::ALL,
            _ => &[],
        }
    }

    pub fn context_len(self) -> usize {
        match self {
            BabiTask::Task5 => 4,
            BabiTask::Task6 => 14,
            BabiTask::Custom => 0,
        }
    }

    /// UNK folding threshold: templates seen fewer times become UNK.
    pub fn default_unk_min_count(self) -> usize {
        match self {
            BabiTask::Task6 => 3,
            _ => 0,
        }
    }
}

impl fmt::Display for BabiTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BabiTask::Task5 => "babi5",
            BabiTask::Task6 => "babi6",
            BabiTask::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BabiOptions {
    pub task: BabiTask,
    pub use_mask: bool,
    pub unk_min_count: usize,
}

impl BabiOptions {
    pub fn new(task: BabiTask) -> Self {
        BabiOptions {
            task,
            use_mask: task != BabiTask::Custom,
            unk_min_count: task.default_unk_min_count(),
        }
    }

    pub fn with_mask(mut self, use_mask: bool) -> Self {
        self.use_mask = use_mask;
        self
    }
}

/// How domain code treats a template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateRole {
    Plain,
    Ask(Slot),
    Api,
    /// Names the next restaurant not yet offered.
    Offer,
    /// Names the restaurant offered most recently.
    Refer,
    Unk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MaskRule {
    /// `api_call` needs every required slot.
    ApiNeedsSlots,
    /// Offers need an un-offered database result.
    OfferNeedsResults,
    /// Referring to a restaurant needs one to have been offered.
    ReferNeedsOffer,
    /// Do not ask for a slot that is already known.
    DontAskKnown,
    /// Slot markers outside restaurant templates need tracked values.
    SlotsAvailable,
}

impl MaskRule {
    pub const ALL: [MaskRule; 5] = [
        MaskRule::ApiNeedsSlots,
        MaskRule::OfferNeedsResults,
        MaskRule::ReferNeedsOffer,
        MaskRule::DontAskKnown,
        MaskRule::SlotsAvailable,
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct Restaurant {
    pub name: String,
    pub attributes: BTreeMap<String, String>,
    pub rating: f64,
}

/// Groups rows by restaurant in order of first appearance and sorts by
/// rating, highest first. Ties keep appearance order.
pub fn restaurants_from_rows<'a>(rows: impl IntoIterator<Item = &'a DbRow>) -> Vec<Restaurant> {
    let mut out: Vec<Restaurant> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rows {
        let k = *index.entry(row.restaurant.clone()).or_insert_with(|| {
            out.push(Restaurant {
                name: row.restaurant.clone(),
                attributes: BTreeMap::new(),
                rating: 0.0,
            });
            out.len() - 1
        });
        if row.attribute == "R_rating" {
            out[k].rating = row.value.parse().unwrap_or(0.0);
        }
        out[k].attributes.insert(row.attribute.clone(), row.value.clone());
    }
    out.sort_by(|a, b| b.rating.total_cmp(&a.rating));
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityState {
    pub slots: BTreeMap<Slot, String>,
    /// Latest query results, rating descending.
    pub db: Vec<Restaurant>,
    pub db_queried: bool,
    /// Restaurant names in the order they were offered.
    pub offered: Vec<String>,
    pub current: Option<String>,
}

impl EntityState {
    pub fn next_offer(&self) -> Option<&Restaurant> {
        self.db.iter().find(|r| !self.offered.contains(&r.name))
    }

    pub fn restaurant(&self, name: &str) -> Option<&Restaurant> {
        self.db.iter().find(|r| r.name == name)
    }

    fn query_key(&self) -> QueryKey {
        QueryKey {
            cuisine: self.slots.get(&Slot::Cuisine).cloned(),
            location: self.slots.get(&Slot::Location).cloned(),
            price: self.slots.get(&Slot::Price).cloned(),
        }
    }

    fn begin_query(&mut self) {
        self.db_queried = true;
        self.db.clear();
        self.offered.clear();
        self.current = None;
    }

    fn absorb(&mut self, block: &[DbLine]) {
        let rows: Vec<&DbRow> = block
            .iter()
            .filter_map(|l| match l {
                DbLine::Row(r) => Some(r),
                DbLine::Other(_) => None,
            })
            .collect();
        if !block.is_empty() {
            self.db_queried = true;
            self.db = restaurants_from_rows(rows);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QueryKey {
    pub cuisine: Option<String>,
    pub location: Option<String>,
    pub price: Option<String>,
}

/// Queries the training transcripts show to return nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmptyQueryTable {
    pub queries: BTreeSet<QueryKey>,
    pub cuisines: BTreeSet<String>,
}

impl EmptyQueryTable {
    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.cuisines.is_empty()
    }

    pub fn contains_query(&self, state: &EntityState) -> bool {
        self.queries.contains(&state.query_key())
    }

    pub fn contains_cuisine(&self, state: &EntityState) -> bool {
        state
            .slots
            .get(&Slot::Cuisine)
            .is_some_and(|c| self.cuisines.contains(c))
    }

    fn record(&mut self, state: &EntityState) {
        self.queries.insert(state.query_key());
        if let Some(c) = state.slots.get(&Slot::Cuisine) {
            self.cuisines.insert(c.clone());
        }
    }
}

/// True for system turns that report a search with no results.
pub fn is_no_result_utterance(system: &str) -> bool {
    let s = system.to_lowercase();
    s.contains("restaurant") && (s.contains("there is no") || s.contains("there are no"))
}

const ASK_KEYWORDS: [(Slot, &[&str]); 4] = [
    (
        Slot::Cuisine,
        &["type of cuisine", "kind of food", "type of food", "what food"],
    ),
    (
        Slot::Location,
        &["where should it be", "part of town", "which area", "what area"],
    ),
    (Slot::PartySize, &["how many people"]),
    (
        Slot::Price,
        &[
            "which price range",
            "what price range",
            "cheap , moderate , or expensive",
        ],
    ),
];

fn ask_slot(surface: &str) -> Option<Slot> {
    if surface.contains('<') {
        return None;
    }
    let s = surface.to_lowercase();
    ASK_KEYWORDS
        .iter()
        .find(|(_, keys)| keys.iter().any(|k| s.contains(k)))
        .map(|(slot, _)| *slot)
}

#[derive(Clone)]
pub struct BabiDomain {
    options: BabiOptions,
    lexicon: Lexicon,
    restaurants: BTreeMap<String, BTreeMap<String, String>>,
    templates: Vec<ActionTemplate>,
    roles: Vec<TemplateRole>,
    surface_index: HashMap<String, usize>,
    unk: Option<usize>,
    empty_queries: EmptyQueryTable,
    rules: BTreeSet<MaskRule>,
    test_mode: bool,
}

impl fmt::Debug for BabiDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BabiDomain")
            .field("task", &self.options.task)
            .field("templates", &self.templates.len())
            .field("rules", &self.rules)
            .finish()
    }
}

/// Per-turn result of the templatization pass.
struct TurnTemplate {
    surface: String,
    name: Option<String>,
}

impl BabiDomain {
    /// Builds the domain from training dialogs and returns them labeled.
    ///
    /// `kb` and `extra` only contribute database content (names and slot
    /// values); no labels are read from `extra`.
    pub fn build(
        options: BabiOptions,
        train: &[BabiDialog],
        kb: &[DbRow],
        extra: &[BabiDialog],
    ) -> Result<(Self, Vec<LabeledDialog<Vec<DbLine>>>)> {
        let task = options.task;
        let mut lexicon = Lexicon::new();
        let mut restaurants: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        if task != BabiTask::Custom {
            lexicon.add_rows(kb);
            let api_slots: &[Slot] = match task {
                BabiTask::Task5 => &Slot::ALL,
                _ => &[Slot::Cuisine, Slot::Location, Slot::Price],
            };
            lexicon.add_dialogs(train, api_slots);
            lexicon.add_dialogs(extra, &[]);
            let all_rows = kb.iter().chain(
                train
                    .iter()
                    .chain(extra)
                    .flat_map(|d| d.turns.iter().flat_map(|t| &t.db).chain(&d.trailing_db))
                    .filter_map(|l| match l {
                        DbLine::Row(r) => Some(r),
                        DbLine::Other(_) => None,
                    }),
            );
            for r in all_rows {
                restaurants
                    .entry(r.restaurant.clone())
                    .or_default()
                    .insert(r.attribute.clone(), r.value.clone());
            }
        }

        let mut domain = BabiDomain {
            options,
            lexicon,
            restaurants,
            templates: Vec::new(),
            roles: Vec::new(),
            surface_index: HashMap::new(),
            unk: None,
            empty_queries: EmptyQueryTable::default(),
            rules: MaskRule::ALL.into_iter().collect(),
            test_mode: false,
        };

        // Pass 1: templatize every system turn, vote on offer/refer roles
        // and mine empty queries.
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        let mut votes: HashMap<String, (usize, usize)> = HashMap::new();
        let mut empty = EmptyQueryTable::default();
        for d in train {
            let mut state = EntityState::default();
            let mut mentioned: BTreeSet<String> = BTreeSet::new();
            for (t, turn) in d.turns.iter().enumerate() {
                let tt = domain.observe_turn(&mut state, turn.user.as_str(), &turn.system);
                if is_no_result_utterance(&turn.system) && state.db.is_empty() {
                    empty.record(&state);
                }
                if let Some(n) = &tt.name {
                    let v = votes.entry(tt.surface.clone()).or_default();
                    if mentioned.insert(n.clone()) {
                        v.0 += 1;
                    } else {
                        v.1 += 1;
                    }
                }
                let c = counts.entry(tt.surface.clone()).or_insert(0);
                if *c == 0 {
                    order.push(tt.surface.clone());
                }
                *c += 1;
                if turn.system.starts_with("api_call") {
                    state.begin_query();
                    mentioned.clear();
                }
                state.absorb(d.db_after(t));
            }
        }

        let mut folded = 0usize;
        for surface in order {
            if counts[&surface] < options.unk_min_count {
                folded += 1;
                continue;
            }
            let id = domain.templates.len();
            let role = if surface.starts_with("api_call") && task != BabiTask::Custom {
                TemplateRole::Api
            } else if task == BabiTask::Custom {
                TemplateRole::Plain
            } else if surface.contains("<name>") {
                let (offer, refer) = votes.get(&surface).copied().unwrap_or((1, 0));
                if offer >= refer {
                    TemplateRole::Offer
                } else {
                    TemplateRole::Refer
                }
            } else if let Some(slot) = ask_slot(&surface) {
                TemplateRole::Ask(slot)
            } else {
                TemplateRole::Plain
            };
            let template = if role == TemplateRole::Api {
                ActionTemplate::api(id, surface.clone(), "api_call")
            } else {
                ActionTemplate::text(id, surface.clone())
            };
            domain.surface_index.insert(surface, id);
            domain.templates.push(template);
            domain.roles.push(role);
        }
        if folded > 0 {
            let id = domain.templates.len();
            domain.templates.push(ActionTemplate::text(id, UNK));
            domain.roles.push(TemplateRole::Unk);
            domain.unk = Some(id);
        }
        if domain.templates.is_empty() {
            return Err(Error::Config("training dialogs produced no templates".into()));
        }
        domain.empty_queries = empty;

        let labeled = domain.label_dialogs(train);
        if task != BabiTask::Custom {
            domain.validate_rules(&labeled);
        }
        Ok((domain, labeled))
    }

    /// Tracks the user turn and templatizes the system turn against the
    /// resulting state.
    fn observe_turn(&self, state: &mut EntityState, user: &str, system: &str) -> TurnTemplate {
        if self.options.task == BabiTask::Custom {
            return TurnTemplate {
                surface: system.to_string(),
                name: None,
            };
        }
        let mentions = self.lexicon.extract(user);
        self.update_entity_state(state, &mentions, &[]);
        let ctx = SubstitutionContext {
            slots: state.slots.iter().map(|(k, v)| (*k, v.as_str())).collect(),
            restaurants: &self.restaurants,
        };
        let t = templatize(system, &self.lexicon, &ctx);
        TurnTemplate {
            surface: t.surface,
            name: t.name,
        }
    }

    /// Labels dialogs against the inventory. System turns whose template
    /// is unknown become UNK, or action 0 with a warning when the
    /// inventory has no UNK.
    pub fn label_dialogs(&self, dialogs: &[BabiDialog]) -> Vec<LabeledDialog<Vec<DbLine>>> {
        let mut uncovered = 0usize;
        let out = dialogs
            .iter()
            .map(|d| {
                let mut state = self.initial_state();
                let turns = d
                    .turns
                    .iter()
                    .enumerate()
                    .map(|(t, turn)| {
                        let tt = self.observe_turn(&mut state, &turn.user, &turn.system);
                        let label = match self.surface_index.get(&tt.surface) {
                            Some(&id) => id,
                            None => {
                                uncovered += 1;
                                self.unk.unwrap_or(0)
                            }
                        };
                        self.record_action(&mut state, label);
                        let api_result = if self.templates[label].kind == ActionKind::Api {
                            let block = d.db_after(t).to_vec();
                            self.absorb_api_result(&mut state, label, &block);
                            Some(block)
                        } else {
                            None
                        };
                        LabeledTurn {
                            user: turn.user.clone(),
                            label,
                            reference: turn.system.clone(),
                            api_result,
                        }
                    })
                    .collect();
                LabeledDialog { turns }
            })
            .collect();
        if uncovered > 0 && self.unk.is_none() {
            warn!("{uncovered} system turns match no template; labeled as action 0");
        }
        out
    }

    fn validate_rules(&mut self, labeled: &[LabeledDialog<Vec<DbLine>>]) {
        let mut violations: BTreeMap<MaskRule, usize> = BTreeMap::new();
        for d in labeled {
            let mut state = self.initial_state();
            for turn in &d.turns {
                let mentions = self.extract_entities(&turn.user);
                self.update_state(&mut state, &mentions, &turn.user);
                for rule in MaskRule::ALL {
                    if !self.rule_permits(rule, &state, turn.label) {
                        *violations.entry(rule).or_default() += 1;
                    }
                }
                self.record_action(&mut state, turn.label);
                if let Some(r) = &turn.api_result {
                    self.absorb_api_result(&mut state, turn.label, r);
                }
            }
        }
        for (rule, n) in violations {
            warn!("mask rule {rule:?} contradicts {n} training turns; disabled");
            self.rules.remove(&rule);
        }
    }

    fn rule_permits(&self, rule: MaskRule, state: &EntityState, action: usize) -> bool {
        let role = self.roles[action];
        match rule {
            MaskRule::ApiNeedsSlots => {
                role != TemplateRole::Api
                    || self
                        .options
                        .task
                        .required_api_slots()
                        .iter()
                        .all(|s| state.slots.contains_key(s))
            }
            MaskRule::OfferNeedsResults => {
                role != TemplateRole::Offer || state.next_offer().is_some()
            }
            MaskRule::ReferNeedsOffer => role != TemplateRole::Refer || state.current.is_some(),
            MaskRule::DontAskKnown => match role {
                TemplateRole::Ask(slot) => !state.slots.contains_key(&slot),
                _ => true,
            },
            MaskRule::SlotsAvailable => {
                matches!(role, TemplateRole::Offer | TemplateRole::Refer | TemplateRole::Api)
                    || self.templates[action]
                        .slots()
                        .iter()
                        .all(|s| Slot::from_marker(s).is_some_and(|s| state.slots.contains_key(&s)))
            }
        }
    }

    pub fn options(&self) -> BabiOptions {
        self.options
    }

    pub fn task(&self) -> BabiTask {
        self.options.task
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn roles(&self) -> &[TemplateRole] {
        &self.roles
    }

    pub fn unk_action(&self) -> Option<usize> {
        self.unk
    }

    pub fn empty_queries(&self) -> &EmptyQueryTable {
        &self.empty_queries
    }

    pub fn active_rules(&self) -> &BTreeSet<MaskRule> {
        &self.rules
    }

    pub fn template_id(&self, surface: &str) -> Option<usize> {
        self.surface_index.get(surface).copied()
    }

    /// In test mode UNK is never permitted.
    pub fn set_test_mode(&mut self, test_mode: bool) {
        self.test_mode = test_mode;
    }

    pub fn update_entity_state(&self, state: &mut EntityState, mentions: &[Mention], db_block: &[DbLine]) {
        let tracked = self.options.task.tracked_slots();
        for m in mentions {
            if tracked.contains(&m.slot) {
                state.slots.insert(m.slot, m.value.clone());
            }
        }
        state.absorb(db_block);
    }

    pub fn compute_action_mask(&self, state: &EntityState) -> ActionMask {
        let n = self.templates.len();
        let mut mask = ActionMask::all(n);
        if !self.options.use_mask {
            return mask;
        }
        for a in 0..n {
            let permitted = self.rules.iter().all(|&r| self.rule_permits(r, state, a));
            let unk_blocked = self.test_mode && self.roles[a] == TemplateRole::Unk;
            mask.set(a, permitted && !unk_blocked);
        }
        mask
    }

    pub fn compute_context_features(&self, state: &EntityState, mentions: &[Mention]) -> Vec<f64> {
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        let tracked = self.options.task.tracked_slots();
        match self.options.task {
            BabiTask::Custom => Vec::new(),
            BabiTask::Task5 => tracked.iter().map(|s| bit(state.slots.contains_key(s))).collect(),
            BabiTask::Task6 => {
                let mut f = Vec::with_capacity(14);
                f.extend(tracked.iter().map(|s| bit(state.slots.contains_key(s))));
                f.extend(tracked.iter().map(|s| bit(mentions.iter().any(|m| m.slot == *s))));
                f.push(bit(state.db_queried));
                f.push(bit(state.db_queried && state.db.is_empty()));
                f.push(bit(!state.db.is_empty()));
                f.push(bit(!state.offered.is_empty()));
                f.push(bit(!state.db.is_empty() && state.next_offer().is_none()));
                f.push(bit(state.next_offer().is_some()));
                f.push(bit(self.empty_queries.contains_query(state)));
                f.push(bit(self.empty_queries.contains_cuisine(state)));
                f
            }
        }
    }

    fn named_restaurant<'s>(&'s self, state: &'s EntityState, action: usize) -> Option<(&'s str, &'s BTreeMap<String, String>)> {
        let name = match self.roles[action] {
            TemplateRole::Offer => state.next_offer().map(|r| r.name.as_str()),
            _ => state
                .current
                .as_deref()
                .or_else(|| state.db.first().map(|r| r.name.as_str())),
        }?;
        let attrs = state
            .restaurant(name)
            .map(|r| &r.attributes)
            .or_else(|| self.restaurants.get(name))?;
        Some((name, attrs))
    }

    /// Restaurants in the knowledge base matching the tracked cuisine,
    /// location and price.
    pub fn query(&self, state: &EntityState) -> Vec<DbLine> {
        let filters: Vec<(&str, &str)> = [Slot::Cuisine, Slot::Location, Slot::Price]
            .iter()
            .filter_map(|s| state.slots.get(s).map(|v| (s.attribute(), v.as_str())))
            .collect();
        let mut out = Vec::new();
        for (name, attrs) in &self.restaurants {
            if filters.iter().all(|(a, v)| attrs.get(*a).map(String::as_str) == Some(*v)) {
                for (a, v) in attrs {
                    out.push(DbLine::Row(DbRow {
                        restaurant: name.clone(),
                        attribute: a.clone(),
                        value: v.clone(),
                    }));
                }
            }
        }
        if out.is_empty() {
            out.push(DbLine::Other("api_call no result".into()));
        }
        out
    }
}

impl DomainPack for BabiDomain {
    type State = EntityState;
    type Mentions = Vec<Mention>;
    type ApiResult = Vec<DbLine>;

    fn templates(&self) -> &[ActionTemplate] {
        &self.templates
    }

    fn context_len(&self) -> usize {
        self.options.task.context_len()
    }

    fn initial_state(&self) -> EntityState {
        EntityState::default()
    }

    fn extract_entities(&self, text: &str) -> Vec<Mention> {
        if self.options.task == BabiTask::Custom {
            return Vec::new();
        }
        self.lexicon.extract(text)
    }

    fn update_state(&self, state: &mut EntityState, mentions: &Vec<Mention>, _text: &str) {
        self.update_entity_state(state, mentions, &[]);
    }

    fn action_mask(&self, state: &EntityState) -> ActionMask {
        self.compute_action_mask(state)
    }

    fn context_features(&self, state: &EntityState, mentions: &Vec<Mention>) -> Vec<f64> {
        self.compute_context_features(state, mentions)
    }

    fn slot_value(&self, state: &EntityState, action: usize, slot: &str) -> Option<String> {
        let template = &self.templates[action];
        let named = if template.surface.contains("<name>") {
            self.named_restaurant(state, action)
        } else {
            None
        };
        if slot == "name" {
            return named.map(|(n, _)| n.to_string());
        }
        let s = Slot::from_marker(slot)?;
        if let Some(v) = named.and_then(|(_, attrs)| attrs.get(s.attribute())) {
            return Some(v.clone());
        }
        match state.slots.get(&s) {
            Some(v) => Some(v.clone()),
            None if template.kind == ActionKind::Api => Some(s.attribute().to_string()),
            None => None,
        }
    }

    fn render(&self, state: &EntityState, action: usize) -> Result<String> {
        let template = self.templates.get(action).ok_or(Error::ActionOutOfRange {
            action,
            action_count: self.templates.len(),
        })?;
        if self.options.task == BabiTask::Custom {
            return Ok(template.surface.clone());
        }
        crate::engine::render_action(template, |slot| self.slot_value(state, action, slot))
    }

    fn record_action(&self, state: &mut EntityState, action: usize) {
        match self.roles.get(action) {
            Some(TemplateRole::Api) => state.begin_query(),
            Some(TemplateRole::Offer) => {
                if let Some(name) = state.next_offer().map(|r| r.name.clone()) {
                    state.offered.push(name.clone());
                    state.current = Some(name);
                }
            }
            _ => {}
        }
    }

    fn dispatch_api(&self, state: &EntityState, _action: usize) -> Result<Vec<DbLine>> {
        Ok(self.query(state))
    }

    fn absorb_api_result(&self, state: &mut EntityState, _action: usize, result: &Vec<DbLine>) -> Vec<f64> {
        state.absorb(result);
        state.db_queried = true;
        Vec::new()
    }
}

/// `id<TAB>kind<TAB>surface` lines.
pub fn write_inventory(templates: &[ActionTemplate]) -> String {
    templates
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.id, t.kind, t.surface))
        .collect()
}

pub fn parse_inventory(text: &str, name: &str) -> Result<Vec<ActionTemplate>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (id, kind, surface) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::parse(name, i + 1, "expected id<TAB>kind<TAB>surface")),
        };
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(name, i + 1, "bad template id"))?;
        if id != out.len() {
            return Err(Error::parse(name, i + 1, "template ids must be dense and ordered"));
        }
        out.push(match kind {
            "text" => ActionTemplate::text(id, surface),
            "api" => ActionTemplate::api(id, surface, "api_call"),
            _ => return Err(Error::parse(name, i + 1, format!("unknown kind `{kind}`"))),
        });
    }
    Ok(out)
}
