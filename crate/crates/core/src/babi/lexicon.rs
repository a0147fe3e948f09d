//! Entity lexicons, string-match extraction and templatization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use super::data::{BabiDialog, DbLine, DbRow};
use crate::features::tokenize;

/// Entity types tracked in the restaurant domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Cuisine,
    Location,
    PartySize,
    Price,
}

impl Slot {
    /// Canonical order, used for context features and api_call arguments.
    pub const ALL: [Slot; 4] = [Slot::Cuisine, Slot::Location, Slot::PartySize, Slot::Price];

    pub fn marker(self) -> &'static str {
        match self {
            Slot::Cuisine => "cuisine",
            Slot::Location => "location",
            Slot::PartySize => "party_size",
            Slot::Price => "price",
        }
    }

    /// Database attribute holding this slot's value.
    pub fn attribute(self) -> &'static str {
        match self {
            Slot::Cuisine => "R_cuisine",
            Slot::Location => "R_location",
            Slot::PartySize => "R_number",
            Slot::Price => "R_price",
        }
    }

    pub fn from_marker(marker: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.marker() == marker)
    }

    pub fn from_attribute(attribute: &str) -> Option<Slot> {
        Slot::ALL.into_iter().find(|s| s.attribute() == attribute)
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.marker())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub slot: Slot,
    pub value: String,
    /// Token span `[start, end)` in the tokenized utterance.
    pub span: (usize, usize),
}

/// Known entity values per slot plus the set of restaurant names.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    values: BTreeMap<Slot, BTreeSet<String>>,
    names: BTreeSet<String>,
    /// Token sequence → (slot, canonical value).
    index: HashMap<Vec<String>, (Slot, String)>,
    max_len: usize,
}

fn surface_forms(value: &str) -> Vec<Vec<String>> {
    let spaced: Vec<String> = value.split_whitespace().map(str::to_lowercase).collect();
    let mut forms = vec![spaced];
    if value.contains('_') {
        forms.push(value.split(['_', ' ']).filter(|t| !t.is_empty()).map(str::to_lowercase).collect());
    }
    forms
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    /// Registers a value. When two slots claim the same surface form the
    /// first registration wins.
    pub fn insert(&mut self, slot: Slot, value: &str) {
        if value.is_empty() || value.starts_with("R_") {
            return;
        }
        if !self.values.entry(slot).or_default().insert(value.to_string()) {
            return;
        }
        for form in surface_forms(value) {
            if form.is_empty() {
                continue;
            }
            self.max_len = self.max_len.max(form.len());
            self.index.entry(form).or_insert((slot, value.to_string()));
        }
    }

    pub fn insert_name(&mut self, name: &str) {
        self.names.insert(name.to_string());
    }

    pub fn add_row(&mut self, row: &DbRow) {
        self.insert_name(&row.restaurant);
        if let Some(slot) = Slot::from_attribute(&row.attribute) {
            self.insert(slot, &row.value);
        }
    }

    pub fn add_rows<'a>(&mut self, rows: impl IntoIterator<Item = &'a DbRow>) {
        for r in rows {
            self.add_row(r);
        }
    }

    /// Adds every database row in the dialogs, and the positional arguments
    /// of their `api_call` turns under `api_slots`.
    pub fn add_dialogs(&mut self, dialogs: &[BabiDialog], api_slots: &[Slot]) {
        for d in dialogs {
            let rows = d
                .turns
                .iter()
                .flat_map(|t| t.db.iter())
                .chain(d.trailing_db.iter());
            for line in rows {
                if let DbLine::Row(r) = line {
                    self.add_row(r);
                }
            }
            for t in &d.turns {
                if let Some(args) = t.system.strip_prefix("api_call ") {
                    for (slot, value) in api_slots.iter().zip(args.split(' ')) {
                        self.insert(*slot, value);
                    }
                }
            }
        }
    }

    pub fn values(&self, slot: Slot) -> impl Iterator<Item = &str> {
        self.values.get(&slot).into_iter().flatten().map(String::as_str)
    }

    pub fn names(&self) -> &BTreeSet<String> {
        &self.names
    }

    pub fn is_name(&self, token: &str) -> bool {
        self.names.contains(token)
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty() && self.names.is_empty()
    }

    /// Longest-match-first scan over the tokenized utterance.
    pub fn extract(&self, text: &str) -> Vec<Mention> {
        let tokens = tokenize(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|len| {
                self.index
                    .get(&tokens[i..i + len])
                    .map(|(slot, value)| (len, *slot, value.clone()))
            });
            match hit {
                Some((len, slot, value)) => {
                    out.push(Mention {
                        slot,
                        value,
                        span: (i, i + len),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Values that may be replaced by slot markers in one system utterance.
#[derive(Debug, Clone)]
pub struct SubstitutionContext<'a> {
    pub slots: BTreeMap<Slot, &'a str>,
    /// Attributes of restaurants by name.
    pub restaurants: &'a BTreeMap<String, BTreeMap<String, String>>,
}

/// Result of templatizing one system utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templatized {
    pub surface: String,
    /// Restaurant that `<name>` stands for, if any.
    pub name: Option<String>,
}

/// Replaces entity values with `<slot>` markers.
///
/// Tokens are split on single spaces so that re-rendering restores the
/// original spacing. Restaurant names become `<name>`, tokens like
/// `resto_x_phone` become `<name>_phone`, and `R_cuisine` style
/// placeholders become the matching marker. Slot values are replaced only
/// when they equal the tracked value or an attribute of the restaurant the
/// utterance names.
pub fn templatize(utterance: &str, lexicon: &Lexicon, ctx: &SubstitutionContext<'_>) -> Templatized {
    let tokens: Vec<&str> = utterance.split(' ').collect();
    let mut name: Option<String> = None;
    for tok in &tokens {
        if lexicon.is_name(tok) {
            name = Some(tok.to_string());
            break;
        }
        if name.is_none() {
            if let Some(n) = name_prefix(tok, lexicon) {
                name = Some(n.to_string());
            }
        }
    }

    // Candidate (token sequence, marker) pairs, longest first.
    let mut candidates: Vec<(Vec<String>, &'static str)> = Vec::new();
    if let Some(n) = &name {
        if let Some(attrs) = ctx.restaurants.get(n) {
            for slot in Slot::ALL {
                if let Some(v) = attrs.get(slot.attribute()) {
                    for form in surface_forms(v) {
                        candidates.push((form, slot.marker()));
                    }
                }
            }
        }
    }
    for (slot, v) in &ctx.slots {
        for form in surface_forms(v) {
            candidates.push((form, slot.marker()));
        }
    }
    candidates.retain(|(f, _)| !f.is_empty());
    candidates.sort_by_key(|(f, _)| std::cmp::Reverse(f.len()));

    let mut out: Vec<String> = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if Some(tok) == name.as_deref() {
            out.push("<name>".to_string());
            i += 1;
            continue;
        }
        if let (Some(n), Some(rest)) = (name.as_deref(), name.as_deref().and_then(|n| tok.strip_prefix(n))) {
            if rest.starts_with('_') && !n.is_empty() {
                out.push(format!("<name>{rest}"));
                i += 1;
                continue;
            }
        }
        if let Some(slot) = Slot::from_attribute(tok) {
            out.push(format!("<{}>", slot.marker()));
            i += 1;
            continue;
        }
        let matched = candidates.iter().find(|(form, _)| {
            i + form.len() <= tokens.len()
                && form
                    .iter()
                    .zip(&tokens[i..i + form.len()])
                    .all(|(a, b)| a == &b.to_lowercase())
        });
        match matched {
            Some((form, marker)) => {
                out.push(format!("<{marker}>"));
                i += form.len();
            }
            None => {
                out.push(tok.to_string());
                i += 1;
            }
        }
    }
    Templatized {
        surface: out.join(" "),
        name,
    }
}

fn name_prefix<'l>(token: &str, lexicon: &'l Lexicon) -> Option<&'l str> {
    let mut best: Option<&str> = None;
    for (pos, _) in token.match_indices('_') {
        if let Some(n) = lexicon.names.get(&token[..pos]) {
            best = Some(n.as_str());
        }
    }
    best
}
