//! The name-dialing domain: a synthetic personnel directory, a 14-action
//! inventory with two API calls, entity logic, the action mask, 17 context
//! features, a parameterized user simulator and a hand-written oracle
//! policy for producing labeled dialogs.
//!
//! User turns are structured events rather than natural language, written
//! as `key=value` tokens plus `yes`, `no` and `bye`:
//!
//! ```text
//! firstname=joe lastname=adamson phonetype=work
//! ```
//!
//! Bare words are also recognized when they match a directory name, a
//! nickname or a phone type.
//!
//! | id | action               | permitted when                                         |
//! |----|----------------------|--------------------------------------------------------|
//! | 0  | Greet                | no system action yet                                   |
//! | 1  | AskWho               | no name given                                          |
//! | 2  | AskFullName          | more than one candidate                                |
//! | 3  | DisambiguatePerson   | more than one candidate                                |
//! | 4  | AskPhoneType         | person looked up, several types, none requested        |
//! | 5  | ConfirmFallback      | requested type unavailable, fallback not yet answered  |
//! | 6  | AnnounceCall         | number resolved, call not yet announced                |
//! | 7  | SorryNoSuchPerson    | a name was given and nobody matches                    |
//! | 8  | SorryNoSuchNumber    | requested type unavailable                             |
//! | 9  | Goodbye              | always                                                 |
//! | 10 | Rephrase             | always                                                 |
//! | 11 | Ack                  | always                                                 |
//! | 12 | SavePhonetypeavail() | one candidate, not yet looked up                       |
//! | 13 | PlaceCall()          | number resolved and call announced                     |
//!
//! Context features, in order: presence of firstname, nickname, lastname,
//! phonetype and phonenumber (5); candidate count is 0, 1, more than 1
//! (3); requested type available, unavailable (2); looked up (1);
//! requested type has a fallback (1); user ignored the last question (1);
//! user gave information that was not asked for (1); a yes/no
//! confirmation is pending (1); the last user turn said yes, said no (2).

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_key_values, KeyValues};
use crate::engine::{ActionTemplate, DomainPack, LabeledDialog, LabeledTurn};
use crate::error::{Error, Result};
use crate::neural::ActionMask;
use crate::training::{Simulator, UserTurn};

pub use crate::training::{compute_return, EpisodeOutcome};

pub const ACTION_COUNT: usize = 14;
pub const CONTEXT_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DialerAction {
    Greet = 0,
    AskWho,
    AskFullName,
    DisambiguatePerson,
    AskPhoneType,
    ConfirmFallback,
    AnnounceCall,
    SorryNoSuchPerson,
    SorryNoSuchNumber,
    Goodbye,
    Rephrase,
    Ack,
    SavePhonetypeavail,
    PlaceCall,
}

impl DialerAction {
    pub const ALL: [DialerAction; ACTION_COUNT] = [
        DialerAction::Greet,
        DialerAction::AskWho,
        DialerAction::AskFullName,
        DialerAction::DisambiguatePerson,
        DialerAction::AskPhoneType,
        DialerAction::ConfirmFallback,
        DialerAction::AnnounceCall,
        DialerAction::SorryNoSuchPerson,
        DialerAction::SorryNoSuchNumber,
        DialerAction::Goodbye,
        DialerAction::Rephrase,
        DialerAction::Ack,
        DialerAction::SavePhonetypeavail,
        DialerAction::PlaceCall,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<DialerAction> {
        DialerAction::ALL.get(id).copied()
    }

    fn surface(self) -> &'static str {
        match self {
            DialerAction::Greet => "How can I help you?",
            DialerAction::AskWho => "Who would you like to call?",
            DialerAction::AskFullName => {
                "There's more than one person named <firstname>. Can you say their full name?"
            }
            DialerAction::DisambiguatePerson => "Do you mean <candidate>?",
            DialerAction::AskPhoneType => "Which phone: <phonetypes>?",
            DialerAction::ConfirmFallback => {
                "Sorry, I don't have a <phonetype> number for <fullname>. I only have a <fallback> phone. Do you want to call that number?"
            }
            DialerAction::AnnounceCall => "Calling <fullname>, <calltype>",
            DialerAction::SorryNoSuchPerson => "Sorry, I don't know anyone by that name.",
            DialerAction::SorryNoSuchNumber => "Oh, sorry about that.",
            DialerAction::Goodbye => "Goodbye.",
            DialerAction::Rephrase => "Sorry, I didn't catch that. Can you rephrase?",
            DialerAction::Ack => "Ok.",
            DialerAction::SavePhonetypeavail => "SavePhonetypeavail()",
            DialerAction::PlaceCall => "PlaceCall()",
        }
    }

    /// Questions whose answer the user may ignore.
    fn is_question(self) -> bool {
        matches!(
            self,
            DialerAction::AskWho
                | DialerAction::AskFullName
                | DialerAction::DisambiguatePerson
                | DialerAction::AskPhoneType
                | DialerAction::ConfirmFallback
        )
    }
}

/// The five entity types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Entity {
    Firstname,
    Nickname,
    Lastname,
    Phonetype,
    Phonenumber,
}

impl Entity {
    pub const ALL: [Entity; 5] = [
        Entity::Firstname,
        Entity::Nickname,
        Entity::Lastname,
        Entity::Phonetype,
        Entity::Phonenumber,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Entity::Firstname => "firstname",
            Entity::Nickname => "nickname",
            Entity::Lastname => "lastname",
            Entity::Phonetype => "phonetype",
            Entity::Phonenumber => "phonenumber",
        }
    }

    pub fn from_key(key: &str) -> Option<Entity> {
        Entity::ALL.into_iter().find(|e| e.key() == key)
    }
}

/// Canonical first names and their nicknames. Some nicknames belong to
/// more than one name.
pub const NICKNAMES: [(&str, &[&str]); 16] = [
    ("michael", &["mike"]),
    ("joseph", &["joe"]),
    ("robert", &["bob", "rob"]),
    ("william", &["bill", "will"]),
    ("james", &["jim"]),
    ("elizabeth", &["liz", "beth"]),
    ("katherine", &["kate"]),
    ("thomas", &["tom"]),
    ("daniel", &["dan"]),
    ("christopher", &["chris"]),
    ("christine", &["chris"]),
    ("samuel", &["sam"]),
    ("samantha", &["sam"]),
    ("alexander", &["alex"]),
    ("alexandra", &["alex"]),
    ("sally", &[]),
];

const PLAIN_FIRSTNAMES: [&str; 8] = ["maria", "david", "sarah", "wei", "priya", "omar", "lucy", "ivan"];

const LASTNAMES: [&str; 40] = [
    "adamson", "baker", "chen", "diaz", "evans", "fischer", "garcia", "hughes", "ito", "jones",
    "kim", "lopez", "miller", "nguyen", "olsen", "patel", "quinn", "rossi", "smith", "tanaka",
    "ueda", "vargas", "walker", "xu", "young", "zhang", "abbott", "brooks", "cole", "dunn",
    "ellis", "ford", "grant", "hale", "irwin", "jensen", "keller", "lane", "moss", "nash",
];

pub const PHONE_TYPES: [&str; 3] = ["mobile", "work", "home"];

/// Synonym → canonical phone type.
pub const PHONE_SYNONYMS: [(&str, &str); 3] = [("cell", "mobile"), ("office", "work"), ("house", "home")];

pub fn canonical_phonetype(word: &str) -> Option<&'static str> {
    PHONE_TYPES
        .into_iter()
        .find(|t| *t == word)
        .or_else(|| PHONE_SYNONYMS.iter().find(|(s, _)| *s == word).map(|(_, t)| *t))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Person {
    pub firstname: String,
    pub nicknames: Vec<String>,
    pub lastname: String,
    /// (canonical phone type, number)
    pub phones: Vec<(String, String)>,
}

impl Person {
    pub fn full_name(&self) -> String {
        format!("{} {}", capitalize(&self.firstname), capitalize(&self.lastname))
    }

    pub fn phone(&self, phonetype: &str) -> Option<&str> {
        self.phones
            .iter()
            .find(|(t, _)| t == phonetype)
            .map(|(_, n)| n.as_str())
    }

    pub fn phone_types(&self) -> Vec<&str> {
        self.phones.iter().map(|(t, _)| t.as_str()).collect()
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directory {
    pub people: Vec<Person>,
}

impl Directory {
    /// Canonical first names a surface form can refer to.
    pub fn firstname_options(&self, word: &str) -> Vec<String> {
        let mut out: BTreeSet<String> = BTreeSet::new();
        for p in &self.people {
            if p.firstname == word || p.nicknames.iter().any(|n| n == word) {
                out.insert(p.firstname.clone());
            }
        }
        out.into_iter().collect()
    }

    pub fn is_nickname(&self, word: &str) -> bool {
        self.people.iter().any(|p| p.nicknames.iter().any(|n| n == word))
            && !self.people.iter().any(|p| p.firstname == word)
    }

    pub fn is_lastname(&self, word: &str) -> bool {
        self.people.iter().any(|p| p.lastname == word)
    }

    /// `firstname|nick1,nick2|lastname|type:number,type:number` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.people {
            let phones: Vec<String> = p.phones.iter().map(|(t, n)| format!("{t}:{n}")).collect();
            let _ = writeln!(
                out,
                "{}|{}|{}|{}",
                p.firstname,
                p.nicknames.join(","),
                p.lastname,
                phones.join(",")
            );
        }
        out
    }

    pub fn parse(text: &str, name: &str) -> Result<Directory> {
        let mut people = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 4 {
                return Err(Error::parse(name, i + 1, "expected 4 `|`-separated fields"));
            }
            let mut phones = Vec::new();
            for entry in fields[3].split(',').filter(|e| !e.is_empty()) {
                let (t, n) = entry
                    .split_once(':')
                    .ok_or_else(|| Error::parse(name, i + 1, "phone entries are type:number"))?;
                phones.push((t.to_string(), n.to_string()));
            }
            if phones.is_empty() {
                return Err(Error::parse(name, i + 1, "a person needs at least one phone"));
            }
            people.push(Person {
                firstname: fields[0].to_string(),
                nicknames: fields[1]
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                lastname: fields[2].to_string(),
                phones,
            });
        }
        if people.len() < 2 {
            return Err(Error::parse(name, 0, "a directory needs at least two people"));
        }
        Ok(Directory { people })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Directory> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Directory::parse(&text, &path.display().to_string())
    }
}

fn nicknames_of(first: &str) -> Vec<String> {
    NICKNAMES
        .iter()
        .find(|(f, _)| *f == first)
        .map(|(_, n)| n.iter().map(|s| s.to_string()).collect())
        .unwrap_or_default()
}

/// A deterministic synthetic directory. First names are drawn from a pool
/// of 24, so names repeat, full names are unique, and every other person
/// has two phone types.
pub fn generate_directory(seed: u64, n_people: usize) -> Result<Directory> {
    if n_people < 2 {
        return Err(Error::Config("a directory needs at least two people".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let firsts: Vec<&str> = NICKNAMES
        .iter()
        .map(|(f, _)| *f)
        .chain(PLAIN_FIRSTNAMES)
        .collect();
    let mut used: BTreeSet<(String, String)> = BTreeSet::new();
    let mut people = Vec::with_capacity(n_people);
    for k in 0..n_people {
        let (first, last) = loop {
            // Every fifth person reuses the previous first name so that
            // ambiguity is guaranteed even in small directories.
            let first = if k % 5 == 1 {
                people
                    .last()
                    .map(|p: &Person| p.firstname.clone())
                    .unwrap_or_else(|| firsts.choose(&mut rng).unwrap().to_string())
            } else {
                firsts.choose(&mut rng).unwrap().to_string()
            };
            let last = LASTNAMES.choose(&mut rng).unwrap().to_string();
            if used.insert((first.clone(), last.clone())) {
                break (first, last);
            }
        };
        let count = 1 + (k % 2);
        let mut types: Vec<&str> = PHONE_TYPES.to_vec();
        let mut phones = Vec::new();
        for j in 0..count {
            let t = types.swap_remove(rng.random_range(0..types.len()));
            phones.push((t.to_string(), format!("555-{:04}", k * 3 + j)));
        }
        people.push(Person {
            nicknames: nicknames_of(&first),
            firstname: first,
            lastname: last,
            phones,
        });
    }
    Ok(Directory { people })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialerMentions {
    pub entities: Vec<(Entity, String)>,
    pub yes: bool,
    pub no: bool,
    pub bye: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Fallback,
    Disambiguate(usize),
}

/// Entity state of one dialing session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialerState {
    /// Canonical first names the user's first name or nickname may mean.
    pub firstnames: Vec<String>,
    pub nickname: Option<String>,
    pub lastname: Option<String>,
    pub phonetype: Option<String>,
    pub name_given: bool,
    pub candidates: Vec<usize>,
    pub excluded: BTreeSet<usize>,
    /// Person whose phone types were retrieved, and those types.
    pub looked_up: Option<(usize, Vec<String>)>,
    pub fallback_accepted: bool,
    pub fallback_declined: bool,
    pub announced: bool,
    pub last_action: Option<DialerAction>,
    pending: Option<Pending>,
    pub ignored: bool,
    pub extra_info: bool,
    pub said_yes: bool,
    pub said_no: bool,
}

impl DialerState {
    pub fn person(&self) -> Option<usize> {
        match self.candidates.as_slice() {
            [p] => Some(*p),
            _ => None,
        }
    }

    fn lookup_for_person(&self) -> Option<&[String]> {
        let p = self.person()?;
        match &self.looked_up {
            Some((q, types)) if *q == p => Some(types),
            _ => None,
        }
    }

    pub fn is_looked_up(&self) -> bool {
        self.lookup_for_person().is_some()
    }

    pub fn requested_available(&self) -> Option<bool> {
        let types = self.lookup_for_person()?;
        let t = self.phonetype.as_ref()?;
        Some(types.contains(t))
    }

    pub fn fallback_type(&self) -> Option<&str> {
        let types = self.lookup_for_person()?;
        let t = self.phonetype.as_deref();
        types.iter().map(String::as_str).find(|x| Some(*x) != t)
    }

    /// The phone type the call would use, when it is settled.
    pub fn call_type(&self) -> Option<String> {
        let types = self.lookup_for_person()?;
        match (&self.phonetype, self.requested_available()) {
            (Some(t), Some(true)) => Some(t.clone()),
            (Some(_), Some(false)) if self.fallback_accepted => self.fallback_type().map(str::to_string),
            (None, _) if types.len() == 1 => Some(types[0].clone()),
            _ => None,
        }
    }

    pub fn number_resolved(&self) -> bool {
        self.call_type().is_some()
    }

    pub fn confirmation_pending(&self) -> bool {
        self.pending.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DialerApiResult {
    PhoneTypes {
        person: usize,
        types: Vec<String>,
    },
    Call {
        person: Option<usize>,
        phonetype: Option<String>,
        number: Option<String>,
    },
    /// Dispatch of an action that cannot run in this state.
    Failed,
}

pub struct DialerDomain {
    directory: Arc<Directory>,
    templates: Vec<ActionTemplate>,
    use_mask: bool,
}

impl fmt::Debug for DialerDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DialerDomain")
            .field("people", &self.directory.people.len())
            .field("use_mask", &self.use_mask)
            .finish()
    }
}

impl DialerDomain {
    pub fn new(directory: Arc<Directory>) -> Self {
        let templates = DialerAction::ALL
            .iter()
            .map(|a| match a {
                DialerAction::SavePhonetypeavail => {
                    ActionTemplate::api(a.id(), a.surface(), "SavePhonetypeavail")
                }
                DialerAction::PlaceCall => ActionTemplate::api(a.id(), a.surface(), "PlaceCall"),
                _ => ActionTemplate::text(a.id(), a.surface()),
            })
            .collect();
        DialerDomain {
            directory,
            templates,
            use_mask: true,
        }
    }

    pub fn with_mask(mut self, use_mask: bool) -> Self {
        self.use_mask = use_mask;
        self
    }

    pub fn uses_mask(&self) -> bool {
        self.use_mask
    }

    pub fn directory(&self) -> &Arc<Directory> {
        &self.directory
    }

    /// Parses `key=value` events and bare directory words.
    pub fn parse_event(&self, text: &str) -> DialerMentions {
        let mut m = DialerMentions::default();
        for raw in text.split_whitespace() {
            let tok = raw.to_lowercase();
            let tok = tok.trim_matches(|c: char| ".,!?;:".contains(c));
            if let Some((k, v)) = tok.split_once('=') {
                if let Some(e) = Entity::from_key(k) {
                    m.entities.push((e, v.to_string()));
                }
                continue;
            }
            match tok {
                "yes" | "yeah" | "sure" => m.yes = true,
                "no" | "nope" => m.no = true,
                "bye" | "goodbye" => m.bye = true,
                _ if canonical_phonetype(tok).is_some() => {
                    m.entities.push((Entity::Phonetype, tok.to_string()))
                }
                _ if self.directory.is_nickname(tok) => m.entities.push((Entity::Nickname, tok.to_string())),
                _ if !self.directory.firstname_options(tok).is_empty() => {
                    m.entities.push((Entity::Firstname, tok.to_string()))
                }
                _ if self.directory.is_lastname(tok) => m.entities.push((Entity::Lastname, tok.to_string())),
                _ => {}
            }
        }
        m
    }

    /// Most recent mention wins; nicknames map to canonical first names.
    pub fn update_dialer_entities(&self, state: &mut DialerState, mentions: &DialerMentions) {
        let asked = state.last_action;
        state.said_yes = mentions.yes;
        state.said_no = mentions.no;
        state.extra_info = false;
        let mut name_changed = false;
        let mut type_changed = false;
        for (entity, value) in &mentions.entities {
            let expected = match asked {
                None | Some(DialerAction::Greet) | Some(DialerAction::AskWho) => {
                    matches!(entity, Entity::Firstname | Entity::Nickname | Entity::Lastname)
                }
                Some(DialerAction::AskFullName) => {
                    matches!(entity, Entity::Firstname | Entity::Nickname | Entity::Lastname)
                }
                Some(DialerAction::AskPhoneType) => *entity == Entity::Phonetype,
                _ => false,
            };
            if !expected {
                state.extra_info = true;
            }
            match entity {
                Entity::Firstname | Entity::Nickname => {
                    let options = self.directory.firstname_options(value);
                    let options = if options.is_empty() {
                        vec![value.clone()]
                    } else {
                        options
                    };
                    state.nickname = (*entity == Entity::Nickname
                        || self.directory.is_nickname(value))
                    .then(|| value.clone());
                    if state.firstnames != options {
                        state.firstnames = options;
                        name_changed = true;
                    }
                    state.name_given = true;
                }
                Entity::Lastname => {
                    if state.lastname.as_deref() != Some(value) {
                        state.lastname = Some(value.clone());
                        name_changed = true;
                    }
                    state.name_given = true;
                }
                Entity::Phonetype => {
                    let t = canonical_phonetype(value).unwrap_or(value).to_string();
                    if state.phonetype.as_deref() != Some(&t) {
                        state.phonetype = Some(t);
                        type_changed = true;
                    }
                }
                Entity::Phonenumber => {}
            }
        }
        if name_changed {
            state.excluded.clear();
            state.announced = false;
            state.fallback_accepted = false;
            state.fallback_declined = false;
            state.pending = None;
        }
        if type_changed {
            state.announced = false;
            state.fallback_accepted = false;
            state.fallback_declined = false;
            if state.pending == Some(Pending::Fallback) {
                state.pending = None;
            }
        }
        match state.pending {
            Some(Pending::Fallback) if mentions.yes => {
                state.fallback_accepted = true;
                state.pending = None;
            }
            Some(Pending::Fallback) if mentions.no => {
                state.fallback_declined = true;
                state.pending = None;
            }
            Some(Pending::Disambiguate(p)) if mentions.yes => {
                if let Some(person) = self.directory.people.get(p) {
                    state.firstnames = vec![person.firstname.clone()];
                    state.lastname = Some(person.lastname.clone());
                }
                state.pending = None;
            }
            Some(Pending::Disambiguate(p)) if mentions.no => {
                state.excluded.insert(p);
                state.pending = None;
            }
            _ => {}
        }
        state.ignored = asked.is_some_and(DialerAction::is_question)
            && mentions.entities.is_empty()
            && !mentions.yes
            && !mentions.no;
        state.candidates = self.candidates(state);
    }

    fn candidates(&self, state: &DialerState) -> Vec<usize> {
        if !state.name_given {
            return Vec::new();
        }
        self.directory
            .people
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                !state.excluded.contains(i)
                    && (state.firstnames.is_empty() || state.firstnames.contains(&p.firstname))
                    && state.lastname.as_ref().is_none_or(|l| *l == p.lastname)
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn permitted(&self, state: &DialerState, action: DialerAction) -> bool {
        use DialerAction::*;
        let n = state.candidates.len();
        match action {
            Greet => state.last_action.is_none(),
            AskWho => !state.name_given,
            AskFullName | DisambiguatePerson => n > 1,
            AskPhoneType => {
                state.phonetype.is_none()
                    && state.lookup_for_person().is_some_and(|t| t.len() > 1)
            }
            ConfirmFallback => {
                state.requested_available() == Some(false)
                    && !state.fallback_accepted
                    && !state.fallback_declined
            }
            AnnounceCall => state.number_resolved() && !state.announced,
            SorryNoSuchPerson => state.name_given && n == 0,
            SorryNoSuchNumber => state.requested_available() == Some(false),
            Goodbye | Rephrase | Ack => true,
            SavePhonetypeavail => state.person().is_some() && !state.is_looked_up(),
            PlaceCall => state.number_resolved() && state.announced,
        }
    }

    pub fn dialer_mask(&self, state: &DialerState) -> ActionMask {
        if !self.use_mask {
            return ActionMask::all(ACTION_COUNT);
        }
        ActionMask::new(
            DialerAction::ALL
                .iter()
                .map(|&a| self.permitted(state, a))
                .collect(),
        )
    }

    pub fn dialer_context(&self, state: &DialerState) -> Vec<f64> {
        let bit = |b: bool| if b { 1.0 } else { 0.0 };
        let n = state.candidates.len();
        let available = state.requested_available();
        vec![
            bit(!state.firstnames.is_empty()),
            bit(state.nickname.is_some()),
            bit(state.lastname.is_some()),
            bit(state.phonetype.is_some()),
            bit(state.number_resolved()),
            bit(state.name_given && n == 0),
            bit(n == 1),
            bit(n > 1),
            bit(available == Some(true)),
            bit(available == Some(false)),
            bit(state.is_looked_up()),
            bit(available == Some(false) && state.fallback_type().is_some()),
            bit(state.ignored),
            bit(state.extra_info),
            bit(state.confirmation_pending()),
            bit(state.said_yes),
            bit(state.said_no),
        ]
    }

    fn person(&self, i: usize) -> Option<&Person> {
        self.directory.people.get(i)
    }

    /// The action the hand-written policy takes in `state`.
    pub fn oracle_action(&self, state: &DialerState) -> DialerAction {
        use DialerAction::*;
        let Some(last) = state.last_action else {
            return Greet;
        };
        if state.fallback_declined {
            return if last == SorryNoSuchNumber { Goodbye } else { SorryNoSuchNumber };
        }
        if !state.name_given {
            return AskWho;
        }
        if state.ignored && last.is_question() && self.permitted(state, last) {
            return last;
        }
        match state.candidates.len() {
            0 => {
                return if last == SorryNoSuchPerson { Goodbye } else { SorryNoSuchPerson };
            }
            1 => {}
            _ => return AskFullName,
        }
        if !state.is_looked_up() {
            return SavePhonetypeavail;
        }
        if state.number_resolved() {
            return if state.announced { PlaceCall } else { AnnounceCall };
        }
        if state.requested_available() == Some(false) {
            return ConfirmFallback;
        }
        AskPhoneType
    }
}

impl DomainPack for DialerDomain {
    type State = DialerState;
    type Mentions = DialerMentions;
    type ApiResult = DialerApiResult;

    fn templates(&self) -> &[ActionTemplate] {
        &self.templates
    }

    fn context_len(&self) -> usize {
        CONTEXT_LEN
    }

    fn initial_state(&self) -> DialerState {
        DialerState::default()
    }

    fn extract_entities(&self, text: &str) -> DialerMentions {
        self.parse_event(text)
    }

    fn update_state(&self, state: &mut DialerState, mentions: &DialerMentions, _text: &str) {
        self.update_dialer_entities(state, mentions);
    }

    fn action_mask(&self, state: &DialerState) -> ActionMask {
        self.dialer_mask(state)
    }

    fn context_features(&self, state: &DialerState, _mentions: &DialerMentions) -> Vec<f64> {
        self.dialer_context(state)
    }

    /// Every slot has a neutral default so that actions taken without the
    /// mask still render.
    fn slot_value(&self, state: &DialerState, _action: usize, slot: &str) -> Option<String> {
        let person = state.person().and_then(|p| self.person(p));
        Some(match slot {
            "firstname" => state
                .nickname
                .clone()
                .or_else(|| state.firstnames.first().cloned())
                .map(|s| capitalize(&s))
                .unwrap_or_else(|| "that name".into()),
            "candidate" => state
                .candidates
                .first()
                .and_then(|&p| self.person(p))
                .map(Person::full_name)
                .unwrap_or_else(|| "someone".into()),
            "phonetypes" => state
                .lookup_for_person()
                .map(|t| t.join(" or "))
                .unwrap_or_else(|| "which one".into()),
            "phonetype" => state.phonetype.clone().unwrap_or_else(|| "that".into()),
            "fallback" => state.fallback_type().unwrap_or("other").to_string(),
            "fullname" => match person {
                Some(p) => match &state.nickname {
                    Some(n) if p.nicknames.contains(n) => {
                        format!("{} {}", capitalize(n), capitalize(&p.lastname))
                    }
                    _ => p.full_name(),
                },
                None => "that person".into(),
            },
            "calltype" => state.call_type().unwrap_or_else(|| "unknown".into()),
            _ => return None,
        })
    }

    fn record_action(&self, state: &mut DialerState, action: usize) {
        let Some(a) = DialerAction::from_id(action) else {
            return;
        };
        match a {
            DialerAction::DisambiguatePerson => {
                if let Some(&p) = state.candidates.first() {
                    state.pending = Some(Pending::Disambiguate(p));
                }
            }
            DialerAction::ConfirmFallback => state.pending = Some(Pending::Fallback),
            DialerAction::AnnounceCall => state.announced = state.number_resolved(),
            _ => {}
        }
        state.last_action = Some(a);
    }

    fn dispatch_api(&self, state: &DialerState, action: usize) -> Result<DialerApiResult> {
        Ok(match DialerAction::from_id(action) {
            Some(DialerAction::SavePhonetypeavail) => match state.person() {
                Some(p) => DialerApiResult::PhoneTypes {
                    person: p,
                    types: self.directory.people[p]
                        .phone_types()
                        .into_iter()
                        .map(str::to_string)
                        .collect(),
                },
                None => DialerApiResult::Failed,
            },
            Some(DialerAction::PlaceCall) => {
                let person = state.person();
                let phonetype = state.call_type();
                let number = match (person, &phonetype) {
                    (Some(p), Some(t)) => self.directory.people[p].phone(t).map(str::to_string),
                    _ => None,
                };
                DialerApiResult::Call {
                    person,
                    phonetype,
                    number,
                }
            }
            _ => {
                return Err(Error::ActionOutOfRange {
                    action,
                    action_count: ACTION_COUNT,
                })
            }
        })
    }

    fn absorb_api_result(&self, state: &mut DialerState, _action: usize, result: &DialerApiResult) -> Vec<f64> {
        if let DialerApiResult::PhoneTypes { person, types } = result {
            state.looked_up = Some((*person, types.clone()));
        }
        Vec::new()
    }
}

/// Hand-set behaviour probabilities of the simulated user.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorConfig {
    pub p_use_nickname: f64,
    pub p_out_of_coverage_name: f64,
    pub p_out_of_coverage_phonetype: f64,
    pub p_ignore_question: f64,
    pub p_extra_info: f64,
    pub p_give_up: f64,
    pub p_specify_phonetype_upfront: f64,
    pub p_answer_fullname: f64,
    pub p_confirm_yes: f64,
    pub p_restate: f64,
    pub max_turns: usize,
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            p_use_nickname: 0.3,
            p_out_of_coverage_name: 0.02,
            p_out_of_coverage_phonetype: 0.1,
            p_ignore_question: 0.1,
            p_extra_info: 0.1,
            p_give_up: 0.005,
            p_specify_phonetype_upfront: 0.5,
            p_answer_fullname: 0.3,
            p_confirm_yes: 0.8,
            p_restate: 0.5,
            max_turns: 20,
            seed: 0,
        }
    }
}

impl SimulatorConfig {
    /// Every adversarial behaviour switched off.
    pub fn cooperative() -> Self {
        SimulatorConfig {
            p_out_of_coverage_name: 0.0,
            p_out_of_coverage_phonetype: 0.0,
            p_ignore_question: 0.0,
            p_extra_info: 0.0,
            p_give_up: 0.0,
            ..SimulatorConfig::default()
        }
    }

    fn probabilities(&self) -> [(&'static str, f64); 10] {
        [
            ("p_use_nickname", self.p_use_nickname),
            ("p_out_of_coverage_name", self.p_out_of_coverage_name),
            ("p_out_of_coverage_phonetype", self.p_out_of_coverage_phonetype),
            ("p_ignore_question", self.p_ignore_question),
            ("p_extra_info", self.p_extra_info),
            ("p_give_up", self.p_give_up),
            ("p_specify_phonetype_upfront", self.p_specify_phonetype_upfront),
            ("p_answer_fullname", self.p_answer_fullname),
            ("p_confirm_yes", self.p_confirm_yes),
            ("p_restate", self.p_restate),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.probabilities() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.max_turns == 0 {
            return Err(Error::Config("max_turns must be positive".into()));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, p) in self.probabilities() {
            let _ = writeln!(out, "{name} = {p}");
        }
        let _ = writeln!(out, "max_turns = {}", self.max_turns);
        let _ = writeln!(out, "seed = {}", self.seed);
        out
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = SimulatorConfig::default();
        let fields: [(&str, &mut f64); 10] = [
            ("p_use_nickname", &mut c.p_use_nickname),
            ("p_out_of_coverage_name", &mut c.p_out_of_coverage_name),
            ("p_out_of_coverage_phonetype", &mut c.p_out_of_coverage_phonetype),
            ("p_ignore_question", &mut c.p_ignore_question),
            ("p_extra_info", &mut c.p_extra_info),
            ("p_give_up", &mut c.p_give_up),
            ("p_specify_phonetype_upfront", &mut c.p_specify_phonetype_upfront),
            ("p_answer_fullname", &mut c.p_answer_fullname),
            ("p_confirm_yes", &mut c.p_confirm_yes),
            ("p_restate", &mut c.p_restate),
        ];
        for (key, slot) in fields {
            if let Some(v) = kv.get_parsed::<f64>(key)? {
                *slot = v;
            }
        }
        if let Some(v) = kv.get_parsed::<usize>("max_turns")? {
            c.max_turns = v;
        }
        if let Some(v) = kv.get_parsed::<u64>("seed")? {
            c.seed = v;
        }
        let known: BTreeSet<&str> = c
            .probabilities()
            .iter()
            .map(|(k, _)| *k)
            .chain(["max_turns", "seed"])
            .collect();
        if let Some(unknown) = kv.keys().find(|k| !known.contains(k.as_str())) {
            return Err(Error::Config(format!("unknown simulator key `{unknown}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        SimulatorConfig::from_key_values(&parse_key_values(text, name)?)
    }
}

/// What the simulated user wants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    /// `None` for a name the directory does not cover.
    pub person: Option<usize>,
    pub firstname: String,
    pub lastname: String,
    /// Surface form used for the first name: the name or a nickname.
    pub spoken_first: String,
    pub phonetype: String,
    /// The person has no number of the wanted type.
    pub type_out_of_coverage: bool,
}

/// The simulated user of the dialer.
#[derive(Debug, Clone)]
pub struct UserSimulator {
    directory: Arc<Directory>,
    config: SimulatorConfig,
    goal: Option<Goal>,
    type_said: bool,
}

impl UserSimulator {
    pub fn new(directory: Arc<Directory>, config: SimulatorConfig) -> Self {
        UserSimulator {
            directory,
            config,
            goal: None,
            type_said: false,
        }
    }

    pub fn goal(&self) -> Option<&Goal> {
        self.goal.as_ref()
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    /// Draws a goal. Out-of-coverage names and phone types are drawn with
    /// their configured probabilities.
    pub fn sample_goal<R: Rng + ?Sized>(&self, rng: &mut R) -> Goal {
        let c = &self.config;
        if rng.random_bool(c.p_out_of_coverage_name) {
            return Goal {
                person: None,
                firstname: "zelda".into(),
                lastname: "quimby".into(),
                spoken_first: "zelda".into(),
                phonetype: PHONE_TYPES.choose(rng).unwrap().to_string(),
                type_out_of_coverage: false,
            };
        }
        let idx = rng.random_range(0..self.directory.people.len());
        let p = &self.directory.people[idx];
        let missing: Vec<&str> = PHONE_TYPES
            .into_iter()
            .filter(|t| p.phone(t).is_none())
            .collect();
        let oov_type = !missing.is_empty() && rng.random_bool(c.p_out_of_coverage_phonetype);
        let phonetype = if oov_type {
            missing.choose(rng).unwrap().to_string()
        } else {
            p.phone_types().choose(rng).unwrap().to_string()
        };
        let spoken_first = if !p.nicknames.is_empty() && rng.random_bool(c.p_use_nickname) {
            p.nicknames.choose(rng).unwrap().clone()
        } else {
            p.firstname.clone()
        };
        Goal {
            person: Some(idx),
            firstname: p.firstname.clone(),
            lastname: p.lastname.clone(),
            spoken_first,
            phonetype,
            type_out_of_coverage: oov_type,
        }
    }

    fn goal_ref(&self) -> &Goal {
        self.goal.as_ref().expect("begin() starts every episode")
    }

    fn say_type<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        self.type_said = true;
        let wanted = self.goal_ref().phonetype.clone();
        let synonym = PHONE_SYNONYMS.iter().find(|(_, t)| *t == wanted).map(|(s, _)| *s);
        match synonym {
            Some(s) if rng.random_bool(self.config.p_use_nickname) => format!("phonetype={s}"),
            _ => format!("phonetype={wanted}"),
        }
    }

    /// A call request. Unavailable phone types are always stated up front.
    fn request<R: Rng + ?Sized>(&mut self, full: bool, rng: &mut R) -> String {
        let goal = self.goal_ref().clone();
        let key = if goal.spoken_first != goal.firstname {
            "nickname"
        } else {
            "firstname"
        };
        let mut parts = vec![format!("{key}={}", goal.spoken_first)];
        if full {
            parts.push(format!("lastname={}", goal.lastname));
        }
        let mention_type = goal.type_out_of_coverage
            || self.type_said
            || rng.random_bool(self.config.p_specify_phonetype_upfront);
        if mention_type {
            parts.push(self.say_type(rng));
        }
        parts.join(" ")
    }
}

impl Simulator<DialerDomain> for UserSimulator {
    fn begin<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        self.goal = Some(self.sample_goal(rng));
        self.type_said = false;
        String::new()
    }

    fn react<R: Rng + ?Sized>(
        &mut self,
        _pack: &DialerDomain,
        state: &DialerState,
        action: usize,
        api_result: Option<&DialerApiResult>,
        rng: &mut R,
    ) -> UserTurn {
        use DialerAction::*;
        let Some(a) = DialerAction::from_id(action) else {
            return UserTurn::End { success: false };
        };
        match a {
            PlaceCall => {
                let goal = self.goal_ref();
                let success = match api_result {
                    Some(DialerApiResult::Call {
                        person: Some(p),
                        phonetype: Some(t),
                        number: Some(_),
                    }) => goal.person == Some(*p) && *t == goal.phonetype,
                    _ => false,
                };
                return UserTurn::End { success };
            }
            Goodbye => return UserTurn::End { success: false },
            SavePhonetypeavail => return UserTurn::Say(String::new()),
            _ => {}
        }
        let c = self.config.clone();
        if rng.random_bool(c.p_give_up) {
            return UserTurn::End { success: false };
        }
        if a.is_question() && rng.random_bool(c.p_ignore_question) {
            return UserTurn::Say(String::new());
        }
        let text = match a {
            Greet | AskWho => {
                let full = rng.random_bool(c.p_answer_fullname);
                self.request(full, rng)
            }
            AskFullName => {
                let mut t = self.request(true, rng);
                if !self.type_said && rng.random_bool(c.p_extra_info) {
                    t.push(' ');
                    t.push_str(&self.say_type(rng));
                }
                t
            }
            DisambiguatePerson => {
                let asked = state.candidates.first().copied();
                if asked.is_some() && asked == self.goal_ref().person {
                    "yes".into()
                } else {
                    "no".into()
                }
            }
            AskPhoneType => {
                let mut t = self.say_type(rng);
                if rng.random_bool(c.p_extra_info) {
                    t.push_str(&format!(" lastname={}", self.goal_ref().lastname));
                }
                t
            }
            ConfirmFallback => {
                if rng.random_bool(c.p_confirm_yes) {
                    if let (Some(fallback), Some(g)) = (state.fallback_type(), self.goal.as_mut()) {
                        g.phonetype = fallback.to_string();
                    }
                    "yes".into()
                } else {
                    "no".into()
                }
            }
            SorryNoSuchPerson | Rephrase => {
                if !rng.random_bool(c.p_restate) {
                    return UserTurn::End { success: false };
                }
                let full = rng.random_bool(c.p_answer_fullname);
                self.request(full, rng)
            }
            AnnounceCall | Ack | SorryNoSuchNumber => String::new(),
            Goodbye | PlaceCall | SavePhonetypeavail => unreachable!("handled above"),
        };
        UserTurn::Say(text)
    }

    fn max_turns(&self) -> usize {
        self.config.max_turns
    }
}

/// One episode of the oracle policy against the simulator, recorded as a
/// labeled dialog, plus whether the call succeeded.
pub fn oracle_episode<R: Rng + ?Sized>(
    domain: &DialerDomain,
    sim: &mut UserSimulator,
    rng: &mut R,
) -> Result<(LabeledDialog<DialerApiResult>, bool)> {
    let mut state = domain.initial_state();
    let mut user = sim.begin(rng);
    let mut turns = Vec::new();
    for _ in 0..sim.max_turns() {
        let mentions = domain.extract_entities(&user);
        domain.update_state(&mut state, &mentions, &user);
        let action = domain.oracle_action(&state);
        let id = action.id();
        let reference = domain.render(&state, id)?;
        domain.record_action(&mut state, id);
        let api_result = if domain.templates()[id].is_api() {
            let r = domain.dispatch_api(&state, id)?;
            domain.absorb_api_result(&mut state, id, &r);
            Some(r)
        } else {
            None
        };
        let reply = sim.react(domain, &state, id, api_result.as_ref(), rng);
        turns.push(LabeledTurn {
            user: std::mem::take(&mut user),
            label: id,
            reference,
            api_result,
        });
        match reply {
            UserTurn::Say(next) => user = next,
            UserTurn::End { success } => return Ok((LabeledDialog { turns }, success)),
        }
    }
    Ok((LabeledDialog { turns }, false))
}

/// `n` oracle dialogs, each against a freshly seeded simulator.
pub fn oracle_dialogs(
    domain: &DialerDomain,
    config: &SimulatorConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<LabeledDialog<DialerApiResult>>> {
    (0..n)
        .map(|i| {
            let s = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
            let mut sim = UserSimulator::new(domain.directory().clone(), config.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            oracle_episode(domain, &mut sim, &mut rng).map(|(d, _)| d)
        })
        .collect()
}

/// Size of the supervised seed set used for the dialer.
pub const SL_DIALOG_COUNT: usize = 21;

/// The 21 labeled dialogs used to initialize reinforcement learning:
/// oracle dialogs against the cooperative-leaning default simulator.
pub fn sl_dialogs(domain: &DialerDomain, seed: u64) -> Result<Vec<LabeledDialog<DialerApiResult>>> {
    oracle_dialogs(domain, &SimulatorConfig::default(), SL_DIALOG_COUNT, seed)
}
