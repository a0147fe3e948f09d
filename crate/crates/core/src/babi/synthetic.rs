//! A generator for dialogs in the Task5 style.
//!
//! The dialogs follow the bAbI Task5 script: greeting, a partial request,
//! questions for the missing slots, an `api_call`, an optional update,
//! database rows, offers in rating order until one is accepted, requests
//! for the phone number or address, and a closing. System turns use the
//! 16 Task5 system utterances. The out-of-vocabulary split draws cuisines
//! and locations that never occur in the training split.
//!
//! ```
//! use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec};
//!
//! let data = synthetic_task5(&SyntheticSpec { train: 5, test: 2, seed: 1 });
//! assert_eq!(data.train.len(), 5);
//! assert_eq!(data.train[0].turns[0].system, "hello what can i help you with today");
//! ```

use rand::seq::IndexedRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::{BabiDialog, BabiTurn, DbLine, DbRow};

pub const CUISINES: [&str; 10] = [
    "british", "cantonese", "french", "indian", "italian", "japanese", "korean", "spanish", "thai",
    "vietnamese",
];
pub const LOCATIONS: [&str; 10] = [
    "bangkok", "beijing", "bombay", "hanoi", "london", "madrid", "paris", "rome", "seoul", "tokyo",
];
pub const OOV_CUISINES: [&str; 5] = ["ethiopian", "mexican", "moroccan", "greek", "lebanese"];
pub const OOV_LOCATIONS: [&str; 5] = ["berlin", "dublin", "lima", "oslo", "sydney"];
pub const PARTY_SIZES: [&str; 4] = ["two", "four", "six", "eight"];
pub const PRICES: [&str; 3] = ["cheap", "moderate", "expensive"];

/// The 16 system utterances of Task5, with slot values abstracted.
pub const TASK5_TEMPLATES: [&str; 16] = [
    "hello what can i help you with today",
    "i'm on it",
    "any preference on a type of cuisine",
    "where should it be",
    "how many people would be in your party",
    "which price range are looking for",
    "ok let me look into some options for you",
    "api_call <cuisine> <location> <party_size> <price>",
    "sure is there anything else to update",
    "what do you think of this option: <name>",
    "sure let me find an other option for you",
    "great let me do the reservation",
    "here it is <name>_phone",
    "here it is <name>_address",
    "is there anything i can help you with",
    "you're welcome",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SyntheticTask5 {
    pub kb: Vec<DbRow>,
    pub train: Vec<BabiDialog>,
    pub test: Vec<BabiDialog>,
    pub test_oov: Vec<BabiDialog>,
}

fn restaurant_rows<R: Rng + ?Sized>(
    cuisine: &str,
    location: &str,
    price: &str,
    rng: &mut R,
) -> Vec<DbRow> {
    let mut stars: Vec<u32> = (1..=8).collect();
    let count = rng.random_range(1..=4usize);
    let mut rows = Vec::new();
    for _ in 0..count {
        let k = rng.random_range(0..stars.len());
        let rating = stars.swap_remove(k);
        let name = format!("resto_{location}_{price}_{cuisine}_{rating}stars");
        let party = *PARTY_SIZES.choose(rng).unwrap();
        for (attribute, value) in [
            ("R_phone", format!("{name}_phone")),
            ("R_cuisine", cuisine.to_string()),
            ("R_address", format!("{name}_address")),
            ("R_location", location.to_string()),
            ("R_number", party.to_string()),
            ("R_price", price.to_string()),
            ("R_rating", rating.to_string()),
        ] {
            rows.push(DbRow {
                restaurant: name.clone(),
                attribute: attribute.to_string(),
                value,
            });
        }
    }
    rows
}

/// One knowledge base over every cuisine, location and price combination.
pub fn synthetic_kb<R: Rng + ?Sized>(cuisines: &[&str], locations: &[&str], rng: &mut R) -> Vec<DbRow> {
    let mut kb = Vec::new();
    for c in cuisines {
        for l in locations {
            for p in PRICES {
                kb.extend(restaurant_rows(c, l, p, rng));
            }
        }
    }
    kb
}

struct Script<'r, R: Rng + ?Sized> {
    rng: &'r mut R,
    turns: Vec<BabiTurn>,
    pending_db: Vec<DbLine>,
}

impl<R: Rng + ?Sized> Script<'_, R> {
    fn say(&mut self, user: &str, system: impl Into<String>) {
        self.turns.push(BabiTurn {
            db: std::mem::take(&mut self.pending_db),
            user: user.to_string(),
            system: system.into(),
        });
    }

    fn pick(&mut self, options: &[&str]) -> String {
        options.choose(self.rng).unwrap().to_string()
    }
}

fn slot_phrase<R: Rng + ?Sized>(slot: usize, value: &str, rng: &mut R) -> String {
    let options: &[&str] = match slot {
        0 => &["with {} food", "{} food", "i love {} food"],
        1 => &["in {}", "{} please", "somewhere in {}"],
        2 => &["for {} people please", "we will be {}", "for {} people"],
        _ => &["in a {} price range please", "i am looking for a {} restaurant", "in a {} price range"],
    };
    options.choose(rng).unwrap().replace("{}", value)
}

fn request_part(slot: usize, value: &str) -> String {
    match slot {
        0 => format!("with {value} food"),
        1 => format!("in {value}"),
        2 => format!("for {value} people"),
        _ => format!("in a {value} price range"),
    }
}

fn update_phrase(slot: usize, value: &str) -> String {
    match slot {
        0 => format!("instead could it be with {value} food"),
        1 => format!("actually i would prefer in {value}"),
        2 => format!("instead could it be for {value} people"),
        _ => format!("actually i would prefer a {value} price range"),
    }
}

const ASKS: [&str; 4] = [
    "any preference on a type of cuisine",
    "where should it be",
    "how many people would be in your party",
    "which price range are looking for",
];

/// Generates one dialog whose goal is drawn from the given value lists.
pub fn generate_dialog<R: Rng + ?Sized>(
    kb: &[DbRow],
    cuisines: &[&str],
    locations: &[&str],
    rng: &mut R,
) -> BabiDialog {
    let mut goal = [
        cuisines.choose(rng).unwrap().to_string(),
        locations.choose(rng).unwrap().to_string(),
        PARTY_SIZES.choose(rng).unwrap().to_string(),
        PRICES.choose(rng).unwrap().to_string(),
    ];
    let mut s = Script {
        rng,
        turns: Vec::new(),
        pending_db: Vec::new(),
    };

    let hello = s.pick(&["hi", "hello", "good morning", "hey there"]);
    s.say(&hello, ASKS_HELLO);

    let given: Vec<bool> = (0..4).map(|_| s.rng.random_bool(0.5)).collect();
    let mut parts: Vec<String> = (0..4)
        .filter(|&k| given[k])
        .map(|k| request_part(k, &goal[k]))
        .collect();
    for i in (1..parts.len()).rev() {
        let j = s.rng.random_range(0..=i);
        parts.swap(i, j);
    }
    let opener = s.pick(&[
        "i'd like to book a table",
        "can you book a table",
        "may i have a table",
        "can you make a restaurant reservation",
    ]);
    let request = std::iter::once(opener).chain(parts).collect::<Vec<_>>().join(" ");
    s.say(&request, "i'm on it");

    let missing: Vec<usize> = (0..4).filter(|&k| !given[k]).collect();
    let mut user = String::new();
    for &k in &missing {
        s.say(&user, ASKS[k]);
        user = slot_phrase(k, &goal[k], s.rng);
    }
    s.say(&user, "ok let me look into some options for you");
    s.say("", format!("api_call {}", goal.join(" ")));

    if s.rng.random_bool(0.25) {
        let k = s.rng.random_range(0..4usize);
        let pool: &[&str] = match k {
            0 => cuisines,
            1 => locations,
            2 => &PARTY_SIZES,
            _ => &PRICES,
        };
        let alternatives: Vec<&str> = pool.iter().copied().filter(|v| *v != goal[k]).collect();
        goal[k] = alternatives.choose(s.rng).unwrap().to_string();
        s.say(&update_phrase(k, &goal[k]), "sure is there anything else to update");
        let no = s.pick(&["no", "no thanks", "no it's fine"]);
        s.say(&no, "ok let me look into some options for you");
        s.say("", format!("api_call {}", goal.join(" ")));
    }

    let rows: Vec<&DbRow> = kb
        .iter()
        .filter(|r| {
            let prefix = format!("resto_{}_{}_{}_", goal[1], goal[3], goal[0]);
            r.restaurant.starts_with(&prefix)
        })
        .collect();
    let mut names: Vec<(u32, String)> = Vec::new();
    for r in &rows {
        s.pending_db.push(DbLine::Row((*r).clone()));
        if r.attribute == "R_rating" {
            names.push((r.value.parse().unwrap_or(0), r.restaurant.clone()));
        }
    }
    names.sort_by_key(|n| std::cmp::Reverse(n.0));

    let rejections = s.rng.random_range(0..names.len().clamp(1, 4));
    let mut chosen = String::new();
    let mut user = String::new();
    for (i, (_, name)) in names.iter().enumerate().take(rejections + 1) {
        s.say(&user, format!("what do you think of this option: {name}"));
        chosen = name.clone();
        if i < rejections {
            let no = s.pick(&[
                "no this does not work for me",
                "do you have something else",
                "no i don't like that",
            ]);
            s.say(&no, "sure let me find an other option for you");
            user.clear();
        }
    }
    let yes = s.pick(&["that looks great", "it's perfect", "let's do it", "i love that"]);
    s.say(&yes, "great let me do the reservation");

    let mut infos: Vec<usize> = (0..2).filter(|_| s.rng.random_bool(0.5)).collect();
    if infos.len() == 2 && s.rng.random_bool(0.5) {
        infos.swap(0, 1);
    }
    for k in infos {
        if k == 0 {
            let q = s.pick(&[
                "may i have the phone number of the restaurant",
                "what is the phone number of the restaurant",
                "do you have its phone number",
            ]);
            s.say(&q, format!("here it is {chosen}_phone"));
        } else {
            let q = s.pick(&[
                "may i have the address of the restaurant",
                "can you provide the address",
                "do you have its address",
            ]);
            s.say(&q, format!("here it is {chosen}_address"));
        }
    }
    let thanks = s.pick(&["thanks", "thank you", "you rock"]);
    s.say(&thanks, "is there anything i can help you with");
    let bye = s.pick(&["no thank you", "no thanks"]);
    s.say(&bye, "you're welcome");

    BabiDialog {
        turns: s.turns,
        trailing_db: Vec::new(),
    }
}

const ASKS_HELLO: &str = "hello what can i help you with today";

/// A knowledge base over in-vocabulary and OOV values plus three splits.
pub fn synthetic_task5(spec: &SyntheticSpec) -> SyntheticTask5 {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let all_cuisines: Vec<&str> = CUISINES.iter().chain(&OOV_CUISINES).copied().collect();
    let all_locations: Vec<&str> = LOCATIONS.iter().chain(&OOV_LOCATIONS).copied().collect();
    let kb = synthetic_kb(&all_cuisines, &all_locations, &mut rng);
    let train = (0..spec.train)
        .map(|_| generate_dialog(&kb, &CUISINES, &LOCATIONS, &mut rng))
        .collect();
    let test = (0..spec.test)
        .map(|_| generate_dialog(&kb, &CUISINES, &LOCATIONS, &mut rng))
        .collect();
    let test_oov = (0..spec.test)
        .map(|_| generate_dialog(&kb, &OOV_CUISINES, &OOV_LOCATIONS, &mut rng))
        .collect();
    SyntheticTask5 {
        kb,
        train,
        test,
        test_oov,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let spec = SyntheticSpec {
            train: 3,
            test: 1,
            seed: 9,
        };
        let a = synthetic_task5(&spec);
        let b = synthetic_task5(&spec);
        assert_eq!(a.train, b.train);
        assert_eq!(a.kb, b.kb);
    }

    #[test]
    fn offers_follow_rating_order() {
        let data = synthetic_task5(&SyntheticSpec {
            train: 40,
            test: 0,
            seed: 3,
        });
        for d in &data.train {
            let offers: Vec<u32> = d
                .turns
                .iter()
                .filter_map(|t| t.system.strip_prefix("what do you think of this option: "))
                .map(|n| {
                    n.rsplit('_').next().unwrap().trim_end_matches("stars").parse().unwrap()
                })
                .collect();
            assert!(!offers.is_empty());
            assert!(offers.windows(2).all(|w| w[0] > w[1]), "{offers:?}");
        }
    }
}
