//! Reader and writer for the bAbI dialog text format.
//!
//! ```text
//! 1 good morning<TAB>hello what can i help you with today
//! 2 <SILENCE><TAB>api_call italian paris six cheap
//! 3 resto_paris_cheap_italian_8stars R_rating 8
//! 4 <SILENCE><TAB>what do you think of this option: resto_paris_cheap_italian_8stars
//!
//! 1 hi<TAB>...
//! ```
//!
//! Line numbers restart at 1 for every dialog and count database lines.
//! A blank line separates dialogs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const SILENCE: &str = "<SILENCE>";

/// One `restaurant attribute value` database line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbRow {
    pub restaurant: String,
    pub attribute: String,
    pub value: String,
}

/// A non-turn line in a transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DbLine {
    Row(DbRow),
    /// Anything else, such as `api_call no result`.
    Other(String),
}

impl DbLine {
    pub fn parse(text: &str) -> DbLine {
        let mut parts = text.splitn(3, ' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(r), Some(a), Some(v)) if a.starts_with("R_") => DbLine::Row(DbRow {
                restaurant: r.to_string(),
                attribute: a.to_string(),
                value: v.to_string(),
            }),
            _ => DbLine::Other(text.to_string()),
        }
    }

    pub fn text(&self) -> String {
        match self {
            DbLine::Row(r) => format!("{} {} {}", r.restaurant, r.attribute, r.value),
            DbLine::Other(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BabiTurn {
    /// Database lines that appeared just before this turn.
    pub db: Vec<DbLine>,
    /// Empty for `<SILENCE>`.
    pub user: String,
    pub system: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BabiDialog {
    pub turns: Vec<BabiTurn>,
    /// Database lines after the last turn.
    pub trailing_db: Vec<DbLine>,
}

impl BabiDialog {
    pub fn db_blocks(&self) -> Vec<&[DbLine]> {
        self.turns.iter().map(|t| t.db.as_slice()).collect()
    }

    /// Database lines that follow turn `t`.
    pub fn db_after(&self, t: usize) -> &[DbLine] {
        match self.turns.get(t + 1) {
            Some(next) => &next.db,
            None => &self.trailing_db,
        }
    }

    pub fn user_utterances(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.user.as_str())
    }
}

fn split_number(line: &str) -> Option<(usize, &str)> {
    let (num, rest) = line.split_once(' ')?;
    Some((num.parse().ok()?, rest))
}

pub fn parse_babi(text: &str, name: &str) -> Result<Vec<BabiDialog>> {
    let mut dialogs = Vec::new();
    let mut current: Option<BabiDialog> = None;
    let mut pending_db: Vec<DbLine> = Vec::new();
    let mut last_number = 0usize;

    let finish = |current: &mut Option<BabiDialog>,
                  pending: &mut Vec<DbLine>,
                  dialogs: &mut Vec<BabiDialog>,
                  line: usize|
     -> Result<()> {
        if let Some(mut d) = current.take() {
            d.trailing_db = std::mem::take(pending);
            dialogs.push(d);
        } else if !pending.is_empty() {
            return Err(Error::parse(name, line, "dialog has no turns"));
        }
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut current, &mut pending_db, &mut dialogs, line_no)?;
            last_number = 0;
            continue;
        }
        let (number, rest) = split_number(line)
            .ok_or_else(|| Error::parse(name, line_no, "line does not start with a line number"))?;
        if number == 1 && last_number != 0 {
            return Err(Error::parse(
                name,
                line_no,
                "new dialog starts without a blank separator line",
            ));
        }
        if number != last_number + 1 {
            return Err(Error::parse(
                name,
                line_no,
                format!("expected line number {}, found {number}", last_number + 1),
            ));
        }
        last_number = number;
        match rest.split_once('\t') {
            Some((user, system)) => {
                let user = if user == SILENCE { "" } else { user };
                current.get_or_insert_with(|| BabiDialog {
                    turns: Vec::new(),
                    trailing_db: Vec::new(),
                });
                current.as_mut().unwrap().turns.push(BabiTurn {
                    db: std::mem::take(&mut pending_db),
                    user: user.to_string(),
                    system: system.to_string(),
                });
            }
            None => {
                current.get_or_insert_with(|| BabiDialog {
                    turns: Vec::new(),
                    trailing_db: Vec::new(),
                });
                pending_db.push(DbLine::parse(rest));
            }
        }
    }
    let end = text.lines().count() + 1;
    finish(&mut current, &mut pending_db, &mut dialogs, end)?;
    if let Some(bad) = dialogs.iter().position(|d| d.turns.is_empty()) {
        return Err(Error::parse(name, 0, format!("dialog {bad} has no turns")));
    }
    Ok(dialogs)
}

pub fn load_babi_dialogs(path: &Path) -> Result<Vec<BabiDialog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_babi(&text, &path.display().to_string())
}

/// Inverse of [`parse_babi`] for well-formed input.
pub fn serialize_babi(dialogs: &[BabiDialog]) -> String {
    let mut out = String::new();
    for (k, d) in dialogs.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let mut n = 0;
        for turn in &d.turns {
            for db in &turn.db {
                n += 1;
                let _ = writeln!(out, "{n} {}", db.text());
            }
            n += 1;
            let user = if turn.user.is_empty() { SILENCE } else { &turn.user };
            let _ = writeln!(out, "{n} {user}\t{}", turn.system);
        }
        for db in &d.trailing_db {
            n += 1;
            let _ = writeln!(out, "{n} {}", db.text());
        }
    }
    out
}

/// Knowledge-base file: `[N] restaurant R_attribute value` per line.
pub fn parse_kb(text: &str, name: &str) -> Result<Vec<DbRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let body = match split_number(line) {
            Some((_, rest)) => rest,
            None => line,
        };
        match DbLine::parse(body) {
            DbLine::Row(r) => rows.push(r),
            DbLine::Other(_) => {
                return Err(Error::parse(
                    name,
                    i + 1,
                    "expected `restaurant R_attribute value`",
                ))
            }
        }
    }
    Ok(rows)
}

pub fn load_kb(path: &Path) -> Result<Vec<DbRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_kb(&text, &path.display().to_string())
}
