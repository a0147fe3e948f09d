//! The restaurant domain of the bAbI dialog tasks.
//!
//! - [`data`]: the transcript and knowledge-base file formats
//! - [`lexicon`]: entity values, string-match extraction, templatization
//! - [`domain`]: the [`BabiDomain`] pack with its state, masks and context features
//! - [`synthetic`]: a Task5-style dialog generator
//!
//! ```
//! use hcn::babi::{BabiDomain, BabiOptions, BabiTask};
//! use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec};
//! use hcn::engine::DomainPack;
//!
//! let data = synthetic_task5(&SyntheticSpec { train: 60, test: 0, seed: 4 });
//! let (domain, labeled) =
//!     BabiDomain::build(BabiOptions::new(BabiTask::Task5), &data.train, &data.kb, &[]).unwrap();
//! assert_eq!(domain.action_count(), 16);
//! assert_eq!(labeled.len(), 60);
//! ```

pub mod data;
pub mod domain;
pub mod lexicon;
pub mod synthetic;

pub use data::{
    load_babi_dialogs, load_kb, parse_babi, parse_kb, serialize_babi, BabiDialog, BabiTurn, DbLine,
    DbRow, SILENCE,
};
pub use domain::{
    is_no_result_utterance, parse_inventory, restaurants_from_rows, write_inventory, BabiDomain,
    BabiOptions, BabiTask, EmptyQueryTable, EntityState, MaskRule, QueryKey, Restaurant,
    TemplateRole, UNK,
};
pub use lexicon::{templatize, Lexicon, Mention, Slot, SubstitutionContext, Templatized};

use std::path::{Path, PathBuf};

use crate::error::Result;

/// Standard file names of the bAbI dialog distribution.
pub fn task_files(dir: &Path, task: BabiTask) -> Option<TaskFiles> {
    let (prefix, kb) = match task {
        BabiTask::Task5 => ("dialog-babi-task5-full-dialogs", "dialog-babi-kb-all.txt"),
        BabiTask::Task6 => ("dialog-babi-task6-dstc2", "dialog-babi-task6-dstc2-kb.txt"),
        BabiTask::Custom => return None,
    };
    let test = match task {
        BabiTask::Task5 => format!("{prefix}-tst-OOV.txt"),
        _ => format!("{prefix}-tst.txt"),
    };
    Some(TaskFiles {
        train: dir.join(format!("{prefix}-trn.txt")),
        dev: dir.join(format!("{prefix}-dev.txt")),
        test: dir.join(test),
        kb: dir.join(kb),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFiles {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
    pub kb: PathBuf,
}

impl TaskFiles {
    /// Loads train and test dialogs plus the knowledge base when present.
    pub fn load(&self) -> Result<(Vec<BabiDialog>, Vec<BabiDialog>, Vec<DbRow>)> {
        let train = load_babi_dialogs(&self.train)?;
        let test = load_babi_dialogs(&self.test)?;
        let kb = if self.kb.exists() {
            load_kb(&self.kb)?
        } else {
            Vec::new()
        };
        Ok((train, test, kb))
    }
}
