use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hcn::config::KeyValues;
use hcn::eval::DEFAULT_SIZES;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Babi5,
    Babi6,
    Dialer,
    Custom,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "babi5" => Ok(Task::Babi5),
            "babi6" => Ok(Task::Babi6),
            "dialer" => Ok(Task::Dialer),
            "custom" => Ok(Task::Custom),
            other => Err(format!("unknown task `{other}` (babi5, babi6, dialer, custom)")),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Babi5 => "babi5",
            Task::Babi6 => "babi6",
            Task::Dialer => "dialer",
            Task::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
    Curve,
    Rl,
    Chat,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Eval => "eval",
            Mode::Curve => "curve",
            Mode::Rl => "rl",
            Mode::Chat => "chat",
        })
    }
}

/// Everything a run needs. Written next to the outputs as `run_config.txt`
/// so that a run can be repeated with `--config`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub mode: Mode,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub out: PathBuf,
    pub embed: bool,
    pub mask: bool,
    pub seed: u64,
    pub epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub runs: Option<usize>,
    pub sizes: Vec<usize>,
    pub rl_dialogs: usize,
    pub sl_init: usize,
    pub interleave: usize,
    pub eval_episodes: usize,
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub data: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub embed: Option<bool>,
    pub mask: Option<bool>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub hidden: Option<usize>,
    pub runs: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub rl_dialogs: Option<usize>,
    pub sl_init: Option<usize>,
    pub interleave: Option<usize>,
    pub eval_episodes: Option<usize>,
}

fn parse_sizes(raw: &str) -> Result<Vec<usize>, String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad size `{s}`")))
        .collect()
}

fn get<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>, String> {
    kv.get_parsed(key).map_err(|e| e.to_string())
}

const KEYS: [&str; 16] = [
    "task",
    "data",
    "embeddings",
    "ckpt",
    "out",
    "embed",
    "mask",
    "seed",
    "epochs",
    "hidden",
    "runs",
    "sizes",
    "rl_dialogs",
    "sl_init",
    "interleave",
    "eval_episodes",
];

impl Overrides {
    /// Reads a config file's values. `mode` is informational and ignored.
    pub fn from_key_values(kv: &KeyValues) -> Result<Overrides, String> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str()) && *k != "mode") {
            return Err(format!("unknown config key `{k}`"));
        }
        Ok(Overrides {
            task: kv.get("task").map(str::parse).transpose()?,
            data: kv.get("data").map(PathBuf::from),
            embeddings: kv.get("embeddings").map(PathBuf::from),
            ckpt: kv.get("ckpt").map(PathBuf::from),
            out: kv.get("out").map(PathBuf::from),
            embed: get(kv, "embed")?,
            mask: get(kv, "mask")?,
            seed: get(kv, "seed")?,
            epochs: get(kv, "epochs")?,
            hidden: get(kv, "hidden")?,
            runs: get(kv, "runs")?,
            sizes: kv.get("sizes").map(parse_sizes).transpose()?,
            rl_dialogs: get(kv, "rl_dialogs")?,
            sl_init: get(kv, "sl_init")?,
            interleave: get(kv, "interleave")?,
            eval_episodes: get(kv, "eval_episodes")?,
        })
    }

    /// Values present in `self` win over `base`.
    pub fn over(self, base: Overrides) -> Overrides {
        Overrides {
            task: self.task.or(base.task),
            data: self.data.or(base.data),
            embeddings: self.embeddings.or(base.embeddings),
            ckpt: self.ckpt.or(base.ckpt),
            out: self.out.or(base.out),
            embed: self.embed.or(base.embed),
            mask: self.mask.or(base.mask),
            seed: self.seed.or(base.seed),
            epochs: self.epochs.or(base.epochs),
            hidden: self.hidden.or(base.hidden),
            runs: self.runs.or(base.runs),
            sizes: self.sizes.or(base.sizes),
            rl_dialogs: self.rl_dialogs.or(base.rl_dialogs),
            sl_init: self.sl_init.or(base.sl_init),
            interleave: self.interleave.or(base.interleave),
            eval_episodes: self.eval_episodes.or(base.eval_episodes),
        }
    }
}

impl RunConfig {
    /// Fills defaults and checks flag combinations.
    pub fn resolve(mode: Mode, o: Overrides) -> Result<RunConfig, String> {
        let task = o.task.ok_or("--task is required")?;
        let embed = o.embed.unwrap_or(false);
        if task == Task::Dialer && embed {
            return Err("the dialer has no text features; --embed is not allowed".into());
        }
        if embed && o.embeddings.is_none() {
            return Err("--embed needs --embeddings <file>".into());
        }
        if matches!(mode, Mode::Rl) && task != Task::Dialer {
            return Err("rl mode needs a simulator; only --task dialer has one".into());
        }
        if matches!(mode, Mode::Chat) && o.ckpt.is_none() {
            return Err("chat needs --ckpt".into());
        }
        if matches!(mode, Mode::Eval) && o.ckpt.is_none() && !is_ckpt_path(o.out.as_deref()) {
            return Err("eval needs --ckpt".into());
        }
        Ok(RunConfig {
            task,
            mode,
            data: o.data,
            embeddings: o.embeddings,
            ckpt: o.ckpt,
            out: o.out.unwrap_or_else(|| PathBuf::from(".")),
            embed,
            mask: o.mask.unwrap_or(task != Task::Custom),
            seed: o.seed.unwrap_or(0),
            epochs: o.epochs,
            hidden: o.hidden,
            runs: o.runs,
            sizes: o.sizes.unwrap_or_default(),
            rl_dialogs: o.rl_dialogs.unwrap_or(1000),
            sl_init: o.sl_init.unwrap_or(10),
            interleave: o.interleave.unwrap_or(0),
            eval_episodes: o.eval_episodes.unwrap_or(500),
        })
    }

    /// Directory receiving CSV outputs. `--out m.ckpt` names the checkpoint
    /// and puts the other outputs beside it.
    pub fn out_dir(&self) -> PathBuf {
        if is_ckpt_path(Some(&self.out)) {
            match self.out.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            }
        } else {
            self.out.clone()
        }
    }

    /// Checkpoint written by `train`, or read by other modes.
    pub fn ckpt_path(&self) -> PathBuf {
        if let Some(c) = &self.ckpt {
            c.clone()
        } else if is_ckpt_path(Some(&self.out)) {
            self.out.clone()
        } else {
            self.out.join("model.ckpt")
        }
    }

    pub fn default_sizes(&self, train_len: usize) -> Vec<usize> {
        if !self.sizes.is_empty() {
            return self.sizes.clone();
        }
        let mut s: Vec<usize> = DEFAULT_SIZES.into_iter().filter(|&x| x < train_len).collect();
        s.push(train_len);
        s
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.insert("task", self.task);
        kv.insert("mode", self.mode);
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        if let Some(d) = path(&self.data) {
            kv.insert("data", d);
        }
        if let Some(e) = path(&self.embeddings) {
            kv.insert("embeddings", e);
        }
        if let Some(c) = path(&self.ckpt) {
            kv.insert("ckpt", c);
        }
        kv.insert("out", self.out.display());
        kv.insert("embed", self.embed);
        kv.insert("mask", self.mask);
        kv.insert("seed", self.seed);
        if let Some(e) = self.epochs {
            kv.insert("epochs", e);
        }
        if let Some(h) = self.hidden {
            kv.insert("hidden", h);
        }
        if let Some(r) = self.runs {
            kv.insert("runs", r);
        }
        if !self.sizes.is_empty() {
            let s: Vec<String> = self.sizes.iter().map(usize::to_string).collect();
            kv.insert("sizes", s.join(","));
        }
        kv.insert("rl_dialogs", self.rl_dialogs);
        kv.insert("sl_init", self.sl_init);
        kv.insert("interleave", self.interleave);
        kv.insert("eval_episodes", self.eval_episodes);
        kv
    }
}

fn is_ckpt_path(p: Option<&Path>) -> bool {
    p.and_then(Path::extension).is_some_and(|e| e == "ckpt")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let kv = hcn::config::parse_key_values("task = babi6\nseed = 4\nhidden = 64\n", "cfg").unwrap();
        let file = Overrides::from_key_values(&kv).unwrap();
        let flags = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(Mode::Train, flags.over(file)).unwrap();
        assert_eq!(rc.task, Task::Babi6);
        assert_eq!(rc.seed, 9);
        assert_eq!(rc.hidden, Some(64));
    }

    #[test]
    fn round_trip() {
        let o = Overrides {
            task: Some(Task::Dialer),
            sizes: Some(vec![1, 5]),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(Mode::Rl, o).unwrap();
        let back = Overrides::from_key_values(&rc.to_key_values()).unwrap();
        assert_eq!(RunConfig::resolve(Mode::Rl, back).unwrap(), rc);
    }

    #[test]
    fn invalid_combinations() {
        let dialer_embed = Overrides {
            task: Some(Task::Dialer),
            embed: Some(true),
            embeddings: Some("e.txt".into()),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(Mode::Train, dialer_embed).is_err());
        let babi_rl = Overrides {
            task: Some(Task::Babi5),
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(Mode::Rl, babi_rl).is_err());
        assert!(RunConfig::resolve(Mode::Train, Overrides::default()).is_err());
    }

    #[test]
    fn ckpt_out_paths() {
        let o = Overrides {
            task: Some(Task::Babi5),
            out: Some("runs/m.ckpt".into()),
            ..Overrides::default()
        };
        let rc = RunConfig::resolve(Mode::Train, o).unwrap();
        assert_eq!(rc.ckpt_path(), PathBuf::from("runs/m.ckpt"));
        assert_eq!(rc.out_dir(), PathBuf::from("runs"));
    }
}
