use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hcn::babi::{
    load_babi_dialogs, load_kb, task_files, write_inventory, BabiDialog, BabiDomain, BabiOptions,
    BabiTask, DbLine,
};
use hcn::config::KeyValues;
use hcn::dialer::{
    generate_directory, oracle_dialogs, DialerAction, DialerDomain, Directory, SimulatorConfig,
    UserSimulator, ACTION_COUNT, CONTEXT_LEN,
};
use hcn::engine::{ActionKind, DomainPack, LabeledDialog, SelectionMode, Session};
use hcn::eval::{curve_csv, learning_curve, rl_curve_csv, rl_success_rate, turn_and_dialog_accuracy};
use hcn::features::{EmbeddingTable, Featurizer, Vocabulary};
use hcn::metrics::{MetricsRow, HEADER};
use hcn::neural::{init_parameters, load_checkpoint, save_checkpoint, LstmParameters};
use hcn::training::{
    run_rl, train_supervised, InterleaveSchedule, RlConfig, SlConfig, GAMMA,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::run_config::{Mode, RunConfig, Task};

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Training(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Training(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Training(m) => write!(f, "training failed: {m}"),
        }
    }
}

impl From<hcn::Error> for CliError {
    fn from(e: hcn::Error) -> Self {
        use hcn::Error::*;
        match e {
            Config(m) => CliError::Usage(m),
            ReconstructionFailed { .. } | NonFinite { .. } | MaskedLabel { .. } | ZeroProbability { .. } => {
                CliError::Training(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Writes to a temporary sibling, then renames into place.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn prepare_out(rc: &RunConfig) -> CliResult<PathBuf> {
    let dir = rc.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    write_atomic(&dir.join("run_config.txt"), &rc.to_key_values().to_text())?;
    Ok(dir)
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

fn sl_config(rc: &RunConfig) -> SlConfig {
    let base = if rc.task == Task::Dialer {
        SlConfig::dialer()
    } else {
        SlConfig::babi()
    };
    let mut c = SlConfig {
        seed: rc.seed,
        hidden: rc.hidden.unwrap_or(base.hidden),
        ..base
    };
    if let Some(e) = rc.epochs {
        c.epochs = e;
        c.epoch_cap = e;
    }
    c
}

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} does not exist", path.display())))
    }
}

/// A bAbI-format task loaded and turned into a domain.
struct BabiSetup {
    domain: BabiDomain,
    eval_domain: BabiDomain,
    featurizer: Featurizer,
    train: Vec<LabeledDialog<Vec<DbLine>>>,
    test: Vec<BabiDialog>,
}

fn load_babi(rc: &RunConfig) -> CliResult<BabiSetup> {
    let data = rc
        .data
        .clone()
        .or_else(|| std::env::var_os("HCN_BABI_DIR").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--data <dir> is required (or set HCN_BABI_DIR)".into()))?;
    let task = match rc.task {
        Task::Babi5 => BabiTask::Task5,
        Task::Babi6 => BabiTask::Task6,
        _ => BabiTask::Custom,
    };
    let (train, test, kb) = match task_files(&data, task) {
        Some(files) => {
            require(&files.train)?;
            require(&files.test)?;
            files.load()?
        }
        None => {
            let train_path = data.join("train.txt");
            require(&train_path)?;
            let test_path = data.join("test.txt");
            let kb_path = data.join("kb.txt");
            let test = if test_path.exists() {
                load_babi_dialogs(&test_path)?
            } else {
                Vec::new()
            };
            let kb = if kb_path.exists() { load_kb(&kb_path)? } else { Vec::new() };
            (load_babi_dialogs(&train_path)?, test, kb)
        }
    };
    let options = BabiOptions::new(task).with_mask(rc.mask);
    let (domain, labeled) = BabiDomain::build(options, &train, &kb, &test)?;
    let mut eval_domain = domain.clone();
    eval_domain.set_test_mode(true);
    let vocab = Vocabulary::build(train.iter().flat_map(|d| d.turns.iter().map(|t| t.user.as_str())));
    let embeddings = match (&rc.embeddings, rc.embed) {
        (Some(path), true) => Some(EmbeddingTable::load(path)?),
        _ => None,
    };
    log::info!(
        "{}: {} train / {} test dialogs, {} actions, vocabulary {}",
        rc.task,
        train.len(),
        test.len(),
        domain.action_count(),
        vocab.len()
    );
    Ok(BabiSetup {
        domain,
        eval_domain,
        featurizer: Featurizer {
            vocab: Some(vocab),
            embeddings,
        },
        train: labeled,
        test,
    })
}

struct DialerSetup {
    domain: DialerDomain,
    sim: SimulatorConfig,
}

fn load_dialer(rc: &RunConfig) -> CliResult<DialerSetup> {
    let (directory, sim) = match &rc.data {
        Some(dir) => {
            let d = dir.join("directory.txt");
            require(&d)?;
            let s = dir.join("simulator.txt");
            let sim = if s.exists() {
                SimulatorConfig::from_key_values(&KeyValues::load(&s)?)?
            } else {
                SimulatorConfig::default()
            };
            (Directory::load(&d)?, sim)
        }
        None => (generate_directory(rc.seed, 50)?, SimulatorConfig::default()),
    };
    Ok(DialerSetup {
        domain: DialerDomain::new(Arc::new(directory)).with_mask(rc.mask),
        sim,
    })
}

fn make_sim(setup: &DialerSetup) -> impl Fn(u64) -> UserSimulator + Sync + '_ {
    move |seed| {
        UserSimulator::new(
            setup.domain.directory().clone(),
            SimulatorConfig {
                seed,
                ..setup.sim.clone()
            },
        )
    }
}

fn load_params(rc: &RunConfig) -> CliResult<LstmParameters> {
    let path = rc.ckpt_path();
    require(&path)?;
    Ok(load_checkpoint(&path)?.0)
}

pub fn run(rc: &RunConfig) -> CliResult<()> {
    match (rc.mode, rc.task) {
        (Mode::Train, Task::Dialer) => train_dialer(rc),
        (Mode::Train, _) => train_babi(rc),
        (Mode::Eval, Task::Dialer) => eval_dialer(rc),
        (Mode::Eval, _) => eval_babi(rc),
        (Mode::Curve, Task::Dialer) => curve_dialer(rc),
        (Mode::Curve, _) => curve_babi(rc),
        (Mode::Rl, Task::Dialer) => rl_dialer(rc),
        (Mode::Rl, _) => Err(CliError::Usage("rl mode needs --task dialer".into())),
        (Mode::Chat, Task::Dialer) => chat_dialer(rc),
        (Mode::Chat, _) => chat_babi(rc),
    }
}

fn train_babi(rc: &RunConfig) -> CliResult<()> {
    let setup = load_babi(rc)?;
    let out = prepare_out(rc)?;
    let mut rows = Vec::new();
    let params = train_supervised(&setup.train, &setup.domain, &setup.featurizer, &sl_config(rc), &mut rows)?;
    let ckpt = rc.ckpt_path();
    save_checkpoint(&ckpt, &params, None)?;
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write_atomic(&out.join("inventory.tsv"), &write_inventory(setup.domain.templates()))?;
    let last = rows.last();
    println!(
        "trained {} on {} dialogs: {} actions, {} epochs, train accuracy {:.4}, checkpoint {}",
        rc.task,
        setup.train.len(),
        setup.domain.action_count(),
        rows.len(),
        last.and_then(|r| r.score).unwrap_or(0.0),
        ckpt.display()
    );
    Ok(())
}

fn eval_babi(rc: &RunConfig) -> CliResult<()> {
    let setup = load_babi(rc)?;
    let params = load_params(rc)?;
    let out = prepare_out(rc)?;
    let labeled = setup.eval_domain.label_dialogs(&setup.test);
    let report = turn_and_dialog_accuracy(&params, &setup.eval_domain, &setup.featurizer, &labeled)?;
    write_atomic(&out.join("report.csv"), &report.to_csv())?;
    println!(
        "{}: turn accuracy {:.4}, dialog accuracy {:.4} over {} dialogs",
        rc.task,
        report.turn_accuracy,
        report.dialog_accuracy,
        labeled.len()
    );
    Ok(())
}

fn curve_babi(rc: &RunConfig) -> CliResult<()> {
    let setup = load_babi(rc)?;
    let out = prepare_out(rc)?;
    let test = setup.eval_domain.label_dialogs(&setup.test);
    let sizes = rc.default_sizes(setup.train.len());
    let points = learning_curve(
        &setup.train,
        &test,
        &setup.domain,
        &setup.eval_domain,
        &setup.featurizer,
        &sizes,
        rc.runs.unwrap_or(5),
        &SlConfig {
            shuffle: true,
            ..sl_config(rc)
        },
    )?;
    write_atomic(&out.join("curve.csv"), &curve_csv(&points))?;
    for p in &points {
        println!("{}\t{:.4}", p.size, p.mean());
    }
    Ok(())
}

fn train_dialer(rc: &RunConfig) -> CliResult<()> {
    let setup = load_dialer(rc)?;
    let out = prepare_out(rc)?;
    let dialogs = oracle_dialogs(&setup.domain, &setup.sim, rc.sl_init.max(1), rc.seed)?;
    let mut rows = Vec::new();
    let params = train_supervised(&dialogs, &setup.domain, &Featurizer::none(), &sl_config(rc), &mut rows)?;
    let ckpt = rc.ckpt_path();
    save_checkpoint(&ckpt, &params, None)?;
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write_atomic(&out.join("directory.txt"), &setup.domain.directory().to_text())?;
    write_atomic(&out.join("simulator.txt"), &setup.sim.to_key_values())?;
    println!(
        "trained dialer on {} oracle dialogs in {} epochs, checkpoint {}",
        dialogs.len(),
        rows.len(),
        ckpt.display()
    );
    Ok(())
}

fn eval_dialer(rc: &RunConfig) -> CliResult<()> {
    let setup = load_dialer(rc)?;
    let params = load_params(rc)?;
    let out = prepare_out(rc)?;
    let rate = rl_success_rate(
        &params,
        &setup.domain,
        &Featurizer::none(),
        &make_sim(&setup),
        rc.eval_episodes,
        rc.seed,
    )?;
    let report = format!(
        "metric,value\nsuccess_rate,{rate:.6}\nepisodes,{}\n",
        rc.eval_episodes
    );
    write_atomic(&out.join("report.csv"), &report)?;
    println!("dialer: success rate {rate:.4} over {} episodes", rc.eval_episodes);
    Ok(())
}

fn curve_dialer(rc: &RunConfig) -> CliResult<()> {
    let setup = load_dialer(rc)?;
    let out = prepare_out(rc)?;
    let sizes = if rc.sizes.is_empty() {
        vec![1, 2, 5, 10, 20]
    } else {
        rc.sizes.clone()
    };
    let max = sizes.iter().copied().max().unwrap_or(1);
    let train = oracle_dialogs(&setup.domain, &setup.sim, max, rc.seed)?;
    let test = oracle_dialogs(&setup.domain, &setup.sim, 100, rc.seed.wrapping_add(1 << 32))?;
    let points = learning_curve(
        &train,
        &test,
        &setup.domain,
        &setup.domain,
        &Featurizer::none(),
        &sizes,
        rc.runs.unwrap_or(5),
        &sl_config(rc),
    )?;
    write_atomic(&out.join("curve.csv"), &curve_csv(&points))?;
    for p in &points {
        println!("{}\t{:.4}", p.size, p.mean());
    }
    Ok(())
}

fn rl_dialer(rc: &RunConfig) -> CliResult<()> {
    let setup = load_dialer(rc)?;
    let out = prepare_out(rc)?;
    let featurizer = Featurizer::none();
    let runs = rc.runs.unwrap_or(10);
    let mut curves = Vec::with_capacity(runs);
    let mut rows = Vec::new();
    let mut first_params = None;
    for run in 0..runs {
        let seed = rc.seed.wrapping_add(run as u64);
        let sl_set = oracle_dialogs(&setup.domain, &setup.sim, rc.sl_init, seed)?;
        let config = sl_config(&RunConfig { seed, ..rc.clone() });
        let params = if sl_set.is_empty() {
            init_parameters(CONTEXT_LEN, ACTION_COUNT, config.hidden, seed)?
        } else {
            train_supervised(&sl_set, &setup.domain, &featurizer, &config, &mut rows)?
        };
        let schedule = (rc.interleave > 0)
            .then(|| oracle_dialogs(&setup.domain, &setup.sim, rc.interleave, seed.wrapping_add(1 << 40)))
            .transpose()?
            .map(|dialogs| InterleaveSchedule { dialogs, every: 100 });
        let rl = RlConfig {
            gamma: GAMMA,
            baseline_window: 100,
            dialogs: rc.rl_dialogs,
            eval_points: RlConfig::default_eval_points(rc.rl_dialogs),
            eval_episodes: rc.eval_episodes,
            consistency_check: !sl_set.is_empty() || schedule.is_some(),
            consistency_epoch_cap: 200,
            seed,
        };
        let result = run_rl(
            &rl,
            make_sim(&setup),
            &setup.domain,
            &featurizer,
            params,
            &sl_set,
            schedule.as_ref(),
            &mut rows,
        )?;
        if let Some(&(d, r)) = result.curve.last() {
            println!("run {run}: success rate {r:.4} after {d} dialogs");
        }
        curves.push(result.curve);
        first_params.get_or_insert(result.params);
    }
    write_atomic(&out.join("rl_curve.csv"), &rl_curve_csv(&curves))?;
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    if let Some(p) = first_params {
        save_checkpoint(&rc.ckpt_path(), &p, None)?;
    }
    Ok(())
}

fn chat_babi(rc: &RunConfig) -> CliResult<()> {
    let setup = load_babi(rc)?;
    let params = load_params(rc)?;
    let mut session = Session::new(&setup.eval_domain, &params, &setup.featurizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    println!("Type an utterance; an empty line means silence. `quit` exits.");
    for line in std::io::stdin().lock().lines() {
        let line = line.map_err(|e| CliError::Data(e.to_string()))?;
        let text = line.trim();
        if text == "quit" {
            break;
        }
        for step in session.respond(text, SelectionMode::Greedy, &mut rng, 8)? {
            match step.kind {
                ActionKind::Text => println!("system: {}", step.rendered),
                ActionKind::Api => {
                    println!("api: {}", step.rendered);
                    for db in step.api_result.iter().flatten() {
                        println!("  {}", db.text());
                    }
                }
            }
        }
        std::io::stdout().flush().ok();
    }
    Ok(())
}

fn chat_dialer(rc: &RunConfig) -> CliResult<()> {
    let setup = load_dialer(rc)?;
    let params = load_params(rc)?;
    let featurizer = Featurizer::none();
    let mut session = Session::new(&setup.domain, &params, &featurizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    println!("Events: `say firstname=joe lastname=adamson phonetype=work`, `say yes`, `say no`, or an empty line. `quit` exits.");
    let mut input = String::new();
    let mut lines = std::io::stdin().lock().lines();
    loop {
        let steps = session.respond(&input, SelectionMode::Greedy, &mut rng, 4)?;
        for step in &steps {
            let prefix = if step.kind == ActionKind::Api { "api" } else { "system" };
            println!("{prefix}: {}", step.rendered);
        }
        std::io::stdout().flush().ok();
        let finished = steps.iter().any(|s| {
            matches!(
                DialerAction::from_id(s.action),
                Some(DialerAction::PlaceCall | DialerAction::Goodbye)
            )
        });
        if finished {
            return Ok(());
        }
        let Some(line) = lines.next() else {
            return Ok(());
        };
        let line = line.map_err(|e| CliError::Data(e.to_string()))?;
        let text = line.trim();
        if text == "quit" {
            return Ok(());
        }
        input = text.strip_prefix("say").unwrap_or(text).trim().to_string();
    }
}
