use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use hcn::babi::serialize_babi;
use hcn::babi::synthetic::{synthetic_task5, SyntheticSpec};
use hcn::config::KeyValues;
use tempfile::TempDir;

fn hcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hcn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HCN_BABI_DIR")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&hcn(&["train", "--task", "dialer", "--bogus"])), 1);
    assert_eq!(code(&hcn(&["train"])), 1);
    assert_eq!(code(&hcn(&["rl", "--task", "babi5"])), 1);
    assert_eq!(code(&hcn(&["train", "--task", "dialer", "--embed", "--embeddings", "v.txt"])), 1);
    assert_eq!(code(&hcn(&["chat", "--task", "dialer"])), 1);
    assert_eq!(code(&hcn(&["eval", "--task", "babi6"])), 1);
    assert_eq!(code(&hcn(&["train", "--task", "babi7"])), 1);
}

#[test]
fn missing_data_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "nowhere");
    let out = hcn(&["train", "--task", "babi5", "--data", &missing, "--out", &path(&dir, "out")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let out = hcn(&["eval", "--task", "dialer", "--ckpt", &path(&dir, "absent.ckpt"), "--out", &path(&dir, "out")]);
    assert_eq!(code(&out), 2);
}

#[test]
fn dialer_train_eval_and_chat() {
    let dir = TempDir::new().unwrap();
    let ckpt = path(&dir, "m.ckpt");
    let out = hcn(&["train", "--task", "dialer", "--sl-init", "10", "--seed", "3", "--out", &ckpt]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("trained dialer on 10 oracle dialogs"));
    for file in ["m.ckpt", "metrics.csv", "directory.txt", "simulator.txt", "run_config.txt"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    assert_eq!(&std::fs::read(&ckpt).unwrap()[..4], b"HCN1");

    let data = dir.path().display().to_string();
    let report_dir = path(&dir, "eval");
    let out = hcn(&[
        "eval", "--task", "dialer", "--ckpt", &ckpt, "--data", &data, "--eval-episodes", "50", "--out", &report_dir,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(dir.path().join("eval/report.csv"));
    assert!(report.starts_with("metric,value\nsuccess_rate,"));
    assert!(report.contains("episodes,50"));

    let directory = hcn::dialer::Directory::load(&dir.path().join("directory.txt")).unwrap();
    let person = &directory.people[0];
    let mut child = Command::new(env!("CARGO_BIN_EXE_hcn"))
        .args(["chat", "--task", "dialer", "--ckpt", &ckpt, "--data", &data])
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let script = format!(
        "say firstname={} lastname={}\nsay phonetype={}\nsay yes\nsay yes\nquit\n",
        person.firstname, person.lastname, person.phones[0].0
    );
    child.stdin.take().unwrap().write_all(script.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("system: ")), "{text}");
}

#[test]
fn flags_override_the_config_file_and_runs_replay_from_their_record() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(&config, "task = dialer\nseed = 5\nhidden = 12\nsl_init = 3\n").unwrap();
    let first = path(&dir, "a");
    let out = hcn(&["train", "--config", config.to_str().unwrap(), "--seed", "9", "--out", &first]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let record = KeyValues::load(&dir.path().join("a/run_config.txt")).unwrap();
    assert_eq!(record.get("seed"), Some("9"));
    assert_eq!(record.get("hidden"), Some("12"));
    assert_eq!(record.get("task"), Some("dialer"));

    let second = path(&dir, "b");
    let recorded = path(&dir, "a/run_config.txt");
    let out = hcn(&["train", "--config", &recorded, "--out", &second]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a = std::fs::read(dir.path().join("a/model.ckpt")).unwrap();
    let b = std::fs::read(dir.path().join("b/model.ckpt")).unwrap();
    assert_eq!(a, b);

    std::fs::write(&config, "task = dialer\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&hcn(&["train", "--config", config.to_str().unwrap()])), 1);
}

fn write_task5(dir: &Path, train: &str, test: &str, kb: &str) {
    let data = synthetic_task5(&SyntheticSpec {
        train: 40,
        test: 10,
        seed: 12,
    });
    std::fs::write(dir.join(train), serialize_babi(&data.train)).unwrap();
    std::fs::write(dir.join(test), serialize_babi(&data.test_oov)).unwrap();
    let rows: String = data
        .kb
        .iter()
        .map(|r| format!("1 {} {} {}\n", r.restaurant, r.attribute, r.value))
        .collect();
    std::fs::write(dir.join(kb), rows).unwrap();
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.display().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn babi_files_train_and_evaluate_without_touching_inputs() {
    let data = TempDir::new().unwrap();
    write_task5(
        data.path(),
        "dialog-babi-task5-full-dialogs-trn.txt",
        "dialog-babi-task5-full-dialogs-tst-OOV.txt",
        "dialog-babi-kb-all.txt",
    );
    let before = snapshot(data.path());
    let out_dir = TempDir::new().unwrap();
    let ckpt = path(&out_dir, "m.ckpt");
    let data_arg = data.path().display().to_string();
    let out = hcn(&[
        "train", "--task", "babi5", "--data", &data_arg, "--mask", "--no-embed", "--hidden", "32", "--epochs", "6",
        "--out", &ckpt,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("16 actions"));
    assert_eq!(read(out_dir.path().join("inventory.tsv")).lines().count(), 16);

    let out = hcn(&["eval", "--task", "babi5", "--data", &data_arg, "--ckpt", &ckpt, "--out", &path(&out_dir, "eval")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = read(out_dir.path().join("eval/report.csv"));
    assert!(report.contains("turn_accuracy,") && report.contains("dialog_accuracy,"));
    assert_eq!(snapshot(data.path()), before);
}

#[test]
fn custom_task_reads_plain_file_names() {
    let data = TempDir::new().unwrap();
    write_task5(data.path(), "train.txt", "test.txt", "kb.txt");
    let out_dir = TempDir::new().unwrap();
    let data_arg = data.path().display().to_string();
    let out = hcn(&[
        "curve", "--task", "custom", "--data", &data_arg, "--hidden", "16", "--epochs", "2", "--runs", "2",
        "--sizes", "1,4", "--out", &path(&out_dir, "c"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let curve = read(out_dir.path().join("c/curve.csv"));
    assert_eq!(curve.lines().next(), Some("size,run,accuracy"));
    assert_eq!(curve.lines().count(), 1 + 4);
}

#[test]
fn rl_writes_a_success_curve() {
    let dir = TempDir::new().unwrap();
    let out = hcn(&[
        "rl", "--task", "dialer", "--runs", "1", "--rl-dialogs", "20", "--eval-episodes", "10", "--sl-init", "3",
        "--interleave", "1", "--out", &path(&dir, "rl"),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let curve = read(dir.path().join("rl/rl_curve.csv"));
    assert_eq!(curve.lines().next(), Some("dialogs,run,success_rate"));
    assert_eq!(curve.lines().count(), 1 + 3);
    assert!(dir.path().join("rl/model.ckpt").exists());
}
