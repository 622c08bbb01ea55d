use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &[&str] = &[
    "--set",
    "synth.n_speakers=4",
    "--set",
    "synth.utterances_per_speaker=10",
    "--set",
    "synth.duration_s=0.5",
    "--set",
    "train.epochs=2",
];

fn spkid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spkid")).args(args).output().expect("spawn spkid")
}

fn run_ok(args: &[&str]) -> String {
    let out = spkid(args);
    assert!(
        out.status.success(),
        "spkid {args:?} failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dirs(root: &Path) -> (String, String) {
    (
        root.join("corpus").to_string_lossy().into_owned(),
        root.join("work").to_string_lossy().into_owned(),
    )
}

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_two_files_per_utterance_and_is_reproducible() {
    let t = TempDir::new().unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    for d in [&a, &b] {
        let d = d.to_string_lossy();
        run_ok(&with(&["synth", "--corpus", &d], TINY));
    }
    let fa = files(&a);
    assert_eq!(fa.len(), 4 * 10 * 2 + 1);
    let fb = files(&b);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.strip_prefix(&a).unwrap(), y.strip_prefix(&b).unwrap());
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn staged_chain_produces_every_artifact() {
    let t = TempDir::new().unwrap();
    let (corpus, work) = dirs(t.path());
    let base = with(&["--corpus", &corpus, "--work", &work], TINY);
    for stage in ["synth", "preprocess", "features", "kpca"] {
        run_ok(&with(&[stage], &base));
    }
    let w = t.path().join("work");
    let variance = fs::read_to_string(w.join("kpca_variance.csv")).unwrap();
    assert_eq!(variance.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count(), 30);
    assert!(w.join("split.csv").exists());
    assert!(w.join("kpca.nspk").exists());

    for m in ["mfcc13", "eeg30", "fused43"] {
        let msg = run_ok(&with(&["train", "--modality", m], &base));
        assert!(msg.contains("trained"), "{msg}");
        assert!(w.join(format!("model_{m}.nspk")).exists());
        let csv = fs::read_to_string(w.join("curves").join(format!("{m}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 3, "{csv}");
        assert!(fs::read_to_string(w.join("curves").join(format!("{m}.svg"))).unwrap().starts_with("<svg"));
        let eval = run_ok(&with(&["eval", "--modality", m], &base));
        assert!(eval.contains('%'), "{eval}");
        assert!(w.join(format!("eval_{m}.txt")).exists());
    }

    // a checkpoint for 4 speakers cannot score an 8-speaker manifest
    let other = t.path().join("corpus8").to_string_lossy().into_owned();
    run_ok(&with(
        &["synth", "--corpus", &other, "--set", "synth.n_speakers=8"],
        &TINY[2..6],
    ));
    let out = spkid(&with(&["eval", "--modality", "mfcc13", "--corpus", &other, "--work", &work], &[]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));
}

#[test]
fn missing_inputs_and_unwritable_outputs_are_io_errors() {
    let t = TempDir::new().unwrap();
    let (corpus, work) = dirs(t.path());
    let out = spkid(&["preprocess", "--corpus", &corpus, "--work", &work]);
    assert_eq!(out.status.code(), Some(2));

    let blocker = t.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let inside = blocker.join("corpus").to_string_lossy().into_owned();
    let out = spkid(&with(&["synth", "--corpus", &inside], TINY));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn configuration_errors_exit_3() {
    let out = spkid(&["show-config", "--set", "no.such.key=1"]);
    assert_eq!(out.status.code(), Some(3));
    let out = spkid(&["show-config", "--set", "kpca.n_components=12"]);
    assert_eq!(out.status.code(), Some(3));
    let out = spkid(&["show-config", "--set", "split.train=0.9"]);
    assert_eq!(out.status.code(), Some(3));

    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "# comment\nrun.seed = 4\nmodel.gru_hidden = zero\n").unwrap();
    let out = spkid(&["show-config", "--config", &cfg.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.gru_hidden"));
    fs::write(&cfg, "run.seed = 4\nnot a setting\n").unwrap();
    let out = spkid(&["show-config", "--config", &cfg.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.cfg:2"));
}

#[test]
fn settings_apply_in_order() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "run.seed = 4\ntrain.batch_size = 8\n").unwrap();
    let text = run_ok(&["show-config", "--config", &cfg.to_string_lossy(), "--set", "run.seed=5", "--seed", "6"]);
    assert!(text.lines().any(|l| l.replace(' ', "") == "run.seed=6"), "{text}");
    assert!(text.lines().any(|l| l.replace(' ', "") == "train.batch_size=8"), "{text}");
}

#[test]
fn usage_errors_exit_1_and_help_lists_keys() {
    assert_eq!(spkid(&["--bogus"]).status.code(), Some(1));
    assert_eq!(spkid(&["train", "--modality", "eeg155"]).status.code(), Some(1));
    let help = spkid(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8(help.stdout).unwrap();
    for key in ["run.seed", "kpca.n_components", "model.tcn_filters", "train.lr", "ica.kurtosis"] {
        assert!(text.contains(key), "--help is missing {key}");
    }
    assert!(text.contains("stated") && text.contains("chosen"));
}

#[test]
fn experiment_reports_and_repeats_byte_for_byte() {
    let t = TempDir::new().unwrap();
    let dir = t.path().join("work");
    let work = dir.to_string_lossy().into_owned();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let msg = run_ok(&with(&["experiment", "--synthetic", "--work", &work, "--set", "ica.enabled=false"], TINY));
        assert!(msg.contains("MFCC+EEG"), "{msg}");
        let table = fs::read_to_string(dir.join("table.csv")).unwrap();
        assert_eq!(table.lines().next().unwrap().split(',').count(), 3, "{table}");
        for f in ["report.txt", "config.txt", "kpca.nspk", "model_fused43.nspk"] {
            assert!(dir.join(f).exists(), "{f}");
        }
        outputs.push(files(&dir).iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>());
        fs::remove_dir_all(&dir).unwrap();
    }
    assert!(outputs[0] == outputs[1]);
}
