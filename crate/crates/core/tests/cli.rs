use std::fs;
use std::path::{Path, PathBuf};

use longicause::cli::main_with_args;
use longicause::panel::load_dataset;

const TINY: &[&str] = &[
    "synth.n=80",
    "synth.T=5",
    "synth.d_x=3",
    "synth.d_u=3",
    "synth.p=2",
    "model.lstm_hidden=5",
    "model.phi_dim=5",
    "model.z_dim=2",
    "train.max_epochs=2",
    "train.batch_size=32",
];

fn run(out: &Path, cmd: &str, seeds: Option<&str>, sets: &[&str]) -> i32 {
    let mut args: Vec<String> = vec!["longicause".into(), cmd.into(), "--out".into(), out.display().to_string()];
    if let Some(s) = seeds {
        args.extend(["--seeds".into(), s.into()]);
    }
    for s in sets {
        args.extend(["--set".into(), s.to_string()]);
    }
    main_with_args(args)
}

fn only_run_dir(out: &Path, prefix: &str) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.into_iter().next().unwrap()
}

#[test]
fn generate_writes_one_panel_per_seed() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(out.path(), "generate", Some("4,5"), TINY), 0);
    let dir = only_run_dir(out.path(), "generate-");
    assert!(dir.join("run.json").exists());
    assert!(dir.join("log.txt").exists());
    let a = load_dataset(&dir.join("synthetic-seed4.jsonl")).unwrap();
    let b = load_dataset(&dir.join("synthetic-seed5.jsonl")).unwrap();
    assert_eq!((a.n(), a.steps(), a.d_x()), (80, 5, 3));
    assert_ne!(a.y, b.y);
}

#[test]
fn tumor_sim_writes_a_cohort() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(out.path(), "tumor-sim", None, &["tumor.n_patients=12", "tumor.T_days=8", "tumor.seed=3"]), 0);
    let dir = only_run_dir(out.path(), "tumor-sim-");
    let d = load_dataset(&dir.join("tumor-seed3.jsonl")).unwrap();
    assert_eq!((d.n(), d.steps()), (12, 8));
}

#[test]
fn train_then_evaluate_a_checkpoint() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(out.path(), "train", Some("7"), TINY), 0);
    let dir = only_run_dir(out.path(), "train-");
    let seed_dir = dir.join("seed-7");
    for f in ["checkpoint.json", "train_log.json", "metrics.json"] {
        assert!(seed_dir.join(f).exists(), "{f}");
    }
    let trained: serde_json::Value = serde_json::from_str(&fs::read_to_string(seed_dir.join("metrics.json")).unwrap()).unwrap();

    let ckpt = format!("checkpoint.path={}", seed_dir.join("checkpoint.json").display());
    let mut sets = TINY.to_vec();
    sets.push(&ckpt);
    let eval_out = tempfile::tempdir().unwrap();
    assert_eq!(run(eval_out.path(), "evaluate", None, &sets), 0);
    let eval_dir = only_run_dir(eval_out.path(), "evaluate-");
    let scored: serde_json::Value = serde_json::from_str(&fs::read_to_string(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(trained, scored);
}

#[test]
fn sweep_reports_every_gamma_and_variant() {
    let out = tempfile::tempdir().unwrap();
    let mut sets = TINY.to_vec();
    sets.extend(["sweep.gammas=[0.1,1.0]", "train.max_epochs=1"]);
    assert_eq!(run(out.path(), "sweep", Some("1,2"), &sets), 0);
    let dir = only_run_dir(out.path(), "sweep-");
    let csv = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("gamma,model,metric,mean,std"));
    // 2 gammas x 2 variants x 6 metrics
    assert_eq!(lines.count(), 24);
}

#[test]
fn gradcheck_passes_on_the_default_tiny_model() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(out.path(), "gradcheck", None, &[]), 0);
    let dir = only_run_dir(out.path(), "gradcheck-");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("gradcheck-seed0.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::Value::Bool(true));
}

#[test]
fn invalid_input_exits_with_one() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(run(out.path(), "generate", None, &["synth.bogus=1"]), 1);
    assert_eq!(run(out.path(), "generate", None, &["synth.n=0"]), 1);
    assert_eq!(run(out.path(), "evaluate", None, &[]), 1);
    assert_eq!(run(out.path(), "ablate", Some("1"), TINY), 1);
    assert_eq!(main_with_args(["longicause", "frobnicate"]), 1);
    assert_eq!(main_with_args(["longicause", "--help"]), 0);
}

#[test]
fn config_files_are_merged_under_overrides() {
    let out = tempfile::tempdir().unwrap();
    let cfg = out.path().join("run.json");
    fs::write(&cfg, r#"{"synth": {"n": 30, "T": 4, "d_x": 2, "d_u": 2, "p": 2, "seed": 8}}"#).unwrap();
    let args = ["longicause", "generate", "--config", cfg.to_str().unwrap(), "--set", "synth.n=25", "--out"];
    let mut args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    args.push(out.path().join("runs").display().to_string());
    assert_eq!(main_with_args(args), 0);
    let dir = only_run_dir(&out.path().join("runs"), "generate-");
    let d = load_dataset(&dir.join("synthetic-seed8.jsonl")).unwrap();
    assert_eq!((d.n(), d.steps(), d.d_x()), (25, 4, 2));
}
