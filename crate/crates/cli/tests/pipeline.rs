use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 7

[model]
depth = 2
width = 12
latent = 6
members = 3

[train]
iterations = 60
batch_functions = 6
batch_queries = 8

[data]
train_pairs = 20
test_pairs = 10

[data.antiderivative]
sensors = 16
alpha_groups = 2
"#;

fn uqdon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqdon"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env_remove("UQDON_PROFILE")
        .output()
        .unwrap()
}

fn with_config(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.toml");
    fs::write(&cfg, TINY).unwrap();
    let mut all = vec!["--config", cfg.to_str().unwrap()];
    all.extend_from_slice(args);
    uqdon(dir, &all)
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn generate_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(with_config(d, &["gen-data"]));
    ok(with_config(d, &["train"]));
    for f in ["model.ckpt", "loss_history.csv", "train_summary.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let reference = d.join("train.data");
    ok(with_config(d, &["eval", "--predictions", "--reference", reference.to_str().unwrap()]));

    let errors = fs::read_to_string(d.join("errors.csv")).unwrap();
    assert!(errors.starts_with("pair_index,alpha,rel_l2,rel_unc\n"));
    assert_eq!(errors.lines().count(), 11);
    let preds = fs::read_to_string(d.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 1 + 10 * 16);
    assert!(preds.lines().skip(1).all(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap() >= 0.0));
    assert_eq!(fs::read_to_string(d.join("per_scale.csv")).unwrap().lines().count(), 3);
    assert_eq!(fs::read_to_string(d.join("ood.csv")).unwrap().lines().count(), 11);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pairs"], 10);
}

#[test]
fn generated_data_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(with_config(a.path(), &["gen-data"]));
    ok(with_config(b.path(), &["gen-data"]));
    for f in ["train.data", "test.data"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    ok(with_config(c.path(), &["--seed", "8", "gen-data"]));
    assert_ne!(fs::read(a.path().join("train.data")).unwrap(), fs::read(c.path().join("train.data")).unwrap());
}

#[test]
fn sweeps_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(with_config(d, &["robustness-sweep", "--sizes", "1,2"]));
    let r = fs::read_to_string(d.join("robustness.csv")).unwrap();
    assert!(r.starts_with("ensemble_size,max_rel_l2,mean_rel_l2,worst_pair,mean_rel_unc\n"));
    assert_eq!(r.lines().count(), 3);
    ok(with_config(d, &["beta-sweep", "--betas", "0,1.5"]));
    assert_eq!(fs::read_to_string(d.join("beta_sweep.csv")).unwrap().lines().count(), 3);
    assert!(d.join("beta_1.5").join("errors.csv").exists());
    ok(with_config(d, &["scaling-bench", "--sizes", "1,2", "--iterations", "5"]));
    let t = fs::read_to_string(d.join("scaling_table.csv")).unwrap();
    assert!(t.starts_with("Ensemble size,1,2\nTraining time (sec),"));
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad = d.join("bad.toml");
    fs::write(&bad, "seed = \"x\"").unwrap();
    assert_eq!(uqdon(d, &["--config", bad.to_str().unwrap(), "gen-data"]).status.code(), Some(2));
    assert_eq!(uqdon(d, &["--config", d.join("missing.toml").to_str().unwrap(), "gen-data"]).status.code(), Some(2));

    ok(with_config(d, &["gen-data"]));
    let data = d.join("train.data");
    let mut bytes = fs::read(&data).unwrap();
    bytes[0] ^= 0xff;
    fs::write(&data, bytes).unwrap();
    assert_eq!(with_config(d, &["train"]).status.code(), Some(3));
    assert_eq!(with_config(d, &["train", "--data", d.join("nope.data").to_str().unwrap()]).status.code(), Some(3));
    let o = with_config(d, &["beta-sweep", "--betas", "-1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
