use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ecg-report");

/// Two-class synthetic corpus and a model small enough to train in seconds.
const SMALL: &str = r#"
name = "small"
output_root = "runs"
seed = 3

[data]
manifest = "data/manifest.csv"

[data.synthetic]
episodes_per_class = 12
leads = 1
sampling_rate_hz = 64
duration_s = 4.0

[[data.synthetic.classes]]
name = "sinus"
rates_bpm = [60, 80]
report = "sinus rhythm {rate}"

[[data.synthetic.classes]]
name = "af"
rates_bpm = [120]
rr_irregularity = 0.25
p_wave = false
report = "atrial fibrillation {rate}"

[split]
mode = "random"

[model.encoder]
depth = 18
input_leads = 1
stem_kernel = 5
stage_kernels = [3, 3, 3, 3]
stage_widths = [4, 4, 8, 8]
output_positions = 2

[model.decoder]
family = "lstm"
embed_dim = 8
hidden_dim = 8
attention_dim = 8
dropout = 0.0

[train]
batch_size = 8
max_epochs = 2
max_report_len = 8
"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("ECG_REPORT_OUTPUT_ROOT").output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn synth_prep_train_evaluate_sanity_attn() {
    let dir = setup();
    let d = dir.path();
    ok(&run(d, &["synth", "--config", "small.toml"]));
    assert!(d.join("data/manifest.csv").is_file());
    let prep = ok(&run(d, &["prep", "--config", "small.toml"]));
    assert!(prep.contains("vocabulary"), "{prep}");
    for f in ["split.tsv", "vocab.tsv", "run.toml", "corpus_stats.json"] {
        assert!(d.join("runs/small").join(f).is_file(), "missing {f}");
    }
    ok(&run(d, &["train", "--config", "small.toml"]));
    let ckpt = "runs/small/model.ckpt";
    assert!(d.join(ckpt).is_file());
    let history = std::fs::read_to_string(d.join("runs/small/history.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);

    let eval = ok(&run(d, &["evaluate", "--config", "small.toml", "--checkpoint", ckpt, "--split", "validation"]));
    assert!(eval.contains("METEOR") && eval.contains("BLEU-4"), "{eval}");
    assert!(d.join("runs/small/generations_validation.tsv").is_file());
    let sanity = ok(&run(d, &["sanity", "--config", "small.toml", "--checkpoint", ckpt]));
    assert!(sanity.contains("relative METEOR drop"), "{sanity}");
    let attn = ok(&run(d, &["attn", "--config", "small.toml", "--checkpoint", ckpt]));
    assert!(attn.lines().count() >= 1, "{attn}");
}

#[test]
fn evaluate_without_checkpoint_fails() {
    let dir = setup();
    let out = run(dir.path(), &["evaluate", "--config", "small.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));
}

#[test]
fn missing_checkpoint_file_fails_with_kind() {
    let dir = setup();
    let out = run(dir.path(), &["sanity", "--config", "small.toml", "--checkpoint", "nope.ckpt"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("ERROR\tcheckpoint"));
}

#[test]
fn score_on_identical_files_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let text = "sinus rhythm , normal ecg\nmarked sinus bradycardia with rate 45\natrial fibrillation , irregular response 110\n";
    std::fs::write(dir.path().join("c.txt"), text).unwrap();
    std::fs::write(dir.path().join("r.txt"), text).unwrap();
    let out = ok(&run(dir.path(), &["score", "--candidates", "c.txt", "--references", "r.txt"]));
    let bleu4 = out.lines().find(|l| l.starts_with("BLEU-4")).unwrap();
    assert_eq!(bleu4.split('\t').nth(1).unwrap().trim().parse::<f64>().unwrap(), 100.0);
}

#[test]
fn score_rejects_misaligned_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.txt"), "a\nb\n").unwrap();
    std::fs::write(dir.path().join("r.txt"), "a\n").unwrap();
    let out = run(dir.path(), &["score", "--candidates", "c.txt", "--references", "r.txt"]);
    assert!(!out.status.success());
}

#[test]
fn output_root_environment_variable_wins() {
    let dir = setup();
    let d = dir.path();
    ok(&run(d, &["synth", "--config", "small.toml"]));
    let out = Command::new(BIN).args(["prep", "--config", "small.toml"]).current_dir(d).env("ECG_REPORT_OUTPUT_ROOT", "elsewhere").output().unwrap();
    ok(&out);
    assert!(d.join("elsewhere/small/split.tsv").is_file());
    assert!(!d.join("runs/small").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.toml"), SMALL.replace("seed = 3", "seed = 3\nsede = 4")).unwrap();
    let out = run(dir.path(), &["prep", "--config", "bad.toml"]);
    assert_eq!(out.status.code(), Some(1));
}
