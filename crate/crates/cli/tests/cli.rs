//! Drives the binary end to end on a tiny toy configuration.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn selftrain(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selftrain"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("SELFTRAIN_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const CONFIG: &str = r#"
output_dir = "runs/exp"
arms = ["baseline", "mix", "forward_synth_a"]

[toy]
task = "reverse_map"
vocab_size = 20
min_len = 2
max_len = 4
train = 200
dev = 20
test = 20
monolingual = 60

[pipeline]
average_k = 2

[pipeline.model]
hidden_size = 16
learning_rate = 0.01
dropout = 0.0

[pipeline.text]
bpe_merges = 20

[pipeline.backward_schedule]
max_steps = 300
eval_interval_steps = 100
min_steps = 0

[pipeline.self_train_schedule]
max_steps = 300
eval_interval_steps = 100
min_steps = 0

[pipeline.forward_schedule]
max_steps = 300
eval_interval_steps = 100
min_steps = 0
"#;

#[test]
fn text_tools() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), CONFIG).unwrap();
    let msg = ok(selftrain(&["toy-gen", "--config", "exp.toml", "--out", "data", "--seed", "4"], d));
    assert!(msg.contains("200 train"));
    for f in ["train.src", "train.tgt", "dev.src", "test.tgt", "mono.tgt"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }

    ok(selftrain(&["bpe-learn", "--merges", "15", "-o", "src.bpe", "data/train.src"], d));
    ok(selftrain(&["bpe-apply", "--model", "src.bpe", "-o", "seg.txt", "data/train.src"], d));
    assert!(fs::read_to_string(d.join("seg.txt")).unwrap().contains("@@"));
    ok(selftrain(&["bpe-apply", "--decode", "-o", "back.txt", "seg.txt"], d));
    assert_eq!(fs::read(d.join("back.txt")).unwrap(), fs::read(d.join("data/train.src")).unwrap());

    let bleu = ok(selftrain(&["bleu", "--hyp", "data/dev.tgt", "--ref", "data/dev.tgt"], d));
    assert!(bleu.starts_with("BLEU = 100.00 ("), "{bleu}");
    let bleu = ok(selftrain(&["bleu", "--hyp", "data/dev.src", "--ref", "data/dev.tgt", "--smooth", "add1"], d));
    assert!(bleu.starts_with("BLEU = 0.00"), "{bleu}");

    assert!(!selftrain(&["bleu", "--hyp", "missing.txt", "--ref", "data/dev.tgt"], d).status.success());
}

#[test]
fn train_translate_average_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), CONFIG).unwrap();
    ok(selftrain(&["toy-gen", "--config", "exp.toml", "--out", "data"], d));
    let report = ok(selftrain(
        &[
            "train", "--config", "exp.toml", "--out", "model",
            "data/train.src", "data/train.tgt", "data/dev.src", "data/dev.tgt",
        ],
        d,
    ));
    assert!(report.starts_with("# label\tmodel\nstep\tdev_bleu\n100\t"), "{report}");
    for f in ["model.ckpt", "src.bpe", "tgt.bpe", "report.tsv", "last.ckpt", "snapshots/step-00000300.ckpt"] {
        assert!(d.join("model").join(f).exists(), "{f}");
    }

    ok(selftrain(&["translate", "--model", "model", "-o", "hyp.txt", "data/test.src"], d));
    let hyp = fs::read_to_string(d.join("hyp.txt")).unwrap();
    assert_eq!(hyp.lines().count(), 20);
    ok(selftrain(&["bleu", "--hyp", "hyp.txt", "--ref", "data/test.tgt"], d));

    let msg = ok(selftrain(
        &[
            "avg-ckpt", "-o", "avg.ckpt", "--k", "2",
            "model/snapshots/step-00000200.ckpt", "model/snapshots/step-00000300.ckpt",
        ],
        d,
    ));
    assert!(msg.contains("step 300"));
    assert_eq!(fs::read(d.join("avg.ckpt")).unwrap()[..8], *b"STCKPT\0\0");

    let summary = ok(selftrain(&["report", "--curves", "curves", "model/report.tsv"], d));
    assert!(summary.starts_with("label\tbest_dev\tbest_step\taveraged_dev\ttest\nmodel\t"), "{summary}");
    assert!(d.join("curves/index.tsv").exists());
    assert!(d.join("curves/model.tsv").exists());
}

#[test]
fn experiment_is_reproducible_and_honours_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), CONFIG).unwrap();
    let first = ok(selftrain(&["experiment", "--config", "exp.toml", "--seed", "9"], d));
    assert_eq!(first.lines().count(), 4, "{first}");
    assert!(first.lines().nth(1).unwrap().starts_with("baseline\tbackward\t"));
    let table = fs::read(d.join("runs/exp/comparison.tsv")).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_selftrain"))
        .args(["experiment", "--config", "exp.toml", "--seed", "9"])
        .current_dir(d)
        .env("RUST_LOG", "warn")
        .env("SELFTRAIN_OUTPUT_DIR", d.join("elsewhere"))
        .output()
        .unwrap();
    assert_eq!(ok(out), first);
    assert_eq!(fs::read(d.join("elsewhere/comparison.tsv")).unwrap(), table);
    assert!(d.join("elsewhere/curves/index.tsv").exists());
}

#[test]
fn pipeline_runs_all_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("exp.toml"), CONFIG.replace("runs/exp", "runs/pipe")).unwrap();
    let summary = ok(selftrain(&["pipeline", "--config", "exp.toml"], d));
    assert_eq!(summary.lines().count(), 4, "{summary}");
    for n in 1..=5 {
        assert!(d.join(format!("runs/pipe/stage-{n}/done")).exists());
    }
    assert!(d.join("runs/pipe/manifest").exists());
}

#[test]
fn bad_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "arms = [\"baseline\"]\nunknown_key = 3\n[toy]\n").unwrap();
    let out = selftrain(&["experiment", "--config", "bad.toml"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_key"));
}
