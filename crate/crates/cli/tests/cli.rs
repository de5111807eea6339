use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/data/toy.jsonl");

const TINY: &str = r#"
embedding-dim = 8
min-freq = 1
max-input-len = 256
d-model = 16
enc-layers = 1
dec-layers = 1
heads = 2
ffn-dim = 32
window = 4
max-out-len = 16
dropout = 0.0
mgat-layers = 1
mgat-heads = 2
mgat-d-head = 4
lr = 3e-3
epochs = 2
seed = 3
beam-width = 2
"#;

fn hgsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgsum")).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Trained {
    _dir: tempfile::TempDir,
    root: PathBuf,
    run: PathBuf,
}

fn trained(extra: &[&str]) -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("tiny.toml");
    fs::write(&config, TINY).unwrap();
    let run = root.join("run");
    let mut args = vec!["--config", p(&config), "train", "--data", TOY, "--out", p(&run)];
    args.extend_from_slice(extra);
    let o = hgsum(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    Trained { _dir: dir, root, run }
}

fn write_records(path: &Path, records: &[(&str, &str)]) {
    let lines: Vec<String> =
        records.iter().map(|(id, s)| serde_json::json!({ "id": id, "summary": s }).to_string()).collect();
    fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let a = trained(&[]);
    for f in ["checkpoint.bin", "metrics.jsonl", "config.json", "vocab.txt"] {
        assert!(a.run.join(f).exists(), "{f} missing");
    }
    let metrics = fs::read_to_string(a.run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 16, "one record per step over 2 epochs of 8 clusters");
    let b = trained(&[]);
    assert_eq!(metrics, fs::read_to_string(b.run.join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(a.run.join("checkpoint.bin")).unwrap(), fs::read(b.run.join("checkpoint.bin")).unwrap());
}

#[test]
fn echoed_config_reproduces_the_run() {
    let a = trained(&["--epochs", "1"]);
    let echoed = a.run.join("config.json");
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(&echoed).unwrap()).unwrap();
    assert_eq!(cfg["epochs"], 1, "flag overrides the file");
    assert_eq!(cfg["d-model"], 16);
    assert_eq!(cfg["command"], "train");
    let again = a.root.join("again");
    let o = hgsum(&["--config", p(&echoed), "train", "--out", p(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(a.run.join("metrics.jsonl")).unwrap(),
        fs::read_to_string(again.join("metrics.jsonl")).unwrap()
    );
}

#[test]
fn triple_ablation_trains() {
    let t = trained(&["--no-mgat", "--no-compressor", "--beta", "1.0", "--epochs", "1"]);
    let cfg = fs::read_to_string(t.run.join("config.json")).unwrap();
    assert!(cfg.contains("\"no-mgat\": true") && cfg.contains("\"no-compressor\": true"), "{cfg}");
    let first = fs::read_to_string(t.run.join("metrics.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(rec["total"], rec["l_ce"], "beta 1 trains on cross-entropy alone");
}

#[test]
fn summarize_contracts() {
    let t = trained(&[]);
    let cfg = t.run.join("config.json");
    let ckpt = t.run.join("checkpoint.bin");
    let out = t.root.join("gen.jsonl");
    let o = hgsum(&["--config", p(&cfg), "summarize", "--checkpoint", p(&ckpt), "--input", TOY, "--output", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gen = fs::read_to_string(&out).unwrap();
    assert_eq!(gen.lines().count(), 8);
    for line in gen.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["id"].is_string() && v["summary"].is_string());
    }

    let empty = t.root.join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = hgsum(&["--config", p(&cfg), "summarize", "--checkpoint", p(&ckpt), "--input", p(&empty)]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());

    let o = hgsum(&["--config", p(&cfg), "summarize", "--checkpoint", p(&ckpt), "--input", TOY, "--mgat-d-head", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mgat.l0.c0.h0.w"), "{}", stderr(&o));
}

#[test]
fn eval_scores_and_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let (gen, refs) = (dir.path().join("gen.jsonl"), dir.path().join("ref.jsonl"));
    write_records(&gen, &[("a", "police kill the gunman"), ("b", "the cat sat")]);
    write_records(&refs, &[("b", "the cat sat"), ("a", "police killed the gunman")]);
    let o = hgsum(&["eval", "--generated", p(&gen), "--references", p(&refs)]);
    assert!(o.status.success(), "{}", stderr(&o));
    // per pair R-1 (0.75, 1), R-2 (1/3, 1), R-L (0.75, 1)
    assert!(stdout(&o).starts_with("R-1 87.50  R-2 66.67  R-L 87.50  mean length 3.50"), "{}", stdout(&o));
    let json: serde_json::Value = serde_json::from_str(stdout(&o).lines().nth(1).unwrap()).unwrap();
    assert!((json["rouge"]["rouge2"]["f1"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);

    let o = hgsum(&["eval", "--generated", p(&refs), "--references", p(&refs)]);
    assert!(stdout(&o).starts_with("R-1 100.00  R-2 100.00  R-L 100.00"));
    write_records(&gen, &[("a", "x y z"), ("b", "u v w")]);
    let o = hgsum(&["eval", "--generated", p(&gen), "--references", p(&refs)]);
    assert!(stdout(&o).starts_with("R-1 0.00  R-2 0.00  R-L 0.00"));

    write_records(&gen, &[("a", "x")]);
    let o = hgsum(&["eval", "--generated", p(&gen), "--references", p(&refs)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[\"b\"]"), "{}", stderr(&o));
}

#[test]
fn ksweep_rows_and_rejection() {
    let t = trained(&[]);
    let cfg = t.run.join("config.json");
    let ckpt = t.run.join("checkpoint.bin");
    let o = hgsum(&["--config", p(&cfg), "ksweep", "--ks", "0.2,0.5,0.8", "--checkpoint", p(&ckpt)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 4, "{table}");
    assert!(table.lines().nth(1).unwrap().starts_with("0.20"));
    let o = hgsum(&["--config", p(&cfg), "ksweep", "--ks", "1.0", "--checkpoint", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(1));
}

/// Statement-level check of the DOT subset the exporter writes.
fn check_dot(text: &str) -> Result<(usize, usize), String> {
    let mut lines = text.lines();
    let head = lines.next().ok_or("empty")?;
    if !(head.starts_with("graph \"") && head.ends_with(" {")) {
        return Err(format!("bad header {head}"));
    }
    let (mut nodes, mut edges, mut closed) = (0, 0, false);
    for line in lines {
        let l = line.trim();
        if l == "}" {
            closed = true;
            continue;
        }
        if closed {
            return Err("statement after closing brace".into());
        }
        let (stmt, attrs) = l.strip_suffix("];").and_then(|s| s.split_once(" [")).ok_or(format!("bad statement {l}"))?;
        let id = |s: &str| s.strip_prefix('n').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
        match stmt.split_once(" -- ") {
            Some((a, b)) if id(a) && id(b) => edges += 1,
            None if id(stmt) => nodes += 1,
            _ => return Err(format!("bad statement {l}")),
        }
        if attrs.matches('"').count() % 2 != 0 || !attrs.contains('=') {
            return Err(format!("bad attributes {l}"));
        }
    }
    closed.then_some((nodes, edges)).ok_or("unclosed graph".into())
}

#[test]
fn graph_exports_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c.jsonl");
    fs::write(&data, r#"{"id": "pets", "documents": ["Cats sleep. Dogs bark.", "Cats purr. Dogs run."]}"#).unwrap();
    let out = dir.path().join("g");
    let o = hgsum(&["graph", "--data", p(&data), "--out", p(&out), "--we-threshold", "0", "--embedding-dim", "8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dump: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pets.json")).unwrap()).unwrap();
    // 2 documents, 4 sentences of 3 tokens, 8 alphabetic noun candidates
    let expect = [("dd", 1), ("ds", 4), ("ss", 6), ("sw", 12), ("we", 28), ("wo", 8)];
    for (ty, n) in expect {
        assert_eq!(dump["edge_counts"][ty], n, "{ty}");
    }
    assert_eq!(dump["node_counts"]["word"], 12);
    let (nodes, edges) = check_dot(&fs::read_to_string(out.join("pets.dot")).unwrap()).unwrap();
    assert_eq!((nodes, edges), (18, 59));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report[0]["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn exit_codes() {
    assert_eq!(hgsum(&["train", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(hgsum(&["train", "--out", "/tmp/x"]).status.code(), Some(1), "missing --data");
    assert_eq!(hgsum(&["train", "--data", "/nonexistent.jsonl", "--out", "/tmp/x"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "no-such-key = 1\n").unwrap();
    assert_eq!(hgsum(&["--config", p(&bad), "graph"]).status.code(), Some(1));
    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, "{\"id\": \"x\", \"documents\": [\"A b.\"]}\nnot json\n").unwrap();
    let o = hgsum(&["graph", "--data", p(&broken), "--out", p(&dir.path().join("g"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2:"), "line context: {}", stderr(&o));
    assert_eq!(hgsum(&["--help"]).status.code(), Some(0));
}
