use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn toy() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy")
}

fn biorel(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biorel"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn config_with(dir: &Path, extra: &str) -> PathBuf {
    let base = std::fs::read_to_string(toy().join("config.toml")).unwrap();
    let mut text = String::new();
    for line in base.lines() {
        // point the relative fixture paths at the bundled directory
        if let Some((k, v)) = line.split_once(" = \"") {
            if ["amr", "sdg", "embeddings", "gazetteer", "labels"].contains(&k) {
                text.push_str(&format!("{k} = \"{}\"\n", toy().join(v.trim_end_matches('"')).display()));
                continue;
            }
        }
        text.push_str(line);
        text.push('\n');
    }
    let text = text.replacen("[paths]\n", &format!("[paths]\n{extra}"), 1);
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn eval_on_bundled_toy_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    ok(&biorel(&["eval"], &toy().join("config.toml"), &out));
    let r = report(&out);
    assert_eq!(r["mode"], "GDK");
    assert_eq!(r["source"], "Joint");
    assert_eq!(r["f1_mean"].as_f64(), Some(1.0));
    let table = std::fs::read_to_string(out.join("report.tsv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 + 1);
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let inputs = manifest["eval"]["inputs"].as_object().unwrap();
    assert!(inputs.contains_key("paths.amr"));
    assert_eq!(inputs["paths.embeddings"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["eval"]["seed"], 11);
}

#[test]
fn stepwise_pipeline_matches_one_shot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy().join("config.toml");
    let one = tmp.path().join("one");
    ok(&biorel(&["eval"], &cfg, &one));
    let steps = tmp.path().join("steps");
    for cmd in ["parse", "extract", "gram", "train", "eval"] {
        ok(&biorel(&[cmd], &cfg, &steps));
    }
    for f in ["graphs.jsonl", "trees.jsonl", "tree_vectors.txt", "candidates.jsonl", "gram.txt", "gram_gdk.txt", "model.json"] {
        assert!(steps.join(f).exists(), "{f}");
    }
    assert_eq!(
        std::fs::read(one.join("report.json")).unwrap(),
        std::fs::read(steps.join("report.json")).unwrap()
    );
    let manifest: Value = serde_json::from_str(&std::fs::read_to_string(steps.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["eval"]["inputs"].as_object().unwrap().contains_key("gram.txt"));
    assert_eq!(manifest.as_object().unwrap().len(), 5);
}

#[test]
fn gram_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = toy().join("config.toml");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&biorel(&["gram", "--workers", "1"], &cfg, &a));
    ok(&biorel(&["gram", "--workers", "3"], &cfg, &b));
    assert_eq!(std::fs::read(a.join("gram.txt")).unwrap(), std::fs::read(b.join("gram.txt")).unwrap());
    ok(&biorel(&["gram"], &cfg, &a));
    assert_eq!(std::fs::read(a.join("gram.txt")).unwrap(), std::fs::read(b.join("gram.txt")).unwrap());
}

#[test]
fn missing_embeddings_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "seed = 1\n[paths]\nembeddings = \"absent.txt\"\n").unwrap();
    let o = biorel(&["extract"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths.embeddings"));
}

#[test]
fn missing_seed_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "mode = \"SLI\"\n").unwrap();
    let o = biorel(&["eval"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    let o = biorel(&["parse", "--seed", "4"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("paths.amr"));
}

#[test]
fn malformed_input_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.amr"), "# ::id s1\n(a / b :ARG0 (c / d)\n").unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "seed = 1\n[paths]\namr = \"bad.amr\"\n").unwrap();
    let o = biorel(&["parse"], &cfg, &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.amr"));
}

#[test]
fn learned_edges_feed_the_joint_kernel() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = config_with(tmp.path(), "");
    ok(&biorel(&["learn-edges"], &cfg, &out));
    let edges = out.join("edges.txt");
    let head = std::fs::read_to_string(&edges).unwrap();
    assert!(head.starts_with("d=8 reduced=0\n"));
    let cfg = config_with(tmp.path(), &format!("edge_vectors = \"{}\"\n", edges.display()));
    let eval_out = tmp.path().join("eval");
    ok(&biorel(&["eval"], &cfg, &eval_out));
    assert_eq!(report(&eval_out)["f1_mean"].as_f64(), Some(1.0));
}
