use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ontolink::eval::{GoldMention, Prediction};
use ontolink::kb::NameType;
use ontolink::preprocess::Document;
use ontolink::PipelineConfig;

fn ontolink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ontolink"))
        .args(args)
        .env("ONTOLINK_LOG", "info")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ontolink(args);
    assert!(
        out.status.success(),
        "{args:?} failed\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const ONTOLOGY: &str = "\
C1\tT047\tmyocardial infarction\tP
C1\tT047\tMI\tA
C1\tT047\theart attack\tS
C2\tT047\theart failure\tP
C3\tT121\taspirin\tP
C4\tT999\tsomething else\tP
";
const HIERARCHY: &str = "T999\tT000\n";
const TYPES: &str = "T047\tDisease or Syndrome\nT121\tPharmacologic Substance\n";
const CORPUS: &str = "\
1|t|Aspirin after heart attack
1|a|Patients with myocardial infarction (MI) received aspirin. MI recurrence was rare.
1\t0\t7\tAspirin\tT121\tC3
1\t14\t26\theart attack\tT047\tC1
1\t41\t62\tmyocardial infarction\tT047\tC1

";

struct Toy {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("ontology.tsv"), ONTOLOGY).unwrap();
        std::fs::write(root.join("hierarchy.tsv"), HIERARCHY).unwrap();
        std::fs::write(root.join("types.tsv"), TYPES).unwrap();
        std::fs::write(root.join("corpus.pubtator"), CORPUS).unwrap();
        Self { _dir: dir, root }
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn build_kb(&self, out: &str) -> Output {
        ontolink(&[
            "build-kb",
            "--ontology",
            s(&self.p("ontology.tsv")),
            "--hierarchy",
            s(&self.p("hierarchy.tsv")),
            "--types",
            s(&self.p("types.tsv")),
            "--out",
            s(&self.p(out)),
        ])
    }
}

#[test]
fn build_kb_writes_artifacts_deterministically() {
    let t = Toy::new();
    assert!(t.build_kb("kb1").status.success());
    assert!(t.build_kb("kb2").status.success());
    for f in ["alias.jsonl", "index.bin", "vectorizers.bin"] {
        let a = std::fs::read(t.p("kb1").join(f)).unwrap();
        let b = std::fs::read(t.p("kb2").join(f)).unwrap();
        assert!(!a.is_empty(), "{f} empty");
        assert_eq!(a, b, "{f} differs between runs");
    }
    let aliases = std::fs::read_to_string(t.p("kb1").join("alias.jsonl")).unwrap();
    assert_eq!(aliases.lines().count(), 5);
    assert!(!aliases.contains("something else"));
}

#[test]
fn missing_input_is_a_usage_error_naming_the_flag() {
    let t = Toy::new();
    std::fs::remove_file(t.p("hierarchy.tsv")).unwrap();
    let out = t.build_kb("kb");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--hierarchy"));

    let out = ontolink(&[
        "preprocess",
        "--corpus",
        s(&t.p("nope.pubtator")),
        "--out",
        s(&t.p("pre")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--corpus"));

    assert_eq!(ontolink(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        ontolink(&["build-kb", "--ontology", "x"]).status.code(),
        Some(2)
    );
}

#[test]
fn empty_alias_table_fails_at_runtime() {
    let t = Toy::new();
    std::fs::write(t.p("ontology.tsv"), "C4\tT999\tsomething else\tP\n").unwrap();
    let out = t.build_kb("kb");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alias"));
}

#[test]
fn preprocess_writes_iob2_and_report() {
    let t = Toy::new();
    ok(&[
        "preprocess",
        "--corpus",
        s(&t.p("corpus.pubtator")),
        "--out",
        s(&t.p("pre")),
    ]);
    let iob: Vec<_> = std::fs::read_dir(t.p("pre").join("iob2"))
        .unwrap()
        .collect();
    assert_eq!(iob.len(), 1);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(t.p("pre").join("preprocess_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["raw_mentions"], 3);
    assert_eq!(report["dropped"], 0);
    assert_eq!(report["definitions"], 1);

    // a definitions file replaces detection, so the body's own definition
    // is not used
    std::fs::write(t.p("abbrevs.tsv"), "2\tMI\tmyocardial infarction\n").unwrap();
    ok(&[
        "preprocess",
        "--corpus",
        s(&t.p("corpus.pubtator")),
        "--abbrevs",
        s(&t.p("abbrevs.tsv")),
        "--out",
        s(&t.p("pre2")),
    ]);
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(t.p("pre2").join("preprocess_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["definitions"], 0);
    let given = std::fs::read_to_string(t.p("pre2").join("documents.jsonl")).unwrap();
    let detected = std::fs::read_to_string(t.p("pre").join("documents.jsonl")).unwrap();
    assert!(given.contains("MI recurrence"));
    assert!(!detected.contains("MI recurrence"));
}

#[test]
fn evaluate_gold_against_itself() {
    let t = Toy::new();
    ok(&[
        "preprocess",
        "--corpus",
        s(&t.p("corpus.pubtator")),
        "--out",
        s(&t.p("pre")),
    ]);
    let docs: Vec<Document> =
        ontolink::io::load_jsonl(&t.p("pre").join("documents.jsonl")).unwrap();
    let preds: Vec<Prediction> = GoldMention::from_documents(&docs)
        .into_iter()
        .map(|g| Prediction {
            doc_id: g.doc_id,
            sentence: g.sentence,
            start: g.start,
            end: g.end,
            text: String::new(),
            entity_id: g.entity_id,
            type_id: g.type_id,
            name_type: NameType::PrimaryName,
            alias: String::new(),
            score: 1.0,
            p: 1.0,
        })
        .collect();
    ontolink::io::save_jsonl(&t.p("pred.jsonl"), &preds).unwrap();
    let out = ok(&[
        "evaluate",
        "--gold",
        s(&t.p("pre")),
        "--pred",
        s(&t.p("pred.jsonl")),
        "--report",
        "json",
        "--breakdowns",
        "all",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sections = report["sections"].as_array().unwrap();
    for name in ["mention", "document", "ner", "acronym"] {
        let sec = sections
            .iter()
            .find(|x| x["name"] == name)
            .unwrap_or_else(|| panic!("no {name} section"));
        if name != "acronym" {
            assert_eq!(sec["f1"], 1.0, "{name}");
        }
    }
}

/// Synthetic data, desk config, both models trained once and shared.
fn trained() -> &'static (tempfile::TempDir, PathBuf) {
    static CELL: std::sync::OnceLock<(tempfile::TempDir, PathBuf)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        // statics are never dropped, so keep this under the target directory
        let dir = tempfile::tempdir_in(env!("CARGO_TARGET_TMPDIR")).unwrap();
        let r = dir.path().to_path_buf();
        ok(&[
            "synth",
            "--out",
            s(&r.join("data")),
            "--concepts",
            "40",
            "--docs",
            "10",
            "--seed",
            "3",
        ]);
        let mut config = PipelineConfig::desk();
        config.linker.epochs = 3;
        config.selector.epochs = 3;
        config.save(&r.join("desk.toml")).unwrap();
        let d = r.join("data");
        ok(&[
            "build-kb",
            "--ontology",
            s(&d.join("ontology.tsv")),
            "--hierarchy",
            s(&d.join("hierarchy.tsv")),
            "--types",
            s(&d.join("types.tsv")),
            "--out",
            s(&r.join("kb")),
            "--config",
            s(&r.join("desk.toml")),
        ]);
        ok(&[
            "preprocess",
            "--corpus",
            s(&d.join("corpus.pubtator")),
            "--out",
            s(&r.join("pre")),
        ]);
        let out = ok(&[
            "train",
            "--stage",
            "link",
            "--kb",
            s(&r.join("kb")),
            "--corpus",
            s(&r.join("pre")),
            "--validation",
            s(&r.join("pre")),
            "--config",
            s(&r.join("desk.toml")),
            "--out",
            s(&r.join("models/linker.ckpt")),
        ]);
        let log = String::from_utf8_lossy(&out.stderr);
        assert_eq!(log.matches("recall@1").count(), 3, "{log}");
        ok(&[
            "train",
            "--stage",
            "select",
            "--kb",
            s(&r.join("kb")),
            "--corpus",
            s(&r.join("pre")),
            "--linker",
            s(&r.join("models/linker.ckpt")),
            "--config",
            s(&r.join("desk.toml")),
            "--out",
            s(&r.join("models/selector.ckpt")),
        ]);
        (dir, r)
    })
}

fn run_all(r: &Path, kb: &Path, out: &str, mode: &str) -> PathBuf {
    let o = r.join(out);
    ok(&[
        "run",
        "--stage",
        "all",
        "--kb",
        s(kb),
        "--in",
        s(&r.join("pre")),
        "--model",
        s(&r.join("models/linker.ckpt")),
        "--model",
        s(&r.join("models/selector.ckpt")),
        "--mode",
        mode,
        "--out",
        s(&o),
        "--config",
        s(&r.join("desk.toml")),
    ]);
    o
}

#[test]
fn end_to_end_run_is_overlap_free_and_deterministic() {
    let (_, r) = trained();
    let a = run_all(r, &r.join("kb"), "run-a", "greedy");
    let b = run_all(r, &r.join("kb"), "run-b", "greedy");
    for f in [
        "candidates.jsonl",
        "linked.jsonl",
        "predictions.jsonl",
        "predictions.pubtator",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let preds: Vec<Prediction> = ontolink::io::load_jsonl(&a.join("predictions.jsonl")).unwrap();
    assert!(!preds.is_empty());
    for (i, x) in preds.iter().enumerate() {
        for y in &preds[i + 1..] {
            assert!(
                !(x.doc_id == y.doc_id
                    && x.sentence == y.sentence
                    && x.start < y.end
                    && y.start < x.end)
            );
        }
    }
    let out = ok(&[
        "evaluate",
        "--gold",
        s(&r.join("pre")),
        "--pred",
        s(&a.join("predictions.jsonl")),
        "--breakdowns",
        "all",
        "--train-gold",
        s(&r.join("pre")),
    ]);
    let table = String::from_utf8_lossy(&out.stdout);
    for section in [
        "mention",
        "document",
        "ner",
        "mention (seen)",
        "mention (unseen)",
        "acronym",
        "false positives",
        "stage",
    ] {
        assert!(table.contains(section), "missing {section}:\n{table}");
    }
}

#[test]
fn stages_run_separately_match_the_chained_run() {
    let (_, r) = trained();
    let all = run_all(r, &r.join("kb"), "run-chain", "threshold");
    let kb = r.join("kb");
    let config = r.join("desk.toml");
    let stage = |name: &str, input: &Path, out: &Path, model: Option<&str>| {
        let mut args = vec![
            "run",
            "--stage",
            name,
            "--kb",
            s(&kb),
            "--in",
            s(input),
            "--out",
            s(out),
        ];
        args.extend(["--config", s(&config), "--mode", "threshold"]);
        let m;
        if let Some(model) = model {
            m = r.join("models").join(model);
            args.extend(["--model", s(&m)]);
        }
        ok(&args);
    };
    stage("candgen", &r.join("pre"), &r.join("s1"), None);
    stage("link", &r.join("s1"), &r.join("s2"), Some("linker.ckpt"));
    stage(
        "select",
        &r.join("s2"),
        &r.join("s3"),
        Some("selector.ckpt"),
    );
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(
        read(r.join("s1/candidates.jsonl")),
        read(all.join("candidates.jsonl"))
    );
    assert_eq!(
        read(r.join("s2/linked.jsonl")),
        read(all.join("linked.jsonl"))
    );
    assert_eq!(
        read(r.join("s3/predictions.jsonl")),
        read(all.join("predictions.jsonl"))
    );

    // selector checkpoint given where a linker is needed
    let out = ontolink(&[
        "run",
        "--stage",
        "link",
        "--kb",
        s(&kb),
        "--in",
        s(&r.join("s1")),
        "--model",
        s(&r.join("models/selector.ckpt")),
        "--out",
        s(&r.join("bad")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn swapping_in_a_larger_kb_needs_no_retraining() {
    let (_, r) = trained();
    let d = r.join("data");
    let mut ontology = std::fs::read_to_string(d.join("ontology.tsv")).unwrap();
    ontology.push_str("C900000\tT001\tgrelbant fibrosis\tP\nC900001\tT002\tzorvic acid\tP\nC900001\tT002\tZVA\tA\n");
    std::fs::write(r.join("ontology-v2.tsv"), ontology).unwrap();
    ok(&[
        "build-kb",
        "--ontology",
        s(&r.join("ontology-v2.tsv")),
        "--hierarchy",
        s(&d.join("hierarchy.tsv")),
        "--types",
        s(&d.join("types.tsv")),
        "--out",
        s(&r.join("kb-v2")),
        "--config",
        s(&r.join("desk.toml")),
    ]);
    let before = std::fs::read(r.join("models/linker.ckpt")).unwrap();
    let out = run_all(r, &r.join("kb-v2"), "run-v2", "greedy");
    assert!(out.join("predictions.jsonl").is_file());
    assert_eq!(before, std::fs::read(r.join("models/linker.ckpt")).unwrap());
}

#[test]
fn config_subcommand_emits_loadable_toml() {
    let out = ok(&["config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        PipelineConfig::from_toml(&text).unwrap(),
        PipelineConfig::default()
    );
    let out = ok(&["config", "--desk"]);
    assert_eq!(
        PipelineConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap(),
        PipelineConfig::desk()
    );
}
