use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use lsc_core::harness::EvalReport;
use lsc_core::optimizer::LscModel;
use lsc_core::KnowledgeBase;

fn lsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn small_corpus(dir: &Path) -> String {
    let cfg = dir.join("synth.json");
    std::fs::write(&cfg, r#"{"domains": 3, "docs_per_domain": 40}"#).unwrap();
    let out = dir.join("corpus");
    let o = lsc(&[
        "synth",
        "--out-dir",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "4",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.to_str().unwrap().to_string()
}

#[test]
fn eval_table_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let o = lsc(&[
        "eval",
        "--corpus-dir",
        &corpus,
        "--setting",
        "balanced",
        "--per-class",
        "15",
        "--format",
        "table",
    ]);
    assert_eq!(code(&o), 0);
    let table = stdout(&o);
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["domain", "NB-T", "NB-S", "NB-ST", "LSC"]);
    assert!(table.contains("domain02") && table.contains("(average)"));

    let o = lsc(&[
        "eval",
        "--corpus-dir",
        &corpus,
        "--systems",
        "NB-T,LSC",
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let report = EvalReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.per_domain.len(), 3);
    assert_eq!(report.averages.len(), 2);
}

#[test]
fn eval_writes_tsv_report() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("report.tsv");
    let o = lsc(&[
        "eval",
        "--corpus-dir",
        &corpus,
        "--systems",
        "nb-st",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let tsv = std::fs::read_to_string(out).unwrap();
    // 3 domains plus the average row, 3 metrics each.
    assert_eq!(tsv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4 * 3);
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    for args in [
        vec!["eval"],
        vec!["eval", "--corpus-dir", &corpus, "--setting", "skewed"],
        vec!["eval", "--corpus-dir", &corpus, "--systems", "SVM"],
        vec!["eval", "--corpus-dir", &corpus, "--sigma", "0.5"],
        vec!["eval", "--corpus-dir", &corpus, "--lambda", "2"],
        vec!["eval", "--corpus-dir", &corpus, "--folds", "1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(code(&lsc(&args)), 2, "{args:?}");
    }
    assert_eq!(code(&lsc(&["--help"])), 0);
}

#[test]
fn data_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lsc(&["eval", "--corpus-dir", "/nonexistent/corpus"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/corpus"));

    let empty = tmp.path().to_str().unwrap();
    assert_eq!(code(&lsc(&["eval", "--corpus-dir", empty])), 1);

    let bad = tmp.path().join("bad");
    std::fs::create_dir(&bad).unwrap();
    std::fs::write(bad.join("d.jsonl"), "{\"text\": \"fine\"}\nnot json\n").unwrap();
    assert_eq!(code(&lsc(&["eval", "--corpus-dir", bad.to_str().unwrap()])), 1);

    let corpus = small_corpus(tmp.path());
    assert_eq!(code(&lsc(&["ablation", "--corpus-dir", &corpus, "--sizes", "5"])), 1);
    assert_eq!(
        code(&lsc(&["train", "--corpus-dir", &corpus, "--target", "nowhere"])),
        1
    );
}

#[test]
fn kb_build_merge_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let path = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    let build = |domains: &str, out: &str| {
        lsc(&[
            "kb",
            "build",
            "--corpus-dir",
            &corpus,
            "--domains",
            domains,
            "--out",
            out,
        ])
    };
    assert_eq!(code(&build("domain00", &path("a.kb"))), 0);
    assert_eq!(code(&build("domain01,domain02", &path("b.kb"))), 0);
    assert_eq!(code(&build("domain00,domain01,domain02", &path("all.kb"))), 0);
    assert_eq!(
        code(&lsc(&[
            "kb",
            "merge",
            &path("a.kb"),
            &path("b.kb"),
            "--out",
            &path("m.kb")
        ])),
        0
    );
    assert_eq!(
        std::fs::read(path("m.kb")).unwrap(),
        std::fs::read(path("all.kb")).unwrap()
    );

    assert_eq!(code(&lsc(&["kb", "merge", &path("a.kb"), &path("all.kb")])), 1);

    let o = lsc(&["kb", "inspect", &path("m.kb"), "--word", "lex00"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("tasks\t3\n"));
    assert!(text.lines().any(|l| l.starts_with("lex00\t")));
    assert_eq!(
        code(&lsc(&["kb", "inspect", &path("m.kb"), "--word", "absent-word"])),
        1
    );

    let kb = KnowledgeBase::read_from(BufReader::new(File::open(path("m.kb")).unwrap())).unwrap();
    assert_eq!(kb.task_count(), 3);
}

#[test]
fn train_emits_a_readable_model() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let out = tmp.path().join("model.txt");
    let o = lsc(&[
        "train",
        "--corpus-dir",
        &corpus,
        "--target",
        "domain01",
        "--past",
        "domain00",
        "--tau",
        "1",
        "--max-epochs",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = LscModel::read_from(BufReader::new(File::open(&out).unwrap())).unwrap();
    assert_eq!(model.config.tau, 1);
    assert!(model.epochs <= 5);
    assert!(!model.counts.is_empty());
}

#[test]
fn ablation_curve_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = small_corpus(tmp.path());
    let o = lsc(&[
        "ablation",
        "--corpus-dir",
        &corpus,
        "--sizes",
        "0,1,2",
        "--repetitions",
        "2",
    ]);
    assert_eq!(code(&o), 0);
    let rows: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| l.starts_with("(past="))
        .map(str::to_string)
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("(past=0)\tLSC\tf1_negative\t"));
}

#[test]
fn gradcheck_summary() {
    let o = lsc(&["gradcheck", "--seed", "3", "--instances", "50"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("gradcheck passed: 50 instances"));
    // An impossible tolerance must fail with a data exit code.
    let o = lsc(&["gradcheck", "--instances", "20", "--rel-tol", "0", "--abs-tol", "0"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAILED"));
}
