use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const N_QUERIES: usize = 12;
const VOCAB: usize = 20;

fn clir(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clir"))
        .current_dir(dir)
        .env_remove("CLIR_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = clir(dir, args);
    assert!(
        out.status.success(),
        "clir {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = clir(dir, args);
    assert!(!out.status.success(), "clir {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

const DIM: usize = 8;

fn src_vector(i: usize) -> Vec<f64> {
    (0..DIM).map(|k| (1.7 * (i * (k + 1)) as f64 + k as f64).sin()).collect()
}

fn line(token: String, v: &[f64]) -> String {
    v.iter().fold(token, |mut s, x| {
        write!(s, " {x:.6}").unwrap();
        s
    })
}

/// A small bilingual world: target vectors are a fixed rotation of the
/// source vectors, query j asks for source term j and document j is the
/// only one that contains its translation twice.
fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let (mut src, mut tgt, mut dict) = (String::new(), String::new(), String::new());
    writeln!(src, "{VOCAB} {DIM}").unwrap();
    writeln!(tgt, "{VOCAB} {DIM}").unwrap();
    for i in 0..VOCAB {
        let v = src_vector(i);
        let r: Vec<f64> = (0..DIM).map(|k| if k % 2 == 0 { -v[k + 1] } else { v[k - 1] }).collect();
        writeln!(src, "{}", line(format!("s{i}"), &v)).unwrap();
        writeln!(tgt, "{}", line(format!("t{i}"), &r)).unwrap();
        writeln!(dict, "s{i}\tt{i}").unwrap();
    }
    let (mut docs, mut queries, mut qrels, mut pairs) =
        (String::new(), String::new(), String::new(), String::new());
    for j in 0..N_QUERIES {
        writeln!(
            docs,
            "d{j:02}\tt{j} filler words. Another sentence with t{a}! And t{j} again.",
            a = (j + 5) % VOCAB
        )
        .unwrap();
        writeln!(queries, "q{j:02}\ts{j}").unwrap();
        writeln!(qrels, "q{j:02} 0 d{j:02} 1").unwrap();
        writeln!(pairs, "q{j:02}\td{j:02}").unwrap();
    }
    for (name, body) in [
        ("src.txt", src),
        ("tgt.txt", tgt),
        ("dict.tsv", dict),
        ("docs.tsv", docs),
        ("queries.tsv", queries),
        ("qrels.txt", qrels),
        ("pairs.tsv", pairs),
    ] {
        std::fs::write(p.join(name), body).unwrap();
    }
    dir
}

fn rank_args<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "rank", "--queries", "queries.tsv", "--docs", "docs.tsv", "--src-emb", "src.txt",
        "--tgt-emb", "tgt.txt",
    ];
    v.extend_from_slice(extra);
    v
}

fn map_of(dir: &Path, run: &str) -> f64 {
    let out = ok(dir, &["eval", run, "--qrels", "qrels.txt"]);
    let line = out.lines().find(|l| l.starts_with("MAP")).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn convert_round_trips_between_containers() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["convert", "--input", "src.txt", "--output", "src.emb", "--to", "binary"]);
    assert_eq!(&std::fs::read(p.join("src.emb")).unwrap()[..4], b"EMB1");
    ok(p, &["convert", "--input", "src.emb", "--output", "back.txt", "--to", "text"]);
    assert_eq!(
        std::fs::read_to_string(p.join("src.txt")).unwrap(),
        std::fs::read_to_string(p.join("back.txt")).unwrap()
    );
}

#[test]
fn alignment_recovers_the_rotation_and_enables_retrieval() {
    let dir = fixture();
    let p = dir.path();
    let report = ok(
        p,
        &["align", "--dict", "dict.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"],
    );
    assert!(report.starts_with("# clir align seed=42\n"), "{report}");
    let residual: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("residual\t"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-4, "{report}");

    ok(p, &rank_args(&["--out", "plain.run"]));
    ok(p, &rank_args(&["--projection", "w.emb", "--out", "aligned.run"]));
    assert!(map_of(p, "aligned.run") > 0.99);
    assert!(map_of(p, "plain.run") < map_of(p, "aligned.run"));

    let boot = ok(
        p,
        &[
            "align", "--method", "proc-b", "--iterations", "2", "--dict", "dict.tsv", "--src",
            "src.txt", "--tgt", "tgt.txt", "--out", "wb.emb", "--dict-out", "grown.tsv",
        ],
    );
    assert!(boot.contains("rounds\t"), "{boot}");
    assert!(p.join("grown.tsv").exists());
}

#[test]
fn missing_dictionary_is_reported_by_path() {
    let dir = fixture();
    let err = fails(
        dir.path(),
        &["align", "--dict", "nope.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"],
    );
    assert!(err.contains("nope.tsv"), "{err}");
    assert!(!dir.path().join("w.emb").exists());
}

#[test]
fn ranking_is_byte_identical_across_runs() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &rank_args(&["--out", "a.run"]));
    ok(p, &rank_args(&["--out", "b.run"]));
    let a = std::fs::read(p.join("a.run")).unwrap();
    assert_eq!(a, std::fs::read(p.join("b.run")).unwrap());
    let text = String::from_utf8(a).unwrap();
    let first = text.lines().next().unwrap();
    let fields: Vec<&str> = first.split(' ').collect();
    assert_eq!(fields.len(), 6);
    assert_eq!(fields[1], "Q0");
    assert_eq!(fields[3], "1");
    assert_eq!(fields[4].split('.').nth(1).unwrap().len(), 6);
}

#[test]
fn localized_and_lexical_rankings_run() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["align", "--dict", "dict.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"]);
    ok(
        p,
        &rank_args(&[
            "--projection", "w.emb", "--granularity", "segment", "--k", "2", "--window", "4",
            "--stride", "2", "--out", "seg.run",
        ]),
    );
    ok(
        p,
        &rank_args(&["--projection", "w.emb", "--granularity", "sentence", "--k", "3", "--out", "sent.run"]),
    );
    for run in ["seg.run", "sent.run"] {
        assert!(map_of(p, run) > 0.5, "{run}");
    }
    // documents use the target vocabulary, so lexical matching of source
    // queries finds nothing useful but still ranks every document
    ok(p, &rank_args(&["--method", "qlm", "--mu", "1000", "--out", "qlm.run"]));
    let lines = std::fs::read_to_string(p.join("qlm.run")).unwrap().lines().count();
    assert_eq!(lines, N_QUERIES * N_QUERIES);
}

fn write_emb1(path: &Path, dim: usize, entries: &[(String, Vec<f64>)]) {
    let mut b = b"EMB1".to_vec();
    b.extend((entries.len() as u32).to_le_bytes());
    b.extend((dim as u32).to_le_bytes());
    for (token, v) in entries {
        b.extend((token.len() as u16).to_le_bytes());
        b.extend(token.as_bytes());
        for x in v {
            b.extend((*x as f32).to_le_bytes());
        }
    }
    std::fs::write(path, b).unwrap();
}

fn rotate(v: &[f64]) -> Vec<f64> {
    (0..DIM).map(|k| if k % 2 == 0 { -v[k + 1] } else { v[k - 1] }).collect()
}

#[test]
fn semb_reads_part_keyed_containers() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["align", "--dict", "dict.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"]);
    let mut queries = Vec::new();
    let mut docs = Vec::new();
    let mut sentences = Vec::new();
    for j in 0..N_QUERIES {
        let key = format!("q{j:02}\u{1}1");
        queries.push((format!("{key}\u{2}0\u{2}s{j}"), src_vector(j)));
        queries.push((format!("{key}\u{2}start"), vec![0.0; DIM]));
        queries.push((format!("{key}\u{2}end"), vec![0.0; DIM]));
        let t = rotate(&src_vector(j));
        docs.push((format!("d{j:02}\u{1}1"), t.clone()));
        sentences.push((format!("d{j:02}\u{1}1"), rotate(&src_vector(VOCAB + j))));
        sentences.push((format!("d{j:02}\u{1}2"), t));
    }
    write_emb1(&p.join("q.parts"), DIM, &queries);
    write_emb1(&p.join("d.parts"), DIM, &docs);
    write_emb1(&p.join("s.parts"), DIM, &sentences);
    let semb = [
        "rank", "--queries", "queries.tsv", "--docs", "docs.tsv", "--encoding", "SEMB",
        "--query-parts", "q.parts", "--projection", "w.emb",
    ];
    let mut doc_level = semb.to_vec();
    doc_level.extend(["--doc-parts", "d.parts", "--out", "semb.run"]);
    ok(p, &doc_level);
    assert!(map_of(p, "semb.run") > 0.99);
    let mut sentence_level = semb.to_vec();
    sentence_level.extend(["--doc-parts", "s.parts", "--granularity", "sentence", "--out", "sent.run"]);
    ok(p, &sentence_level);
    assert!(map_of(p, "sent.run") > 0.99);
    // several parts per document cannot be read as whole documents
    let mut wrong = semb.to_vec();
    wrong.extend(["--doc-parts", "s.parts", "--out", "bad.run"]);
    let err = fails(p, &wrong);
    assert!(err.contains("granularity"), "{err}");
}

#[test]
fn invalid_settings_are_rejected_before_work() {
    let dir = fixture();
    let p = dir.path();
    let err = fails(p, &rank_args(&["--max-seq-len", "100", "--out", "x.run"]));
    assert!(err.contains("max-seq-len"), "{err}");
    let err = fails(p, &rank_args(&["--encoding", "SEMB", "--out", "x.run"]));
    assert!(err.contains("SEMB"), "{err}");
    let err = fails(p, &rank_args(&["--stride", "200", "--out", "x.run"]));
    assert!(err.contains("stride"), "{err}");
    assert!(!p.join("x.run").exists());
}

#[test]
fn eval_compares_runs_and_lists_mismatched_queries() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["align", "--dict", "dict.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"]);
    ok(p, &rank_args(&["--out", "base.run"]));
    ok(p, &rank_args(&["--projection", "w.emb", "--out", "aligned.run"]));
    let table = ok(
        p,
        &[
            "eval", "base.run", "aligned.run", "--qrels", "qrels.txt", "--bonferroni-m", "9",
            "--alpha", "0.05", "--out", "table.txt", "--jsonl", "eval.jsonl",
        ],
    );
    assert!(table.contains("aligned.run vs base.run: t="), "{table}");
    assert!(table.contains("m=9"), "{table}");
    assert!(table.lines().next().unwrap().contains("seed=42"));
    let records: Vec<serde_json::Value> = std::fs::read_to_string(p.join("eval.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2 * N_QUERIES + 2);
    let footer = records.last().unwrap();
    assert_eq!(footer["baseline"], "base.run");
    assert!(footer["p"].as_f64().unwrap() < 0.05);

    // drop one query from a copy of the run
    let text = std::fs::read_to_string(p.join("aligned.run")).unwrap();
    let cut: String = text.lines().filter(|l| !l.starts_with("q03 ")).map(|l| format!("{l}\n")).collect();
    std::fs::write(p.join("cut.run"), cut).unwrap();
    let err = fails(p, &["eval", "base.run", "cut.run", "--qrels", "qrels.txt"]);
    assert!(err.contains("only in base.run: [q03]"), "{err}");
}

#[test]
fn rerank_moves_externally_scored_documents_up() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &rank_args(&["--out", "base.run"]));
    std::fs::write(p.join("scores.tsv"), "q00\td11\t5.0\n").unwrap();
    ok(p, &["rerank", "--run", "base.run", "--scores", "scores.tsv", "--top-n", "100", "--out", "re.run"]);
    let text = std::fs::read_to_string(p.join("re.run")).unwrap();
    let first = text.lines().find(|l| l.starts_with("q00 ")).unwrap();
    assert!(first.contains(" d11 1 "), "{first}");
}

#[test]
fn finetune_writes_fold_adapters_and_a_complete_run() {
    let dir = fixture();
    let p = dir.path();
    ok(p, &["align", "--dict", "dict.tsv", "--src", "src.txt", "--tgt", "tgt.txt", "--out", "w.emb"]);
    let args = [
        "finetune", "--queries", "queries.tsv", "--docs", "docs.tsv", "--src-emb", "src.txt",
        "--tgt-emb", "tgt.txt", "--projection", "w.emb", "--pairs", "pairs.tsv", "--folds", "3",
        "--batch", "4", "--epochs", "3", "--out-dir", "ft",
    ];
    let report = ok(p, &args);
    assert!(report.starts_with("# clir finetune seed=42"), "{report}");
    for f in 0..3 {
        assert!(p.join(format!("ft/adapter_fold{f:02}.emb")).exists());
    }
    let run = std::fs::read_to_string(p.join("ft/finetuned.run")).unwrap();
    let mut queries: Vec<&str> = run.lines().map(|l| l.split(' ').next().unwrap()).collect();
    queries.dedup();
    assert_eq!(queries.len(), N_QUERIES);

    let first = std::fs::read(p.join("ft/adapter_fold00.emb")).unwrap();
    ok(p, &args);
    assert_eq!(first, std::fs::read(p.join("ft/adapter_fold00.emb")).unwrap());

    // a fold adapter can be used for ranking
    ok(p, &rank_args(&["--projection", "w.emb", "--adapter", "ft/adapter_fold00.emb", "--out", "a.run"]));
}

#[test]
fn failed_finetune_leaves_no_outputs() {
    let dir = fixture();
    let p = dir.path();
    let err = fails(
        p,
        &[
            "finetune", "--queries", "queries.tsv", "--docs", "docs.tsv", "--src-emb", "src.txt",
            "--tgt-emb", "tgt.txt", "--pairs", "pairs.tsv", "--folds", "50", "--out-dir", "ft",
        ],
    );
    assert!(err.contains("folds"), "{err}");
    assert!(!p.join("ft").exists() || std::fs::read_dir(p.join("ft")).unwrap().count() == 0);
}

#[test]
fn position_histogram_has_eleven_bins() {
    let dir = fixture();
    let p = dir.path();
    ok(
        p,
        &rank_args(&[])
            .into_iter()
            .skip(1)
            .chain(["--granularity", "sentence", "--top", "100", "--out", "pos.tsv"])
            .fold(vec!["analyze", "positions"], |mut v, a| {
                v.push(a);
                v
            }),
    );
    let text = std::fs::read_to_string(p.join("pos.tsv")).unwrap();
    let rows: Vec<(&str, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("position"))
        .map(|l| {
            let (a, b) = l.split_once('\t').unwrap();
            (a, b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[10].0, ">10");
    assert!((rows.iter().map(|r| r.1).sum::<f64>() - 1.0).abs() < 1e-5);
}

#[test]
fn stats_reports_parts_per_document() {
    let dir = fixture();
    let out = ok(dir.path(), &["stats", "--docs", "docs.tsv", "--granularity", "sentence"]);
    let row = out.lines().find(|l| l.starts_with("sentence")).unwrap();
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols, vec!["sentence", "12", "36", "3.00"]);
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = fixture();
    let p = dir.path();
    std::fs::write(p.join("exp.cfg"), "# experiment\nseed = 7\ngranularity = sentence\nk = 3\nout = cfg.run\n").unwrap();
    let report = ok(p, &["--config", "exp.cfg", "rank", "--queries", "queries.tsv", "--docs", "docs.tsv", "--src-emb", "src.txt", "--tgt-emb", "tgt.txt", "--k", "2"]);
    assert!(report.starts_with("# clir rank seed=7"), "{report}");
    assert!(report.contains("granularity=sentence k=2"), "{report}");
    assert!(p.join("cfg.run").exists());

    std::fs::write(p.join("bad.cfg"), "colour = blue\n").unwrap();
    let err = fails(p, &["--config", "bad.cfg", "stats", "--docs", "docs.tsv"]);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn output_directory_override_applies_to_relative_paths() {
    let dir = fixture();
    let p = dir.path();
    let target: PathBuf = p.join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_clir"))
        .current_dir(p)
        .env("CLIR_OUTPUT_DIR", &target)
        .args(["convert", "--input", "src.txt", "--output", "src.emb", "--to", "binary"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(target.join("src.emb").exists());
    assert!(!p.join("src.emb").exists());
}
