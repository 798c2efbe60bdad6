//! End-to-end tests of the `bsrt` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bsrt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsrt"))
        .args(args)
        .output()
        .expect("running bsrt")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const ONE_SYMBOL: &str = r#"{"expressions":[{"image_id":"one","symbols":[
  {"label":"x","x_min":0,"y_min":0,"width":10,"height":12,"score":0.9}]}]}"#;

#[test]
fn parse_single_symbol() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.json");
    fs::write(&det, ONE_SYMBOL).unwrap();
    let out = bsrt(&["parse", p(&det), "--emit", "both"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let line: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(line["image_id"], "one");
    assert_eq!(line["latex"], "x");
    assert_eq!(line["tokens"], serde_json::json!(["x"]));
    assert!(line["tree"].is_object());
}

#[test]
fn parse_orphan_exits_2_and_names_image() {
    let det = fixtures_root().join("orphan_symbol/detections.json");
    let out = bsrt(&["parse", p(&det)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("orphan:"), "{}", stderr(&out));
    // the well-formed expression is still written
    assert!(stdout(&out).contains("\"single\""));
    assert!(!stdout(&out).contains("\"orphan\""));
}

#[test]
fn parse_unknown_label_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.json");
    fs::write(&det, ONE_SYMBOL.replace("\"x\"", "\"\\\\notatoken\"")).unwrap();
    assert_eq!(bsrt(&["parse", p(&det)]).status.code(), Some(1));
}

#[test]
fn eval_with_missing_ground_truth_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.tsv");
    fs::write(&pred, "a\tx\n").unwrap();
    let out = bsrt(&["eval", p(&pred), p(&dir.path().join("missing.tsv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing.tsv"));
}

#[test]
fn eval_crafted_fixture() {
    let root = fixtures_root().join("crafted_eval");
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let parsed = bsrt(&["parse", p(&root.join("detections.json")), "--out", p(&pred)]);
    assert_eq!(parsed.status.code(), Some(0), "{}", stderr(&parsed));

    let report = dir.path().join("report.json");
    let out = bsrt(&["eval", p(&pred), p(&root.join("gt.tsv")), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = stdout(&out);
    for cell in ["60.00%", "80.00%", "90.00%"] {
        assert!(table.contains(cell), "{table}");
    }
    assert!(!table.contains("67.82%"));
    let written = fs::read_to_string(&report).unwrap();
    assert_eq!(written, fs::read_to_string(root.join("expected.report.json")).unwrap());

    let out = bsrt(&["eval", p(&pred), p(&root.join("gt.tsv")), "--paper-baseline"]);
    let table = stdout(&out);
    assert!(table.contains("67.82%") && table.contains("82.91%") && table.contains("88.37%"), "{table}");
}

#[test]
fn synth_rejects_out_of_range_jitter() {
    let dir = tempfile::tempdir().unwrap();
    let out = bsrt(&["synth", "--jitter", "0.6", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("detections.json").exists());
}

#[test]
fn synth_count_zero_writes_empty_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = bsrt(&["synth", "--count", "0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(dir.path().join("gt.tsv")).unwrap(), "");
    let parsed = bsrt(&["parse", p(&dir.path().join("detections.json"))]);
    assert_eq!(parsed.status.code(), Some(0));
    assert_eq!(stdout(&parsed), "");
}

#[test]
fn synth_then_parse_reproduces_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = bsrt(&["synth", "--seed", "7", "--count", "25", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let pred = dir.path().join("pred.jsonl");
    bsrt(&["parse", p(&dir.path().join("detections.json")), "--out", p(&pred)]);
    let out = bsrt(&["eval", p(&pred), p(&dir.path().join("gt.tsv"))]);
    assert!(stdout(&out).contains("100.00%"), "{}", stdout(&out));
}

#[test]
fn render_two_boxes_one_edge() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.json");
    fs::write(
        &det,
        r#"{"expressions":[{"image_id":"pair","symbols":[
          {"label":"x","x_min":0,"y_min":0,"width":10,"height":10},
          {"label":"y","x_min":20,"y_min":0,"width":10,"height":10}]}]}"#,
    )
    .unwrap();
    let svg_path = dir.path().join("out.svg");
    let out = bsrt(&["render", p(&det), "--out", p(&svg_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<rect").count(), 2);
    assert_eq!(svg.matches("<line").count(), 1);
    assert!(svg.contains(">Right</text>"));

    bsrt(&["render", p(&det), "--no-tree", "--out", p(&svg_path)]);
    assert_eq!(fs::read_to_string(&svg_path).unwrap().matches("<line").count(), 0);
}

#[test]
fn render_empty_expression_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("d.json");
    fs::write(&det, r#"{"expressions":[{"image_id":"empty","symbols":[]}]}"#).unwrap();
    let out = bsrt(&["render", p(&det), "--out", p(&dir.path().join("o.svg"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

fn pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(pixels);
    bytes
}

fn binarize_bytes(input: &[u8]) -> (Output, Option<Vec<u8>>) {
    let dir = tempfile::tempdir().unwrap();
    let (src, dst) = (dir.path().join("in.pgm"), dir.path().join("out.pgm"));
    fs::write(&src, input).unwrap();
    let out = bsrt(&["binarize", p(&src), "--out", p(&dst)]);
    let written = fs::read(&dst).ok();
    (out, written)
}

#[test]
fn binarize_constant_image() {
    let (out, written) = binarize_bytes(&pgm(4, 2, &[128; 8]));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stderr(&out).contains("threshold 128"));
    let written = written.unwrap();
    let body = &written[written.len() - 8..];
    assert!(body.iter().all(|&v| v == body[0]));
}

#[test]
fn binarize_bimodal_image() {
    let pixels = [10, 12, 11, 240, 245, 250, 9, 244];
    let (out, written) = binarize_bytes(&pgm(4, 2, &pixels));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(written.unwrap(), pgm(4, 2, &[0, 0, 0, 255, 255, 255, 0, 255]));
}

#[test]
fn binarize_truncated_pgm_exits_1() {
    let mut bytes = pgm(4, 2, &[1, 2, 3, 4, 5, 6, 7, 8]);
    bytes.truncate(bytes.len() - 3);
    let (out, written) = binarize_bytes(&bytes);
    assert_eq!(out.status.code(), Some(1));
    assert!(written.is_none());
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

#[test]
fn fixture_corpus_passes() {
    let out = bsrt(&["fixtures", p(&fixtures_root())]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn corrupted_fixture_fails_alone_and_bless_restores_it() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures_root(), dir.path());
    let latex = dir.path().join("figure4_line3/expected.latex");
    let original = fs::read_to_string(&latex).unwrap();
    fs::write(&latex, original.replacen("BD", "BE", 1)).unwrap();

    let out = bsrt(&["fixtures", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    let failures: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert_eq!(failures.len(), 1, "{text}");
    assert!(failures[0].contains("figure4_line3") && failures[0].contains("expected.latex"));

    let out = bsrt(&["fixtures", p(dir.path()), "--bless"]);
    assert_eq!(stdout(&out).trim(), "blessed figure4_line3");
    assert_eq!(fs::read_to_string(&latex).unwrap(), original);
    assert_eq!(bsrt(&["fixtures", p(dir.path())]).status.code(), Some(0));
}
