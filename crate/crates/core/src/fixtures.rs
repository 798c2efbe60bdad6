//! Versioned end-to-end fixtures.
//!
//! A fixture is a directory holding `detections.json` and `gt.tsv` plus the
//! pipeline outputs they are expected to produce: `expected.latex` (one
//! `image_id<TAB>latex` line per expression, or `image_id<TAB>! <error>` for
//! a structural failure) and `expected.report.json` (the evaluation report).
//! [`check_fixtures`] regenerates both and compares bytes; only [`bless`]
//! rewrites them.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::detections::{parse_detections_json, Vocabulary};
use crate::emitter::TokenSequence;
use crate::metrics::{evaluate, parse_ground_truth_tsv};
use crate::relations::RuleConfig;
use crate::recognize;

pub const DETECTIONS_FILE: &str = "detections.json";
pub const GROUND_TRUTH_FILE: &str = "gt.tsv";
pub const EXPECTED_LATEX_FILE: &str = "expected.latex";
pub const EXPECTED_REPORT_FILE: &str = "expected.report.json";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{name}: {message}")]
    Pipeline { name: String, message: String },
    #[error("{name}: {file} differs at line {line}\n  expected: {expected}\n  actual:   {actual}")]
    Mismatch {
        name: String,
        file: String,
        line: usize,
        expected: String,
        actual: String,
    },
}

/// Regenerated contents of a fixture's expected files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureOutput {
    pub latex: String,
    pub report: String,
    /// Predicted tokens per image_id, failures omitted.
    pub predictions: Vec<(String, TokenSequence)>,
}

#[derive(Debug)]
pub struct FixtureResult {
    pub name: String,
    pub outcome: Result<(), FixtureError>,
}

fn read(path: &Path) -> Result<String, FixtureError> {
    fs::read_to_string(path).map_err(|e| FixtureError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn fixture_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Runs parsing and evaluation over one fixture directory.
pub fn run_fixture(
    dir: &Path,
    vocab: &Vocabulary,
    config: &RuleConfig,
) -> Result<FixtureOutput, FixtureError> {
    let name = fixture_name(dir);
    let pipeline = |message: String| FixtureError::Pipeline {
        name: name.clone(),
        message,
    };
    let expressions = parse_detections_json(&read(&dir.join(DETECTIONS_FILE))?, vocab)
        .map_err(|e| pipeline(e.to_string()))?;
    let gts = parse_ground_truth_tsv(&read(&dir.join(GROUND_TRUTH_FILE))?)
        .map_err(|e| pipeline(e.to_string()))?;

    let mut latex = String::new();
    let mut predictions = Vec::new();
    for expr in &expressions {
        match recognize(&expr.symbols, config) {
            Ok((_, tokens)) => {
                latex.push_str(&format!("{}\t{}\n", expr.image_id, tokens.render()));
                predictions.push((expr.image_id.clone(), tokens));
            }
            Err(e) => latex.push_str(&format!("{}\t! {e}\n", expr.image_id)),
        }
    }
    let report = evaluate(&predictions, &gts).map_err(|e| pipeline(e.to_string()))?;
    Ok(FixtureOutput {
        latex,
        report: report.to_json(),
        predictions,
    })
}

/// Fixture directories under `root`, sorted by name.
pub fn fixture_dirs(root: &Path) -> Result<Vec<PathBuf>, FixtureError> {
    let entries = fs::read_dir(root).map_err(|e| FixtureError::Io {
        path: root.display().to_string(),
        message: e.to_string(),
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(DETECTIONS_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// First line where `expected` and `actual` differ (1-based), if any.
pub fn first_difference(expected: &str, actual: &str) -> Option<(usize, String, String)> {
    if expected == actual {
        return None;
    }
    let mut e = expected.split_inclusive('\n');
    let mut a = actual.split_inclusive('\n');
    let mut line = 1;
    loop {
        match (e.next(), a.next()) {
            (Some(x), Some(y)) if x == y => line += 1,
            (x, y) => {
                let show = |s: Option<&str>| {
                    s.map_or("<end of file>".to_string(), |s| format!("{s:?}"))
                };
                return Some((line, show(x), show(y)));
            }
        }
    }
}

pub fn check_fixture(dir: &Path, vocab: &Vocabulary, config: &RuleConfig) -> Result<(), FixtureError> {
    let name = fixture_name(dir);
    let output = run_fixture(dir, vocab, config)?;
    for (file, actual) in [
        (EXPECTED_LATEX_FILE, &output.latex),
        (EXPECTED_REPORT_FILE, &output.report),
    ] {
        let expected = read(&dir.join(file))?;
        if let Some((line, expected, actual)) = first_difference(&expected, actual) {
            return Err(FixtureError::Mismatch {
                name,
                file: file.to_string(),
                line,
                expected,
                actual,
            });
        }
    }
    Ok(())
}

/// Checks every fixture under `root` and reports each one separately.
pub fn check_fixtures(
    root: &Path,
    vocab: &Vocabulary,
    config: &RuleConfig,
) -> Result<Vec<FixtureResult>, FixtureError> {
    Ok(fixture_dirs(root)?
        .into_iter()
        .map(|dir| FixtureResult {
            name: fixture_name(&dir),
            outcome: check_fixture(&dir, vocab, config),
        })
        .collect())
}

/// Rewrites the expected files of every fixture under `root`. Returns the
/// names of fixtures whose files changed.
pub fn bless(root: &Path, vocab: &Vocabulary, config: &RuleConfig) -> Result<Vec<String>, FixtureError> {
    let mut changed = Vec::new();
    for dir in fixture_dirs(root)? {
        let output = run_fixture(&dir, vocab, config)?;
        let mut dirty = false;
        for (file, contents) in [
            (EXPECTED_LATEX_FILE, &output.latex),
            (EXPECTED_REPORT_FILE, &output.report),
        ] {
            let path = dir.join(file);
            if fs::read_to_string(&path).ok().as_ref() != Some(contents) {
                fs::write(&path, contents).map_err(|e| FixtureError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                dirty = true;
            }
        }
        if dirty {
            changed.push(fixture_name(&dir));
        }
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_difference_positions() {
        assert_eq!(first_difference("a\nb\n", "a\nb\n"), None);
        let (line, e, a) = first_difference("a\nb\n", "a\nc\n").unwrap();
        assert_eq!((line, e.as_str(), a.as_str()), (2, "\"b\\n\"", "\"c\\n\""));
        assert_eq!(first_difference("a\n", "a\nb\n").unwrap().0, 2);
        assert_eq!(first_difference("a", "a\n").unwrap().0, 1);
    }
}
