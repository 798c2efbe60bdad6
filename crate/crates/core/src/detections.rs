//! Loading and validation of per-expression symbol detections.
//!
//! Detections come from an external detector, either as a JSON document or as
//! YOLO-style text files (one per image). Coordinates are pixels in image
//! convention: origin at the top-left corner, y growing downward.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label of the horizontal stroke used both for minus signs and fraction bars.
pub const BAR_LABEL: &str = "-";
/// Label of the radical sign.
pub const SQRT_LABEL: &str = "\\sqrt";

/// IoU above which two same-label boxes are treated as one glyph.
pub const DUPLICATE_IOU: f64 = 0.9;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed detection JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown label {label:?} (not in vocabulary)")]
    UnknownLabel { label: String },
    #[error("class id {class_id} is not in the vocabulary")]
    UnknownClass { class_id: u32 },
    #[error("invalid symbol {index} in {image_id:?}: {reason}")]
    InvalidSymbol {
        image_id: String,
        index: usize,
        reason: String,
    },
    #[error("invalid expression {image_id:?}: {reason}")]
    InvalidExpression { image_id: String, reason: String },
    #[error("{file}:{line}: {reason}")]
    Yolo {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("vocabulary line {line}: {reason}")]
    Vocabulary { line: usize, reason: String },
}

/// One detected symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolBox {
    pub label: String,
    pub x_min: f64,
    pub y_min: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default = "full_score")]
    pub score: f64,
}

fn full_score() -> f64 {
    1.0
}

impl SymbolBox {
    pub fn new(label: impl Into<String>, x_min: f64, y_min: f64, width: f64, height: f64) -> Self {
        Self {
            label: label.into(),
            x_min,
            y_min,
            width,
            height,
            score: 1.0,
        }
    }

    /// Builds a box from its corner coordinates.
    pub fn from_corners(label: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(label, x0, y0, x1 - x0, y1 - y0)
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = score;
        self
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.width
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Checks the geometric and score invariants; the label is checked
    /// separately against a vocabulary.
    pub fn check(&self) -> Result<(), String> {
        let fields = [
            ("x_min", self.x_min),
            ("y_min", self.y_min),
            ("width", self.width),
            ("height", self.height),
            ("score", self.score),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("{name} is not finite"));
        }
        if self.width <= 0.0 || self.height <= 0.0 {
            return Err(format!(
                "non-positive extent {}x{}",
                self.width, self.height
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(format!("score {} outside [0, 1]", self.score));
        }
        Ok(())
    }

    /// Intersection over union of two boxes.
    pub fn iou(&self, other: &SymbolBox) -> f64 {
        let ix = (self.x_max().min(other.x_max()) - self.x_min.max(other.x_min)).max(0.0);
        let iy = (self.y_max().min(other.y_max()) - self.y_min.max(other.y_min)).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// The detected symbols of one expression image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expression {
    pub image_id: String,
    pub symbols: Vec<SymbolBox>,
}

impl Expression {
    /// Validates every symbol against `vocab` and drops near-duplicate boxes.
    pub fn validated(mut self, vocab: &Vocabulary) -> Result<Self, DetectionError> {
        if self.image_id.is_empty() {
            return Err(DetectionError::InvalidExpression {
                image_id: self.image_id,
                reason: "empty image_id".into(),
            });
        }
        for (index, symbol) in self.symbols.iter().enumerate() {
            if !vocab.contains_token(&symbol.label) {
                return Err(DetectionError::UnknownLabel {
                    label: symbol.label.clone(),
                });
            }
            symbol
                .check()
                .map_err(|reason| DetectionError::InvalidSymbol {
                    image_id: self.image_id.clone(),
                    index,
                    reason,
                })?;
        }
        if self.symbols.is_empty() {
            return Err(DetectionError::InvalidExpression {
                image_id: self.image_id,
                reason: "no symbols".into(),
            });
        }
        self.symbols = dedup_symbols(self.symbols);
        Ok(self)
    }
}

/// Removes same-label boxes overlapping with IoU above [`DUPLICATE_IOU`],
/// keeping the higher-scoring one (the earlier one on equal scores).
/// Surviving boxes keep their input order.
pub fn dedup_symbols(symbols: Vec<SymbolBox>) -> Vec<SymbolBox> {
    let mut keep = vec![true; symbols.len()];
    for i in 0..symbols.len() {
        if !keep[i] {
            continue;
        }
        for j in (i + 1)..symbols.len() {
            if !keep[j] || symbols[i].label != symbols[j].label {
                continue;
            }
            if symbols[i].iou(&symbols[j]) > DUPLICATE_IOU {
                if symbols[j].score > symbols[i].score {
                    keep[i] = false;
                    break;
                }
                keep[j] = false;
            }
        }
    }
    symbols
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

/// Bijective map between detector class ids and LaTeX tokens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    by_id: BTreeMap<u32, String>,
    by_token: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a class, rejecting duplicate ids and tokens.
    pub fn insert(&mut self, id: u32, token: impl Into<String>) -> Result<(), String> {
        let token = token.into();
        if self.by_id.contains_key(&id) {
            return Err(format!("duplicate id {id}"));
        }
        if self.by_token.contains_key(&token) {
            return Err(format!("duplicate token {token:?}"));
        }
        self.by_id.insert(id, token.clone());
        self.by_token.insert(token, id);
        Ok(())
    }

    /// A default vocabulary covering digits, Latin letters, common operators
    /// and the structural classes.
    pub fn builtin() -> Self {
        let mut tokens: Vec<String> = Vec::new();
        tokens.extend(('0'..='9').map(String::from));
        tokens.extend(('a'..='z').map(String::from));
        tokens.extend(('A'..='Z').map(String::from));
        for t in [
            "+", "-", "=", "(", ")", "[", "]", ",", ".", "<", ">", "/", "!", "|", "'",
        ] {
            tokens.push(t.into());
        }
        for t in [
            "\\sqrt", "\\times", "\\div", "\\pm", "\\cdot", "\\alpha", "\\beta", "\\gamma",
            "\\theta", "\\pi", "\\lambda", "\\mu", "\\sigma", "\\infty", "\\leq", "\\geq",
            "\\neq", "\\{", "\\}",
        ] {
            tokens.push(t.into());
        }
        let mut vocab = Self::new();
        for (id, token) in tokens.into_iter().enumerate() {
            vocab
                .insert(id as u32, token)
                .expect("builtin vocabulary has unique entries");
        }
        vocab
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.by_id.get(&id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.by_token.get(token).copied()
    }

    pub fn contains_token(&self, token: &str) -> bool {
        self.by_token.contains_key(token)
    }

    /// `(id, token)` pairs in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &str)> {
        self.by_id.iter().map(|(id, t)| (*id, t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Whether the structural classes needed for fractions and radicals exist.
    pub fn has_structural_classes(&self) -> bool {
        self.contains_token(BAR_LABEL) && self.contains_token(SQRT_LABEL)
    }

    pub fn to_tsv(&self) -> String {
        self.iter().map(|(id, t)| format!("{id}\t{t}\n")).collect()
    }
}

/// Parses `id<TAB>token` lines. Blank lines are skipped.
pub fn parse_vocabulary(text: &str) -> Result<Vocabulary, DetectionError> {
    let mut vocab = Vocabulary::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, token) = line
            .split_once('\t')
            .ok_or_else(|| DetectionError::Vocabulary {
                line: line_no,
                reason: "expected `id<TAB>token`".into(),
            })?;
        let id: u32 = id.trim().parse().map_err(|_| DetectionError::Vocabulary {
            line: line_no,
            reason: format!("invalid class id {id:?}"),
        })?;
        let token = token.trim_end_matches('\r');
        if token.is_empty() {
            return Err(DetectionError::Vocabulary {
                line: line_no,
                reason: "empty token".into(),
            });
        }
        vocab
            .insert(id, token)
            .map_err(|reason| DetectionError::Vocabulary {
                line: line_no,
                reason,
            })?;
    }
    Ok(vocab)
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary, DetectionError> {
    parse_vocabulary(&read_text(path.as_ref())?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionFile {
    expressions: Vec<Expression>,
}

/// Parses a detection JSON document and validates every expression.
pub fn parse_detections_json(
    text: &str,
    vocab: &Vocabulary,
) -> Result<Vec<Expression>, DetectionError> {
    let file: DetectionFile = serde_json::from_str(text).map_err(|e| DetectionError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    file.expressions
        .into_iter()
        .map(|e| e.validated(vocab))
        .collect()
}

pub fn load_detections_json(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<Vec<Expression>, DetectionError> {
    parse_detections_json(&read_text(path.as_ref())?, vocab)
}

/// Serializes expressions in the detection JSON schema.
pub fn detections_to_json(expressions: &[Expression]) -> String {
    let file = DetectionFile {
        expressions: expressions.to_vec(),
    };
    let mut out = serde_json::to_string_pretty(&file).expect("detections serialize");
    out.push('\n');
    out
}

// serde_json reports 1-based lines and columns; column 0 means "before the
// first character of the line".
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(text.len());
        }
        offset += l.len();
    }
    text.len()
}

fn read_text(path: &Path) -> Result<String, DetectionError> {
    fs::read_to_string(path).map_err(|source| DetectionError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A normalized YOLO detection line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloBox {
    pub class_id: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl YoloBox {
    pub fn parse_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 && fields.len() != 6 {
            return Err(format!("expected 5 or 6 fields, found {}", fields.len()));
        }
        let class_id = fields[0]
            .parse::<u32>()
            .map_err(|_| format!("invalid class id {:?}", fields[0]))?;
        let mut values = [0.0; 5];
        for (slot, raw) in values.iter_mut().zip(&fields[1..]) {
            *slot = raw
                .parse::<f64>()
                .map_err(|_| format!("invalid number {raw:?}"))?;
        }
        if fields.len() == 5 {
            values[4] = 1.0;
        }
        let [cx, cy, w, h, score] = values;
        for (name, v) in [("cx", cx), ("cy", cy), ("w", w), ("h", h), ("score", score)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(Self {
            class_id,
            cx,
            cy,
            w,
            h,
            score,
        })
    }

    /// Pixel box for an image of `image_width` x `image_height` pixels.
    pub fn denormalize(&self, label: impl Into<String>, image_width: f64, image_height: f64) -> SymbolBox {
        SymbolBox {
            label: label.into(),
            x_min: (self.cx - self.w / 2.0) * image_width,
            y_min: (self.cy - self.h / 2.0) * image_height,
            width: self.w * image_width,
            height: self.h * image_height,
            score: self.score,
        }
    }

    /// Inverse of [`YoloBox::denormalize`].
    pub fn normalize(class_id: u32, symbol: &SymbolBox, image_width: f64, image_height: f64) -> Self {
        Self {
            class_id,
            cx: (symbol.x_min + symbol.width / 2.0) / image_width,
            cy: (symbol.y_min + symbol.height / 2.0) / image_height,
            w: symbol.width / image_width,
            h: symbol.height / image_height,
            score: symbol.score,
        }
    }
}

/// Loads every `<image_id>.txt` file in `dir` (sorted by file name) as one
/// expression. Each image id needs an entry in `image_sizes`.
pub fn load_detections_yolo(
    dir: impl AsRef<Path>,
    vocab: &Vocabulary,
    image_sizes: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<Expression>, DetectionError> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|source| DetectionError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|source| DetectionError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if path.extension().is_some_and(|e| e == "txt") {
            files.insert(path);
        }
    }

    let mut expressions = Vec::with_capacity(files.len());
    for path in files {
        let image_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let file = path.display().to_string();
        let &(width, height) =
            image_sizes
                .get(&image_id)
                .ok_or_else(|| DetectionError::InvalidExpression {
                    image_id: image_id.clone(),
                    reason: "no image size given".into(),
                })?;
        let text = read_text(&path)?;
        let mut symbols = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let yolo = YoloBox::parse_line(line).map_err(|reason| DetectionError::Yolo {
                file: file.clone(),
                line: i + 1,
                reason,
            })?;
            let label = vocab
                .token(yolo.class_id)
                .ok_or(DetectionError::UnknownClass {
                    class_id: yolo.class_id,
                })?;
            symbols.push(yolo.denormalize(label, width, height));
        }
        expressions.push(Expression { image_id, symbols }.validated(vocab)?);
    }
    Ok(expressions)
}
