//! Synthetic expression layouts with known answers.
//!
//! [`random_ast`] draws an expression, [`layout`] places one box per symbol
//! so that the default relation rules recover the structure, and
//! [`latex_of_ast`] prints the expected tokens directly from the AST.
//!
//! Placement contract, at script level k with glyph size `g = base * s^k`:
//! glyphs are `g x g` squares centered on the row axis (a minus leaf is a
//! `g x 0.12g` stroke); row items are separated by `gap * s^k`; a fraction
//! bar is `0.12g` thick, `0.2g` wider than its widest part on each side, with
//! numerator and denominator `0.2g` away and horizontally centered; a radical
//! box encloses its radicand with `0.3g`/`0.15g` side padding and `0.2g`
//! vertical padding, symmetric about the axis. The first unit of a script row
//! sits at 45 degrees from its base's center, and far enough from it that
//! every script unit stays outside the baseline return band.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::detections::{SymbolBox, Vocabulary, BAR_LABEL, SQRT_LABEL};
use crate::emitter::{TokenSequence, FRAC};

const BAR_THICKNESS: f64 = 0.12;
const FRAC_PAD: f64 = 0.2;
const FRAC_GAP: f64 = 0.2;
const SQRT_LEFT_PAD: f64 = 0.3;
const SQRT_RIGHT_PAD: f64 = 0.15;
const SQRT_VERTICAL_PAD: f64 = 0.2;
const SCRIPT_GAP: f64 = 0.4;
/// Distance of the whole layout from the image origin.
pub const MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid layout parameters: {0}")]
    Params(String),
    #[error("invalid expression: {0}")]
    Ast(String),
    #[error("glyphs at script level {level} would be {size} px, below 1 px")]
    Illegible { level: u32, size: String },
    #[error("cannot parse LaTeX into an expression: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprAst {
    Symbol(String),
    Row(Vec<ExprAst>),
    Frac(Box<ExprAst>, Box<ExprAst>),
    Sqrt(Box<ExprAst>),
    Scripted {
        base: Box<ExprAst>,
        sup: Option<Box<ExprAst>>,
        sub: Option<Box<ExprAst>>,
    },
}

impl ExprAst {
    pub fn symbol(token: impl Into<String>) -> Self {
        Self::Symbol(token.into())
    }

    pub fn frac(num: ExprAst, den: ExprAst) -> Self {
        Self::Frac(Box::new(num), Box::new(den))
    }

    pub fn sqrt(inner: ExprAst) -> Self {
        Self::Sqrt(Box::new(inner))
    }

    pub fn scripted(base: ExprAst, sup: Option<ExprAst>, sub: Option<ExprAst>) -> Self {
        Self::Scripted {
            base: Box::new(base),
            sup: sup.map(Box::new),
            sub: sub.map(Box::new),
        }
    }

    /// Symbols count 1, rows take their deepest item, and every fraction,
    /// radical or script level adds 1.
    pub fn depth(&self) -> usize {
        match self {
            Self::Symbol(_) => 1,
            Self::Row(items) => items.iter().map(Self::depth).max().unwrap_or(0),
            Self::Frac(n, d) => 1 + n.depth().max(d.depth()),
            Self::Sqrt(inner) => 1 + inner.depth(),
            Self::Scripted { base, sup, sub } => {
                1 + base
                    .depth()
                    .max(sup.as_ref().map_or(0, |s| s.depth()))
                    .max(sub.as_ref().map_or(0, |s| s.depth()))
            }
        }
    }

    /// Number of boxes [`layout`] produces: one per leaf and one per bar.
    pub fn box_count(&self) -> usize {
        match self {
            Self::Symbol(_) => 1,
            Self::Row(items) => items.iter().map(Self::box_count).sum(),
            Self::Frac(n, d) => 1 + n.box_count() + d.box_count(),
            Self::Sqrt(inner) => 1 + inner.box_count(),
            Self::Scripted { base, sup, sub } => {
                base.box_count()
                    + sup.as_ref().map_or(0, |s| s.box_count())
                    + sub.as_ref().map_or(0, |s| s.box_count())
            }
        }
    }

    /// Checks the structural invariants and the layout grammar: scripts sit
    /// on a single symbol, and a symbol with both scripts has flat symbol
    /// rows in both.
    pub fn validate(&self) -> Result<(), SynthError> {
        match self {
            Self::Symbol(t) => {
                let reserved = ["{", "}", "^", "_", SQRT_LABEL, FRAC];
                if t.is_empty() || t.chars().any(char::is_whitespace) || reserved.contains(&t.as_str())
                {
                    return Err(SynthError::Ast(format!("{t:?} cannot be a leaf symbol")));
                }
                Ok(())
            }
            Self::Row(items) => {
                if items.is_empty() {
                    return Err(SynthError::Ast("empty row".into()));
                }
                items.iter().try_for_each(Self::validate)
            }
            Self::Frac(n, d) => {
                n.validate()?;
                d.validate()
            }
            Self::Sqrt(inner) => inner.validate(),
            Self::Scripted { base, sup, sub } => {
                if !matches!(**base, Self::Symbol(_)) {
                    return Err(SynthError::Ast("script base must be a single symbol".into()));
                }
                base.validate()?;
                if sup.is_none() && sub.is_none() {
                    return Err(SynthError::Ast("scripted node without scripts".into()));
                }
                for s in sup.iter().chain(sub) {
                    s.validate()?;
                }
                if let (Some(a), Some(b)) = (sup, sub) {
                    if !a.is_flat() || !b.is_flat() {
                        return Err(SynthError::Ast(
                            "a symbol with both scripts needs plain symbol rows in each".into(),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    fn is_flat(&self) -> bool {
        match self {
            Self::Symbol(_) => true,
            Self::Row(items) => items.iter().all(Self::is_flat),
            _ => false,
        }
    }
}

/// Canonical tokens of an AST: `\frac{n}{d}`, `\sqrt{r}`, and a base
/// followed by `^{..}` then `_{..}`.
pub fn latex_of_ast(ast: &ExprAst) -> TokenSequence {
    let mut out = TokenSequence::new();
    print_ast(ast, &mut out);
    out
}

fn print_braced(ast: &ExprAst, out: &mut TokenSequence) {
    out.push("{");
    print_ast(ast, out);
    out.push("}");
}

fn print_ast(ast: &ExprAst, out: &mut TokenSequence) {
    match ast {
        ExprAst::Symbol(t) => out.push(t.clone()),
        ExprAst::Row(items) => items.iter().for_each(|i| print_ast(i, out)),
        ExprAst::Frac(n, d) => {
            out.push(FRAC);
            print_braced(n, out);
            print_braced(d, out);
        }
        ExprAst::Sqrt(inner) => {
            out.push(SQRT_LABEL);
            print_braced(inner, out);
        }
        ExprAst::Scripted { base, sup, sub } => {
            print_ast(base, out);
            if let Some(s) = sup {
                out.push("^");
                print_braced(s, out);
            }
            if let Some(s) = sub {
                out.push("_");
                print_braced(s, out);
            }
        }
    }
}

/// Reads canonical tokens back into an AST. Scripts may come in either order.
pub fn parse_ast(tokens: &TokenSequence) -> Result<ExprAst, SynthError> {
    let toks = tokens.tokens();
    let mut pos = 0;
    let row = parse_row(toks, &mut pos)?;
    if pos != toks.len() {
        return Err(SynthError::Parse(format!("unexpected {:?} at token {pos}", toks[pos])));
    }
    row.validate()?;
    Ok(row)
}

fn parse_row(toks: &[String], pos: &mut usize) -> Result<ExprAst, SynthError> {
    let mut items = Vec::new();
    while *pos < toks.len() && toks[*pos] != "}" {
        items.push(parse_item(toks, pos)?);
    }
    if items.is_empty() {
        return Err(SynthError::Parse(format!("empty group at token {pos}")));
    }
    Ok(ExprAst::Row(items))
}

fn parse_group(toks: &[String], pos: &mut usize) -> Result<ExprAst, SynthError> {
    if toks.get(*pos).map(String::as_str) != Some("{") {
        return Err(SynthError::Parse(format!("expected {{ at token {pos}")));
    }
    *pos += 1;
    let row = parse_row(toks, pos)?;
    if toks.get(*pos).map(String::as_str) != Some("}") {
        return Err(SynthError::Parse(format!("expected }} at token {pos}")));
    }
    *pos += 1;
    Ok(row)
}

fn parse_item(toks: &[String], pos: &mut usize) -> Result<ExprAst, SynthError> {
    let tok = toks[*pos].clone();
    *pos += 1;
    let item = match tok.as_str() {
        FRAC => {
            let n = parse_group(toks, pos)?;
            let d = parse_group(toks, pos)?;
            ExprAst::frac(n, d)
        }
        SQRT_LABEL => ExprAst::sqrt(parse_group(toks, pos)?),
        "{" | "^" | "_" => {
            return Err(SynthError::Parse(format!("unexpected {tok:?} at token {}", *pos - 1)))
        }
        _ => ExprAst::Symbol(tok),
    };
    let (mut sup, mut sub) = (None, None);
    while let Some(marker) = toks.get(*pos).map(String::as_str) {
        let slot = match marker {
            "^" => &mut sup,
            "_" => &mut sub,
            _ => break,
        };
        if slot.is_some() {
            return Err(SynthError::Parse(format!("double script at token {pos}")));
        }
        *pos += 1;
        *slot = Some(parse_group(toks, pos)?);
    }
    if sup.is_none() && sub.is_none() {
        Ok(item)
    } else {
        Ok(ExprAst::scripted(item, sup, sub))
    }
}

/// Leaf tokens available to [`random_ast`]: the vocabulary without the
/// structural classes, in class-id order.
pub fn leaf_tokens(vocab: &Vocabulary) -> Vec<String> {
    vocab
        .iter()
        .map(|(_, t)| t)
        .filter(|t| *t != BAR_LABEL && *t != SQRT_LABEL)
        .map(String::from)
        .collect()
}

/// Draws an expression of depth at most `max_depth`. The top level is a row
/// of 1 to 4 items; nested rows hold 1 to 3.
pub fn random_ast(seed: u64, max_depth: usize, vocab: &Vocabulary) -> Result<ExprAst, SynthError> {
    if max_depth == 0 {
        return Err(SynthError::Params("max depth must be at least 1".into()));
    }
    let leaves = leaf_tokens(vocab);
    if leaves.is_empty() {
        return Err(SynthError::Params("vocabulary has no leaf symbols".into()));
    }
    let mut gen = AstGen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        leaves,
    };
    Ok(gen.row(max_depth, 4))
}

/// Per-expression seeds for a batch, drawn from one generator seeded with `seed`.
pub fn expression_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.gen()).collect()
}

struct AstGen {
    rng: ChaCha8Rng,
    leaves: Vec<String>,
}

impl AstGen {
    fn leaf(&mut self) -> ExprAst {
        ExprAst::Symbol(
            self.leaves
                .choose(&mut self.rng)
                .expect("leaves are non-empty")
                .clone(),
        )
    }

    fn row(&mut self, depth: usize, max_len: usize) -> ExprAst {
        let n = self.rng.gen_range(1..=max_len);
        ExprAst::Row((0..n).map(|_| self.item(depth)).collect())
    }

    fn flat_row(&mut self) -> ExprAst {
        let n = self.rng.gen_range(1..=3);
        ExprAst::Row((0..n).map(|_| self.leaf()).collect())
    }

    fn item(&mut self, depth: usize) -> ExprAst {
        if depth <= 1 {
            return self.leaf();
        }
        match self.rng.gen_range(0..100) {
            0..=39 => self.leaf(),
            40..=59 => {
                let n = self.row(depth - 1, 3);
                let d = self.row(depth - 1, 3);
                ExprAst::frac(n, d)
            }
            60..=74 => ExprAst::sqrt(self.row(depth - 1, 3)),
            _ => {
                let base = self.leaf();
                match self.rng.gen_range(0..4) {
                    0 | 1 => {
                        let sup = self.row(depth - 1, 3);
                        ExprAst::scripted(base, Some(sup), None)
                    }
                    2 => {
                        let sub = self.row(depth - 1, 3);
                        ExprAst::scripted(base, None, Some(sub))
                    }
                    _ => {
                        let sup = self.flat_row();
                        let sub = self.flat_row();
                        ExprAst::scripted(base, Some(sup), Some(sub))
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayoutParams {
    /// Glyph size on the main baseline, in pixels.
    pub base_size: f64,
    /// Size factor per script level, in (0, 1).
    pub script_scale: f64,
    /// Horizontal gap between row items on the main baseline, in pixels.
    pub gap: f64,
    /// Corner displacement bound as a fraction of each box's smaller side, in [0, 0.5).
    pub jitter: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            base_size: 40.0,
            script_scale: 0.6,
            gap: 10.0,
            jitter: 0.0,
            seed: 0,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = [self.base_size, self.script_scale, self.gap, self.jitter]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SynthError::Params("parameters must be finite".into()));
        }
        if self.base_size <= 0.0 {
            return Err(SynthError::Params("base size must be positive".into()));
        }
        if !(self.script_scale > 0.0 && self.script_scale < 1.0) {
            return Err(SynthError::Params("script scale must lie in (0, 1)".into()));
        }
        if self.gap <= 0.0 {
            return Err(SynthError::Params("gap must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(SynthError::Params(format!(
                "jitter {} outside [0, 0.5)",
                self.jitter
            )));
        }
        Ok(())
    }
}

/// A laid-out subtree in local coordinates: x from 0, row axis at y = 0.
struct Block {
    boxes: Vec<SymbolBox>,
    width: f64,
    ascent: f64,
    descent: f64,
    /// Horizontal center of the first unit the tree builder will see.
    first_cx: f64,
    /// Vertical centers of every unit at this parse level.
    level_cys: Vec<f64>,
}

impl Block {
    fn shift(mut self, dx: f64, dy: f64) -> Self {
        for b in &mut self.boxes {
            b.x_min += dx;
            b.y_min += dy;
        }
        self.first_cx += dx;
        for cy in &mut self.level_cys {
            *cy += dy;
        }
        self
    }
}

struct Layouter<'a> {
    params: &'a LayoutParams,
}

impl Layouter<'_> {
    fn glyph(&self, level: u32) -> Result<f64, SynthError> {
        let size = self.params.base_size * self.params.script_scale.powi(level as i32);
        if size < 1.0 {
            return Err(SynthError::Illegible {
                level,
                size: format!("{size:.3}"),
            });
        }
        Ok(size)
    }

    fn scale(&self, level: u32) -> f64 {
        self.params.script_scale.powi(level as i32)
    }

    fn node(&self, ast: &ExprAst, level: u32) -> Result<Block, SynthError> {
        let g = self.glyph(level)?;
        match ast {
            ExprAst::Symbol(t) => {
                let h = if t == BAR_LABEL { BAR_THICKNESS * g } else { g };
                Ok(Block {
                    boxes: vec![SymbolBox::new(t.clone(), 0.0, -h / 2.0, g, h)],
                    width: g,
                    ascent: h / 2.0,
                    descent: h / 2.0,
                    first_cx: g / 2.0,
                    level_cys: vec![0.0],
                })
            }
            ExprAst::Row(items) => {
                let gap = self.params.gap * self.scale(level);
                let mut row = Block {
                    boxes: Vec::new(),
                    width: 0.0,
                    ascent: 0.0,
                    descent: 0.0,
                    first_cx: 0.0,
                    level_cys: Vec::new(),
                };
                for (i, item) in items.iter().enumerate() {
                    let x = if i == 0 { 0.0 } else { row.width + gap };
                    let b = self.node(item, level)?.shift(x, 0.0);
                    if i == 0 {
                        row.first_cx = b.first_cx;
                    }
                    row.width = x + b.width;
                    row.ascent = row.ascent.max(b.ascent);
                    row.descent = row.descent.max(b.descent);
                    row.boxes.extend(b.boxes);
                    row.level_cys.extend(b.level_cys);
                }
                Ok(row)
            }
            ExprAst::Frac(n, d) => {
                let num = self.node(n, level)?;
                let den = self.node(d, level)?;
                let t = BAR_THICKNESS * g;
                let gap = FRAC_GAP * g;
                let width = num.width.max(den.width) + 2.0 * FRAC_PAD * g;
                let num_axis = -(t / 2.0 + gap + num.descent);
                let den_axis = t / 2.0 + gap + den.ascent;
                let ascent = -num_axis + num.ascent;
                let descent = den_axis + den.descent;
                let num_x = (width - num.width) / 2.0;
                let num = num.shift(num_x, num_axis);
                let den_x = (width - den.width) / 2.0;
                let den = den.shift(den_x, den_axis);
                let mut boxes = vec![SymbolBox::new(BAR_LABEL, 0.0, -t / 2.0, width, t)];
                boxes.extend(num.boxes);
                boxes.extend(den.boxes);
                Ok(Block {
                    boxes,
                    width,
                    ascent,
                    descent,
                    first_cx: width / 2.0,
                    level_cys: vec![0.0],
                })
            }
            ExprAst::Sqrt(inner) => {
                let body = self.node(inner, level)?;
                let half = body.ascent.max(body.descent) + SQRT_VERTICAL_PAD * g;
                let width = SQRT_LEFT_PAD * g + body.width + SQRT_RIGHT_PAD * g;
                let body = body.shift(SQRT_LEFT_PAD * g, 0.0);
                let mut boxes = vec![SymbolBox::new(SQRT_LABEL, 0.0, -half, width, 2.0 * half)];
                boxes.extend(body.boxes);
                Ok(Block {
                    boxes,
                    width,
                    ascent: half,
                    descent: half,
                    first_cx: width / 2.0,
                    level_cys: vec![0.0],
                })
            }
            ExprAst::Scripted { base, sup, sub } => {
                let mut block = self.node(base, level)?;
                let base_height = block.ascent + block.descent;
                let base_cx = block.width / 2.0;
                let script_gap = SCRIPT_GAP * self.params.gap * self.scale(level);
                let base_right = block.width;
                for (script, up) in [(sup, true), (sub, false)] {
                    let Some(script) = script else { continue };
                    let s = self.node(script, level + 1)?;
                    let clearance = s.level_cys.iter().fold(0.0f64, |m, cy| m.max(cy.abs()));
                    let min_offset = 0.5 * base_height + clearance;
                    let min_dx = base_right + script_gap + s.first_cx - base_cx;
                    let d = min_offset.max(min_dx);
                    let axis = if up { -d } else { d };
                    let x = base_cx + d - s.first_cx;
                    let s = s.shift(x, axis);
                    block.width = block.width.max(x + s.width);
                    block.ascent = block.ascent.max(-axis + s.ascent);
                    block.descent = block.descent.max(axis + s.descent);
                    block.boxes.extend(s.boxes);
                    block.level_cys.extend(s.level_cys);
                }
                Ok(block)
            }
        }
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Places one box per leaf symbol plus one bar per fraction, then moves
/// each box corner by an independent uniform offset of at most
/// `jitter * min(width, height)`. Coordinates are rounded to 1e-3 px.
pub fn layout(ast: &ExprAst, params: &LayoutParams) -> Result<Vec<SymbolBox>, SynthError> {
    params.validate()?;
    ast.validate()?;
    let block = Layouter { params }.node(ast, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = Vec::with_capacity(block.boxes.len());
    for b in block.boxes {
        let amp = params.jitter * b.width.min(b.height);
        let mut corner = |v: f64| v + amp * rng.gen_range(-1.0..=1.0);
        let x0 = corner(b.x_min);
        let y0 = corner(b.y_min);
        let x1 = corner(b.x_max());
        let y1 = corner(b.y_max());
        let dy = MARGIN + block.ascent + params.jitter * params.base_size;
        let dx = MARGIN + params.jitter * params.base_size;
        let (x0, y0, x1, y1) = (
            round3(x0 + dx),
            round3(y0 + dy),
            round3(x1 + dx),
            round3(y1 + dy),
        );
        out.push(SymbolBox::from_corners(b.label, x0, y0, x1, y1));
    }
    Ok(out)
}
