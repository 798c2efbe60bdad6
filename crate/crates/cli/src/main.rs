//! `bsrt`: command-line front end for parsing detections into LaTeX,
//! evaluating predictions, generating synthetic fixtures, rendering debug
//! SVGs and binarizing images.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 partial structural failure.

mod render;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use bsrt_core::detections::{
    detections_to_json, load_detections_json, load_detections_yolo, load_vocabulary, Expression,
    Vocabulary,
};
use bsrt_core::emitter::{tokenize_latex, TokenSequence};
use bsrt_core::fixtures::{bless, check_fixtures};
use bsrt_core::metrics::{evaluate, format_table, parse_ground_truth_tsv};
use bsrt_core::preprocess::{binarize, otsu_threshold, read_pgm, write_pgm};
use bsrt_core::synth::{
    expression_seeds, latex_of_ast, layout, parse_ast, random_ast, ExprAst, LayoutParams,
};
use bsrt_core::{build_tree, default_config, recognize, RuleConfig};

#[derive(Parser)]
#[command(name = "bsrt", version, about = "Symbol layout analysis for handwritten math detections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmitMode {
    Latex,
    Tree,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Build trees and LaTeX for every expression in a detection file.
    Parse {
        /// Detection JSON file, or a directory of YOLO `.txt` files.
        detections: PathBuf,
        /// Rule table JSON; defaults to the built-in rules.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Vocabulary file (`id<TAB>token` lines); defaults to the built-in vocabulary.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Image sizes for YOLO input (`image_id<TAB>width<TAB>height` lines).
        #[arg(long)]
        sizes: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "latex")]
        emit: EmitMode,
        /// Output JSON-lines file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Predictions: JSON lines from `parse`, or `image_id<TAB>latex` lines.
        pred: PathBuf,
        /// Ground truth: `image_id<TAB>latex` lines.
        gt: PathBuf,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print the published IDN row for reference.
        #[arg(long)]
        paper_baseline: bool,
    },
    /// Generate synthetic detections with matching ground truth.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 3)]
        depth: usize,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Output directory for `detections.json` and `gt.tsv`.
        #[arg(long)]
        out: PathBuf,
        /// Lay out the expressions of this `image_id<TAB>latex` file instead of random ones.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Draw one expression's boxes and tree edges as SVG.
    Render {
        detections: PathBuf,
        /// Expression to draw; the first one when omitted.
        #[arg(long)]
        image_id: Option<String>,
        /// Draw boxes only.
        #[arg(long)]
        no_tree: bool,
        #[arg(long)]
        rules: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Otsu-binarize a binary PGM image.
    Binarize {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the fixture corpus, or regenerate its expected files with `--bless`.
    Fixtures {
        dir: PathBuf,
        #[arg(long)]
        bless: bool,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Parse {
            detections,
            rules,
            vocab,
            sizes,
            emit,
            out,
        } => cmd_parse(&detections, rules.as_deref(), vocab.as_deref(), sizes.as_deref(), emit, out.as_deref()),
        Command::Eval {
            pred,
            gt,
            out,
            paper_baseline,
        } => cmd_eval(&pred, &gt, out.as_deref(), paper_baseline),
        Command::Synth {
            seed,
            count,
            depth,
            jitter,
            out,
            from,
            vocab,
        } => cmd_synth(seed, count, depth, jitter, &out, from.as_deref(), vocab.as_deref()),
        Command::Render {
            detections,
            image_id,
            no_tree,
            rules,
            vocab,
            out,
        } => cmd_render(&detections, image_id.as_deref(), !no_tree, rules.as_deref(), vocab.as_deref(), &out),
        Command::Binarize { input, out } => cmd_binarize(&input, &out),
        Command::Fixtures { dir, bless } => cmd_fixtures(&dir, bless),
    }
}

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary> {
    let vocab = match path {
        Some(p) => load_vocabulary(p).with_context(|| format!("loading vocabulary {}", p.display()))?,
        None => Vocabulary::builtin(),
    };
    Ok(vocab)
}

fn load_rules(path: Option<&Path>) -> Result<RuleConfig> {
    match path {
        Some(p) => RuleConfig::load(p).with_context(|| format!("loading rules {}", p.display())),
        None => Ok(default_config()),
    }
}

fn parse_sizes(path: &Path) -> Result<BTreeMap<String, (f64, f64)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut sizes = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [id, w, h] => w.trim().parse::<f64>().ok().zip(h.trim().parse::<f64>().ok()).map(|s| (id.to_string(), s)),
            _ => None,
        };
        let Some((id, (w, h))) = parsed.filter(|(_, (w, h))| *w > 0.0 && *h > 0.0) else {
            bail!("{}:{}: expected `image_id<TAB>width<TAB>height`", path.display(), i + 1);
        };
        sizes.insert(id, (w, h));
    }
    Ok(sizes)
}

fn load_expressions(path: &Path, vocab: &Vocabulary, sizes: Option<&Path>) -> Result<Vec<Expression>> {
    if path.is_dir() {
        let Some(sizes) = sizes else {
            bail!("YOLO input {} needs --sizes", path.display());
        };
        let sizes = parse_sizes(sizes)?;
        return load_detections_yolo(path, vocab, &sizes)
            .with_context(|| format!("loading YOLO detections from {}", path.display()));
    }
    load_detections_json(path, vocab).with_context(|| format!("loading detections {}", path.display()))
}

/// Writes `contents` to `out`, or to stdout when no path is given.
fn write_output(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, contents).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn cmd_parse(
    detections: &Path,
    rules: Option<&Path>,
    vocab: Option<&Path>,
    sizes: Option<&Path>,
    emit: EmitMode,
    out: Option<&Path>,
) -> Result<u8> {
    let config = load_rules(rules)?;
    let vocab = load_vocab(vocab)?;
    let expressions = load_expressions(detections, &vocab, sizes)?;

    let mut lines = String::new();
    let mut failed = 0usize;
    for expr in &expressions {
        let (tree, tokens) = match recognize(&expr.symbols, &config) {
            Ok(result) => result,
            Err(e) => {
                eprintln!("{}: {e}", expr.image_id);
                failed += 1;
                continue;
            }
        };
        let mut record = serde_json::Map::new();
        record.insert("image_id".into(), json!(expr.image_id));
        if emit != EmitMode::Tree {
            record.insert("latex".into(), json!(tokens.render()));
            record.insert("tokens".into(), json!(tokens.tokens()));
        }
        if emit != EmitMode::Latex {
            record.insert("tree".into(), tree.to_json_value());
        }
        lines.push_str(&serde_json::Value::Object(record).to_string());
        lines.push('\n');
    }
    write_output(out, &lines)?;
    if failed > 0 {
        eprintln!("{failed} of {} expressions failed", expressions.len());
        return Ok(2);
    }
    Ok(0)
}

/// Reads predictions from `parse` JSON lines (using `tokens`, or `latex`
/// when tokens are absent) or from `image_id<TAB>latex` lines.
fn load_predictions(path: &Path) -> Result<Vec<(String, TokenSequence)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = text.trim_start().starts_with('{');
    if !is_json {
        return parse_ground_truth_tsv(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let mut preds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let value: serde_json::Value = serde_json::from_str(line).with_context(at)?;
        let id = value["image_id"]
            .as_str()
            .with_context(|| format!("{}: missing image_id", at()))?
            .to_string();
        let tokens = if let Some(tokens) = value["tokens"].as_array() {
            let tokens: Option<Vec<String>> =
                tokens.iter().map(|t| t.as_str().map(String::from)).collect();
            TokenSequence(tokens.with_context(|| format!("{}: tokens must be strings", at()))?)
        } else if let Some(latex) = value["latex"].as_str() {
            tokenize_latex(latex).with_context(at)?
        } else {
            bail!("{}: needs `tokens` or `latex`", at());
        };
        preds.push((id, tokens));
    }
    Ok(preds)
}

fn cmd_eval(pred: &Path, gt: &Path, out: Option<&Path>, paper_baseline: bool) -> Result<u8> {
    let preds = load_predictions(pred)?;
    let gt_text = fs::read_to_string(gt).with_context(|| format!("reading {}", gt.display()))?;
    let gts = parse_ground_truth_tsv(&gt_text).with_context(|| format!("parsing {}", gt.display()))?;
    let report = evaluate(&preds, &gts)?;
    if let Some(out) = out {
        fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    write_output(None, &format_table(&report, paper_baseline))?;
    Ok(0)
}

fn read_latex_tsv(path: &Path) -> Result<Vec<(String, ExprAst)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let at = || format!("{}:{}", path.display(), i + 1);
        let Some((id, latex)) = line.split_once('\t') else {
            bail!("{}: expected `image_id<TAB>latex`", at());
        };
        let tokens = tokenize_latex(latex).with_context(at)?;
        let ast = parse_ast(&tokens).with_context(at)?;
        out.push((id.to_string(), ast));
    }
    Ok(out)
}

fn cmd_synth(
    seed: u64,
    count: usize,
    depth: usize,
    jitter: f64,
    out: &Path,
    from: Option<&Path>,
    vocab: Option<&Path>,
) -> Result<u8> {
    let vocab = load_vocab(vocab)?;
    let base = LayoutParams {
        jitter,
        seed,
        ..LayoutParams::default()
    };
    base.validate()?;
    if depth == 0 {
        bail!("--depth must be at least 1");
    }

    let named: Vec<(String, ExprAst, u64)> = match from {
        Some(path) => {
            let items = read_latex_tsv(path)?;
            let seeds = expression_seeds(seed, items.len());
            items
                .into_iter()
                .zip(seeds)
                .map(|((id, ast), s)| (id, ast, s))
                .collect()
        }
        None => expression_seeds(seed, count)
            .into_iter()
            .enumerate()
            .map(|(i, s)| Ok((format!("synth-{seed}-{i:05}"), random_ast(s, depth, &vocab)?, s)))
            .collect::<Result<_>>()?,
    };

    let mut expressions = Vec::with_capacity(named.len());
    let mut gt = String::new();
    for (image_id, ast, s) in named {
        let params = LayoutParams { seed: s, ..base.clone() };
        let symbols = layout(&ast, &params).with_context(|| format!("laying out {image_id}"))?;
        for sym in &symbols {
            if !vocab.contains_token(&sym.label) {
                bail!("{image_id}: label {:?} is not in the vocabulary", sym.label);
            }
        }
        gt.push_str(&format!("{image_id}\t{}\n", latex_of_ast(&ast).render()));
        expressions.push(Expression { image_id, symbols });
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let det_path = out.join("detections.json");
    fs::write(&det_path, detections_to_json(&expressions))
        .with_context(|| format!("writing {}", det_path.display()))?;
    let gt_path = out.join("gt.tsv");
    fs::write(&gt_path, gt).with_context(|| format!("writing {}", gt_path.display()))?;
    Ok(0)
}

fn cmd_render(
    detections: &Path,
    image_id: Option<&str>,
    with_tree: bool,
    rules: Option<&Path>,
    vocab: Option<&Path>,
    out: &Path,
) -> Result<u8> {
    let config = load_rules(rules)?;
    let vocab = load_vocab(vocab)?;
    let expressions = load_detections_json(detections, &vocab)
        .with_context(|| format!("loading detections {}", detections.display()))?;
    let expr = match image_id {
        Some(id) => expressions
            .iter()
            .find(|e| e.image_id == id)
            .with_context(|| format!("no expression {id:?} in {}", detections.display()))?,
        None => expressions
            .first()
            .with_context(|| format!("{} holds no expressions", detections.display()))?,
    };
    let mut code = 0;
    let tree = if with_tree {
        match build_tree(&expr.symbols, &config) {
            Ok(tree) => Some(tree),
            Err(e) => {
                eprintln!("{}: {e}; drawing boxes only", expr.image_id);
                code = 2;
                None
            }
        }
    } else {
        None
    };
    // boxes are drawn in reading order so node ids and drawing order agree
    let symbols = match &tree {
        Some(t) => t.nodes.iter().map(|n| n.symbol.clone()).collect(),
        None => bsrt_core::tree::reading_order(&expr.symbols),
    };
    let svg = render::render_svg(&expr.image_id, &symbols, tree.as_ref());
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(code)
}

fn cmd_binarize(input: &Path, out: &Path) -> Result<u8> {
    let img = read_pgm(input)?;
    let t = otsu_threshold(&img)?;
    write_pgm(out, &binarize(&img, t))?;
    eprintln!("threshold {t}");
    Ok(0)
}

fn cmd_fixtures(dir: &Path, bless_flag: bool) -> Result<u8> {
    let vocab = Vocabulary::builtin();
    let config = default_config();
    if bless_flag {
        for name in bless(dir, &vocab, &config)? {
            println!("blessed {name}");
        }
        return Ok(0);
    }
    let results = check_fixtures(dir, &vocab, &config)?;
    let mut failed = 0;
    for r in &results {
        match &r.outcome {
            Ok(()) => println!("ok   {}", r.name),
            Err(e) => {
                failed += 1;
                println!("FAIL {e}");
            }
        }
    }
    println!("{} fixtures, {failed} failed", results.len());
    Ok(if failed == 0 { 0 } else { 2 })
}
