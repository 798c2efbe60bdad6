//! Whole-pipeline round trip: layout(ast) parsed back must print as the AST.

use bsrt_core::detections::Vocabulary;
use bsrt_core::emitter::tokenize_latex;
use bsrt_core::synth::{latex_of_ast, layout, random_ast, ExprAst, LayoutParams};
use bsrt_core::{default_config, recognize};

fn round_trips(ast: &ExprAst, jitter: f64, seed: u64) -> Result<(), String> {
    let params = LayoutParams {
        jitter,
        seed,
        ..LayoutParams::default()
    };
    let boxes = layout(ast, &params).map_err(|e| e.to_string())?;
    let expected = latex_of_ast(ast);
    let (_, tokens) = recognize(&boxes, &default_config()).map_err(|e| e.to_string())?;
    if tokens == expected {
        Ok(())
    } else {
        Err(format!("expected {} got {}", expected.render(), tokens.render()))
    }
}

#[test]
fn zero_jitter_round_trip() {
    let vocab = Vocabulary::builtin();
    let failures: Vec<String> = (0..1000u64)
        .filter_map(|seed| {
            let ast = random_ast(seed, 3, &vocab).unwrap();
            assert!(ast.depth() <= 3);
            round_trips(&ast, 0.0, seed)
                .err()
                .map(|e| format!("seed {seed}: {e}"))
        })
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn jittered_round_trip() {
    let vocab = Vocabulary::builtin();
    let failures: Vec<String> = (0..1000u64)
        .filter_map(|seed| {
            let ast = random_ast(seed, 3, &vocab).unwrap();
            round_trips(&ast, 0.05, seed)
                .err()
                .map(|e| format!("seed {seed}: {e}"))
        })
        .collect();
    for f in &failures {
        eprintln!("{f}");
    }
    assert!(failures.len() <= 10, "{} failures", failures.len());
}

#[test]
fn figure_strings_round_trip() {
    for s in [
        "AB = \\sqrt{AO^2 + BO^2}",
        "BO = \\sqrt{2}\\{5\\}",
        "y - \\frac{y-1}{2} = 2 - \\frac{y+3}{5}",
        "y_{BD} = -\\frac{4}{3}X + b",
        "10\\sqrt{10x-x^2} = 14",
        "3 - \\frac{x-1}{2} = 3x-1",
        "\\sqrt{a^2-3x} = 2",
        "y = \\frac{1}{3}x^2 + \\frac{1}{3}x + 10",
        "y = \\frac{1}{2}x - J",
    ] {
        let tokens = tokenize_latex(s).unwrap();
        let ast = bsrt_core::synth::parse_ast(&tokens).unwrap();
        for (jitter, seed) in [(0.0, 0), (0.05, 1), (0.05, 2)] {
            round_trips(&ast, jitter, seed).unwrap_or_else(|e| panic!("{s} ({jitter}, {seed}): {e}"));
        }
    }
}
