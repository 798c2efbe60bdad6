//! Deterministic SVG rendering of symbol boxes and tree edges.

use std::fmt::Write as _;

use bsrt_core::detections::SymbolBox;
use bsrt_core::geometry::center;
use bsrt_core::tree::Bsrt;

const PAD: f64 = 20.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// One `rect` and `text` per box in input order, then one arrow with its
/// relation name per tree edge in edge order.
pub fn render_svg(image_id: &str, symbols: &[SymbolBox], tree: Option<&Bsrt>) -> String {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for s in symbols {
        x0 = x0.min(s.x_min);
        y0 = y0.min(s.y_min);
        x1 = x1.max(s.x_max());
        y1 = y1.max(s.y_max());
    }
    if symbols.is_empty() {
        (x0, y0, x1, y1) = (0.0, 0.0, 0.0, 0.0);
    }
    let (vx, vy) = (x0 - PAD, y0 - PAD);
    let (vw, vh) = (x1 - x0 + 2.0 * PAD, y1 - y0 + 2.0 * PAD);

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" width="{}" height="{}">"#,
        num(vx),
        num(vy),
        num(vw),
        num(vh),
        num(vw),
        num(vh)
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", escape(image_id)).unwrap();
    out.push_str(concat!(
        "<defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" ",
        "markerWidth=\"6\" markerHeight=\"6\" orient=\"auto-start-reverse\">",
        "<path d=\"M 0 0 L 10 5 L 0 10 z\" fill=\"#c0392b\"/></marker></defs>\n"
    ));
    out.push_str("<g class=\"boxes\" fill=\"none\" stroke=\"#2c3e50\" stroke-width=\"1\">\n");
    for s in symbols {
        writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
            num(s.x_min),
            num(s.y_min),
            num(s.width),
            num(s.height)
        )
        .unwrap();
    }
    out.push_str("</g>\n<g class=\"labels\" font-family=\"monospace\" font-size=\"10\" fill=\"#2c3e50\">\n");
    for s in symbols {
        writeln!(
            out,
            r#"<text x="{}" y="{}">{}</text>"#,
            num(s.x_min + 1.0),
            num(s.y_min - 2.0),
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</g>\n");
    if let Some(tree) = tree {
        out.push_str("<g class=\"edges\" stroke=\"#c0392b\" stroke-width=\"1\" font-family=\"monospace\" font-size=\"9\" fill=\"#c0392b\">\n");
        for e in &tree.edges {
            let (px, py) = center(&tree.node(e.parent).symbol);
            let (cx, cy) = center(&tree.node(e.child).symbol);
            writeln!(
                out,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" marker-end="url(#arrow)"/><text x="{}" y="{}" stroke="none">{}</text>"#,
                num(px),
                num(py),
                num(cx),
                num(cy),
                num((px + cx) / 2.0),
                num((py + cy) / 2.0),
                e.relation.as_str()
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsrt_core::{build_tree, default_config};

    #[test]
    fn two_boxes_one_edge() {
        let symbols = [
            SymbolBox::new("x", 0.0, 0.0, 10.0, 10.0),
            SymbolBox::new("<", 20.0, 0.0, 10.0, 10.0),
        ];
        let tree = build_tree(&symbols, &default_config()).unwrap();
        let svg = render_svg("a&b", &symbols, Some(&tree));
        assert_eq!(svg.matches("<rect").count(), 2);
        assert_eq!(svg.matches("<line").count(), 1);
        assert!(svg.contains(">Right</text>"));
        assert!(svg.contains("&lt;") && svg.contains("a&amp;b"));
        assert_eq!(svg, render_svg("a&b", &symbols, Some(&tree)));
    }

    #[test]
    fn number_format() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(1.25), "1.25");
        assert_eq!(num(-0.0001), "0");
    }
}
