//! Baseline symbol relationship trees.
//!
//! [`build_tree`] turns a validated symbol set into a rooted tree whose edges
//! carry spatial relations. Symbols are first put in reading order, then each
//! symbol set goes through three passes:
//!
//! 1. containment: symbols covered by a container symbol (a radical) are moved
//!    into that container's `Inside` slot and parsed recursively;
//! 2. fractions: a bar with at least one symbol above and one below becomes a
//!    fraction; everything horizontally overlapping it is split into the
//!    numerator (`Above`) and denominator (`Below`) and parsed recursively;
//! 3. baseline: the remaining units, left to right, form a `Right` chain.
//!    Superscript/subscript partners open a script region that collects
//!    symbols until one comes back to the baseline symbol's height.
//!
//! The same passes run inside every radicand, numerator, denominator and
//! script region.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{SymbolBox, BAR_LABEL};
use crate::geometry::{center, interval_overlap, overlap_ratios, pair_features};
use crate::relations::{classify, containment, RelationLabel, RuleConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty symbol set")]
    Empty,
    #[error("orphan symbols {ids:?}: unrelated to every candidate parent")]
    Orphans { ids: Vec<usize> },
    #[error("tree has {nodes} nodes but the expression has {symbols} symbols")]
    NodeCount { nodes: usize, symbols: usize },
    #[error("invalid tree: {0}")]
    Contract(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub symbol: SymbolBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub parent: usize,
    pub child: usize,
    pub relation: RelationLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bsrt {
    pub root: usize,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: usize,
    label: String,
    x_min: f64,
    y_min: f64,
    width: f64,
    height: f64,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct TreeJson {
    root: usize,
    nodes: Vec<NodeJson>,
    edges: Vec<Edge>,
}

impl Bsrt {
    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    /// Children of `parent` under `relation`, ordered by ascending `x_min`.
    pub fn children(&self, parent: usize, relation: RelationLabel) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter(|e| e.parent == parent && e.relation == relation)
            .map(|e| e.child)
            .collect();
        out.sort_by(|&a, &b| {
            self.nodes[a]
                .symbol
                .x_min
                .total_cmp(&self.nodes[b].symbol.x_min)
                .then(a.cmp(&b))
        });
        out
    }

    /// Checks the tree invariants: single root, one parent per other node,
    /// everything reachable from the root, no `Unrelated` edges.
    pub fn validate(&self) -> Result<(), TreeError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(TreeError::Empty);
        }
        if self.root >= n {
            return Err(TreeError::Contract(format!("root {} out of range", self.root)));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(TreeError::Contract(format!("node {i} carries id {}", node.id)));
            }
        }
        let mut parents = vec![0usize; n];
        for e in &self.edges {
            if e.parent >= n || e.child >= n {
                return Err(TreeError::Contract(format!("edge {e:?} out of range")));
            }
            if e.relation == RelationLabel::Unrelated {
                return Err(TreeError::Contract(format!("edge {e:?} is Unrelated")));
            }
            parents[e.child] += 1;
        }
        for (id, &count) in parents.iter().enumerate() {
            let expected = usize::from(id != self.root);
            if count != expected {
                return Err(TreeError::Contract(format!(
                    "node {id} has {count} parents, expected {expected}"
                )));
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if std::mem::replace(&mut seen[id], true) {
                return Err(TreeError::Contract(format!("cycle through node {id}")));
            }
            stack.extend(self.edges.iter().filter(|e| e.parent == id).map(|e| e.child));
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(TreeError::Contract(format!("node {id} unreachable from root")));
        }
        Ok(())
    }

    /// Debug serialization with node boxes and relation names.
    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = TreeJson {
            root: self.root,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    id: n.id,
                    label: n.symbol.label.clone(),
                    x_min: n.symbol.x_min,
                    y_min: n.symbol.y_min,
                    width: n.symbol.width,
                    height: n.symbol.height,
                    score: n.symbol.score,
                })
                .collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_value(doc).expect("tree serializes")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self, serde_json::Error> {
        let doc: TreeJson = serde_json::from_value(value)?;
        Ok(Self {
            root: doc.root,
            nodes: doc
                .nodes
                .into_iter()
                .map(|n| Node {
                    id: n.id,
                    symbol: SymbolBox {
                        label: n.label,
                        x_min: n.x_min,
                        y_min: n.y_min,
                        width: n.width,
                        height: n.height,
                        score: n.score,
                    },
                })
                .collect(),
            edges: doc.edges,
        })
    }
}

fn reading_cmp(a: &SymbolBox, b: &SymbolBox) -> Ordering {
    a.x_min
        .total_cmp(&b.x_min)
        .then(a.y_min.total_cmp(&b.y_min))
        .then_with(|| a.label.cmp(&b.label))
        .then(a.width.total_cmp(&b.width))
        .then(a.height.total_cmp(&b.height))
        .then(a.score.total_cmp(&b.score))
}

/// Sorts symbols left to right, then top to bottom, then by label.
pub fn reading_order(symbols: &[SymbolBox]) -> Vec<SymbolBox> {
    let mut out = symbols.to_vec();
    out.sort_by(reading_cmp);
    out
}

/// Fails unless the tree holds exactly `n_symbols` nodes.
pub fn orphan_check(tree: &Bsrt, n_symbols: usize) -> Result<(), TreeError> {
    if tree.nodes.len() == n_symbols {
        Ok(())
    } else {
        Err(TreeError::NodeCount {
            nodes: tree.nodes.len(),
            symbols: n_symbols,
        })
    }
}

/// Builds the tree. Node ids are positions in reading order, so any
/// permutation of the same input yields the same tree.
pub fn build_tree(symbols: &[SymbolBox], config: &RuleConfig) -> Result<Bsrt, TreeError> {
    if symbols.is_empty() {
        return Err(TreeError::Empty);
    }
    let sorted = reading_order(symbols);
    let mut builder = Builder {
        symbols: &sorted,
        config,
        edges: Vec::new(),
        orphans: Vec::new(),
    };
    let root = builder
        .parse_set((0..sorted.len()).collect())
        .ok_or(TreeError::Empty)?;
    if !builder.orphans.is_empty() {
        let mut ids = builder.orphans;
        ids.sort_unstable();
        ids.dedup();
        return Err(TreeError::Orphans { ids });
    }
    let mut edges = builder.edges;
    edges.sort_by(|a, b| {
        a.parent
            .cmp(&b.parent)
            .then(a.relation.cmp(&b.relation))
            .then(sorted[a.child].x_min.total_cmp(&sorted[b.child].x_min))
            .then(a.child.cmp(&b.child))
    });
    let tree = Bsrt {
        root,
        nodes: sorted
            .into_iter()
            .enumerate()
            .map(|(id, symbol)| Node { id, symbol })
            .collect(),
        edges,
    };
    orphan_check(&tree, symbols.len())?;
    tree.validate()?;
    Ok(tree)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitKind {
    Symbol,
    Container,
    Fraction,
}

/// A symbol together with everything already attached below it.
#[derive(Debug, Clone)]
struct Unit {
    head: usize,
    kind: UnitKind,
    /// Box standing for the whole unit during later passes.
    anchor: SymbolBox,
    members: Vec<usize>,
}

struct Builder<'a> {
    symbols: &'a [SymbolBox],
    config: &'a RuleConfig,
    edges: Vec<Edge>,
    orphans: Vec<usize>,
}

impl Builder<'_> {
    fn link(&mut self, parent: usize, child: usize, relation: RelationLabel) {
        self.edges.push(Edge {
            parent,
            child,
            relation,
        });
    }

    // Container of `s`: the smallest container-labeled box covering it. Strict
    // area ordering (ids break ties) keeps the container chains acyclic.
    fn innermost_container(&self, s: usize, containers: &[usize]) -> Option<usize> {
        let sb = &self.symbols[s];
        containers
            .iter()
            .copied()
            .filter(|&c| {
                let cb = &self.symbols[c];
                c != s
                    && (cb.area() > sb.area() || (cb.area() == sb.area() && c < s))
                    && containment(cb, sb) >= self.config.inside.containment_min
            })
            .min_by(|&a, &b| {
                self.symbols[a]
                    .area()
                    .total_cmp(&self.symbols[b].area())
                    .then(a.cmp(&b))
            })
    }

    fn parse_set(&mut self, ids: Vec<usize>) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let containers: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&i| self.config.is_container(&self.symbols[i].label))
            .collect();
        let direct: BTreeMap<usize, usize> = ids
            .iter()
            .filter_map(|&s| self.innermost_container(s, &containers).map(|c| (s, c)))
            .collect();

        let mut contents: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut top_level = Vec::new();
        for &s in &ids {
            if !direct.contains_key(&s) {
                top_level.push(s);
                continue;
            }
            let mut outer = s;
            while let Some(&c) = direct.get(&outer) {
                outer = c;
            }
            contents.entry(outer).or_default().push(s);
        }

        let mut units = Vec::with_capacity(top_level.len());
        for head in top_level {
            let anchor = self.symbols[head].clone();
            match contents.remove(&head) {
                Some(inner) => {
                    let mut members = vec![head];
                    members.extend(&inner);
                    if let Some(root) = self.parse_set(inner) {
                        self.link(head, root, RelationLabel::Inside);
                    }
                    units.push(Unit {
                        head,
                        kind: UnitKind::Container,
                        anchor,
                        members,
                    });
                }
                None => units.push(Unit {
                    head,
                    kind: UnitKind::Symbol,
                    anchor,
                    members: vec![head],
                }),
            }
        }
        self.parse_units(units)
    }

    /// Relation of `unit` to the part of `bar` directly above or below it.
    fn bar_partner(&self, bar: &SymbolBox, unit: &SymbolBox) -> Option<RelationLabel> {
        let lo = bar.x_min.max(unit.x_min);
        let hi = bar.x_max().min(unit.x_max());
        if hi <= lo {
            return None;
        }
        let local = SymbolBox::from_corners(bar.label.clone(), lo, bar.y_min, hi, bar.y_max());
        match classify(&local, unit, self.config) {
            r @ (RelationLabel::Above | RelationLabel::Below) => Some(r),
            _ => None,
        }
    }

    /// Turns the widest qualifying bar into a fraction unit. Returns false
    /// when no bar qualifies.
    fn form_fraction(&mut self, units: &mut Vec<Unit>) -> bool {
        let mut candidates: Vec<usize> = (0..units.len())
            .filter(|&i| units[i].kind == UnitKind::Symbol && units[i].anchor.label == BAR_LABEL)
            .collect();
        candidates.sort_by(|&a, &b| {
            units[b]
                .anchor
                .width
                .total_cmp(&units[a].anchor.width)
                .then(units[a].head.cmp(&units[b].head))
        });

        for ci in candidates {
            let bar = units[ci].anchor.clone();
            let (mut above, mut below) = (false, false);
            for (j, u) in units.iter().enumerate() {
                if j == ci {
                    continue;
                }
                match self.bar_partner(&bar, &u.anchor) {
                    Some(RelationLabel::Above) => above = true,
                    Some(RelationLabel::Below) => below = true,
                    _ => {}
                }
            }
            if !(above && below) {
                continue;
            }

            let bar_unit = units.remove(ci);
            let bar_cy = center(&bar).1;
            let (mut numerator, mut denominator, mut rest) = (Vec::new(), Vec::new(), Vec::new());
            for u in units.drain(..) {
                let overlaps =
                    interval_overlap(bar.x_min, bar.x_max(), u.anchor.x_min, u.anchor.x_max()) > 0.0;
                let cy = center(&u.anchor).1;
                if overlaps && cy < bar_cy {
                    numerator.push(u);
                } else if overlaps && cy > bar_cy {
                    denominator.push(u);
                } else {
                    rest.push(u);
                }
            }

            let mut half = bar.height / 2.0;
            let mut members = bar_unit.members;
            for u in numerator.iter().chain(&denominator) {
                half = half
                    .max(bar_cy - u.anchor.y_min)
                    .max(u.anchor.y_max() - bar_cy);
                members.extend(&u.members);
            }
            if let Some(root) = self.parse_units(numerator) {
                self.link(bar_unit.head, root, RelationLabel::Above);
            }
            if let Some(root) = self.parse_units(denominator) {
                self.link(bar_unit.head, root, RelationLabel::Below);
            }
            // Vertically centered on the bar so the fraction sits on the
            // surrounding baseline.
            let anchor = SymbolBox::new(
                bar.label.clone(),
                bar.x_min,
                bar_cy - half,
                bar.width,
                2.0 * half,
            );
            rest.push(Unit {
                head: bar_unit.head,
                kind: UnitKind::Fraction,
                anchor,
                members,
            });
            *units = rest;
            return true;
        }
        false
    }

    fn returned_to_baseline(&self, base: &Unit, unit: &Unit) -> bool {
        let dy = center(&unit.anchor).1 - center(&base.anchor).1;
        dy.abs() <= self.config.script_return_band * base.anchor.height
    }

    // `classify`, plus a horizontal-neighbor fallback that measures the
    // vertical overlap against the successor's height. Without it a tall
    // predecessor (radical, fraction) or a flat one (minus) never has a
    // Right successor.
    fn baseline_relation(&self, base: &SymbolBox, unit: &SymbolBox) -> RelationLabel {
        let relation = classify(base, unit, self.config);
        if relation != RelationLabel::Unrelated {
            return relation;
        }
        match pair_features(base, unit) {
            Ok(f)
                if self.config.right.theta.contains(f.theta)
                    && overlap_ratios(unit, base).0 > self.config.right.lambda_min =>
            {
                RelationLabel::Right
            }
            _ => relation,
        }
    }

    fn flush_scripts(&mut self, base: &Unit, sup: &mut Vec<Unit>, sub: &mut Vec<Unit>) {
        if let Some(root) = self.parse_units(std::mem::take(sup)) {
            self.link(base.head, root, RelationLabel::Superscript);
        }
        if let Some(root) = self.parse_units(std::mem::take(sub)) {
            self.link(base.head, root, RelationLabel::Subscript);
        }
    }

    fn parse_units(&mut self, mut units: Vec<Unit>) -> Option<usize> {
        while self.form_fraction(&mut units) {}

        units.sort_by(|a, b| reading_cmp(&a.anchor, &b.anchor).then(a.head.cmp(&b.head)));
        let mut units = units.into_iter();
        let mut base = units.next()?;
        let root = base.head;
        let (mut sup, mut sub) = (Vec::new(), Vec::new());
        let mut in_script = false;

        for unit in units {
            if in_script {
                if self.returned_to_baseline(&base, &unit) {
                    self.flush_scripts(&base, &mut sup, &mut sub);
                    in_script = false;
                } else {
                    match classify(&base.anchor, &unit.anchor, self.config) {
                        RelationLabel::Superscript => sup.push(unit),
                        RelationLabel::Subscript => sub.push(unit),
                        _ if center(&unit.anchor).1 < center(&base.anchor).1 => sup.push(unit),
                        _ => sub.push(unit),
                    }
                    continue;
                }
            }
            match self.baseline_relation(&base.anchor, &unit.anchor) {
                RelationLabel::Right => {
                    self.link(base.head, unit.head, RelationLabel::Right);
                    base = unit;
                }
                RelationLabel::Superscript => {
                    sup.push(unit);
                    in_script = true;
                }
                RelationLabel::Subscript => {
                    sub.push(unit);
                    in_script = true;
                }
                _ => self.orphans.extend(unit.members),
            }
        }
        self.flush_scripts(&base, &mut sup, &mut sub);
        Some(root)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::SQRT_LABEL;
    use crate::relations::default_config;

    fn sb(label: &str, x: f64, y: f64, w: f64, h: f64) -> SymbolBox {
        SymbolBox::new(label, x, y, w, h)
    }

    fn shape(tree: &Bsrt) -> Vec<(String, String, RelationLabel)> {
        tree.edges
            .iter()
            .map(|e| {
                (
                    tree.node(e.parent).symbol.label.clone(),
                    tree.node(e.child).symbol.label.clone(),
                    e.relation,
                )
            })
            .collect()
    }

    #[test]
    fn reading_order_examples() {
        let order = reading_order(&[
            sb("a", 5.0, 0.0, 1.0, 1.0),
            sb("b", 1.0, 0.0, 1.0, 1.0),
            sb("c", 3.0, 0.0, 1.0, 1.0),
        ]);
        let xs: Vec<f64> = order.iter().map(|s| s.x_min).collect();
        assert_eq!(xs, [1.0, 3.0, 5.0]);

        let order = reading_order(&[sb("a", 0.0, 7.0, 1.0, 1.0), sb("b", 0.0, 2.0, 1.0, 1.0)]);
        assert_eq!(order[0].y_min, 2.0);

        let one = [sb("x", 1.0, 1.0, 1.0, 1.0)];
        assert_eq!(reading_order(&one), one.to_vec());
    }

    #[test]
    fn single_symbol() {
        let tree = build_tree(&[sb("x", 0.0, 0.0, 10.0, 14.0)], &default_config()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.node(tree.root).symbol.label, "x");
        assert!(tree.edges.is_empty());
    }

    #[test]
    fn superscript_pair() {
        let tree = build_tree(
            &[sb("x", 0.0, 0.0, 10.0, 14.0), sb("2", 11.0, -6.0, 6.0, 7.0)],
            &default_config(),
        )
        .unwrap();
        assert_eq!(tree.node(tree.root).symbol.label, "x");
        assert_eq!(shape(&tree), [("x".into(), "2".into(), RelationLabel::Superscript)]);
    }

    #[test]
    fn simple_fraction() {
        let tree = build_tree(
            &[
                sb("-", 0.0, 10.0, 20.0, 2.0),
                sb("1", 7.0, 0.0, 6.0, 8.0),
                sb("2", 7.0, 14.0, 6.0, 8.0),
            ],
            &default_config(),
        )
        .unwrap();
        assert_eq!(tree.node(tree.root).symbol.label, "-");
        assert_eq!(
            shape(&tree),
            [
                ("-".into(), "1".into(), RelationLabel::Above),
                ("-".into(), "2".into(), RelationLabel::Below),
            ]
        );
    }

    #[test]
    fn minus_with_right_neighbor_stays_on_baseline() {
        let tree = build_tree(
            &[
                sb("a", 0.0, 0.0, 10.0, 10.0),
                sb("-", 14.0, 4.5, 10.0, 1.0),
                sb("b", 28.0, 0.0, 10.0, 10.0),
            ],
            &default_config(),
        )
        .unwrap();
        assert_eq!(
            shape(&tree),
            [
                ("a".into(), "-".into(), RelationLabel::Right),
                ("-".into(), "b".into(), RelationLabel::Right),
            ]
        );
    }

    #[test]
    fn radical_contents_go_inside() {
        let tree = build_tree(
            &[
                sb(SQRT_LABEL, 0.0, 0.0, 30.0, 16.0),
                sb("x", 10.0, 3.0, 8.0, 10.0),
                sb("y", 36.0, 3.0, 8.0, 10.0),
            ],
            &default_config(),
        )
        .unwrap();
        assert_eq!(
            shape(&tree),
            [
                (SQRT_LABEL.into(), "y".into(), RelationLabel::Right),
                (SQRT_LABEL.into(), "x".into(), RelationLabel::Inside),
            ]
        );
    }

    #[test]
    fn script_region_ends_on_return() {
        // x^{ab} c
        let tree = build_tree(
            &[
                sb("x", 0.0, 0.0, 10.0, 10.0),
                sb("a", 12.0, -6.0, 5.0, 5.0),
                sb("b", 19.0, -6.0, 5.0, 5.0),
                sb("c", 28.0, 0.0, 10.0, 10.0),
            ],
            &default_config(),
        )
        .unwrap();
        assert_eq!(
            shape(&tree),
            [
                ("x".into(), "c".into(), RelationLabel::Right),
                ("x".into(), "a".into(), RelationLabel::Superscript),
                ("a".into(), "b".into(), RelationLabel::Right),
            ]
        );
    }

    #[test]
    fn orphan_is_reported() {
        // a symbol far to the left-below of the only baseline symbol
        let err = build_tree(
            &[sb("x", 0.0, 0.0, 10.0, 10.0), sb("y", 2.0, 40.0, 10.0, 10.0)],
            &default_config(),
        )
        .unwrap_err();
        assert_eq!(err, TreeError::Orphans { ids: vec![1] });
    }

    #[test]
    fn orphan_check_counts() {
        let tree = build_tree(
            &[
                sb("a", 0.0, 0.0, 10.0, 10.0),
                sb("b", 15.0, 0.0, 10.0, 10.0),
                sb("c", 30.0, 0.0, 10.0, 10.0),
            ],
            &default_config(),
        )
        .unwrap();
        assert!(orphan_check(&tree, 3).is_ok());
        assert!(orphan_check(&tree, 2).is_err());
        let one = build_tree(&[sb("a", 0.0, 0.0, 1.0, 1.0)], &default_config()).unwrap();
        assert!(orphan_check(&one, 1).is_ok());
    }

    #[test]
    fn validate_rejects_broken_trees() {
        let mut tree = build_tree(
            &[sb("a", 0.0, 0.0, 10.0, 10.0), sb("b", 15.0, 0.0, 10.0, 10.0)],
            &default_config(),
        )
        .unwrap();
        tree.validate().unwrap();
        tree.edges[0].relation = RelationLabel::Unrelated;
        assert!(tree.validate().is_err());
        tree.edges.clear();
        assert!(tree.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let tree = build_tree(
            &[sb("x", 0.0, 0.0, 10.0, 14.0), sb("2", 11.0, -6.0, 6.0, 7.0)],
            &default_config(),
        )
        .unwrap();
        let value = tree.to_json_value();
        assert_eq!(value["edges"][0]["relation"], "Superscript");
        assert_eq!(Bsrt::from_json_value(value).unwrap(), tree);
    }
}
