//! Spatial relation classification of ordered symbol pairs.
//!
//! A [`RuleConfig`] holds one predicate per relation over the pair features
//! (angles stored as multiples of pi). [`classify`] returns the first relation
//! in priority order whose predicate holds, or `Unrelated`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::{SymbolBox, SQRT_LABEL};
use crate::geometry::{interval_overlap, pair_features, PairFeatures};

pub const PI_RADIANS: &str = "pi_radians";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationLabel {
    Above,
    Below,
    Right,
    Superscript,
    Subscript,
    Inside,
    Unrelated,
}

impl RelationLabel {
    pub const ALL: [RelationLabel; 7] = [
        RelationLabel::Above,
        RelationLabel::Below,
        RelationLabel::Right,
        RelationLabel::Superscript,
        RelationLabel::Subscript,
        RelationLabel::Inside,
        RelationLabel::Unrelated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelationLabel::Above => "Above",
            RelationLabel::Below => "Below",
            RelationLabel::Right => "Right",
            RelationLabel::Superscript => "Superscript",
            RelationLabel::Subscript => "Subscript",
            RelationLabel::Inside => "Inside",
            RelationLabel::Unrelated => "Unrelated",
        }
    }

    /// The relation seen after reflecting a pair across a horizontal line.
    pub fn mirrored(self) -> Self {
        match self {
            RelationLabel::Above => RelationLabel::Below,
            RelationLabel::Below => RelationLabel::Above,
            RelationLabel::Superscript => RelationLabel::Subscript,
            RelationLabel::Subscript => RelationLabel::Superscript,
            other => other,
        }
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RelationLabel::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read rules {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed rules JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid rules: {0}")]
    Invalid(String),
}

/// An angular band, in multiples of pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBand {
    pub min: f64,
    pub max: f64,
    /// Closed band when true, open otherwise.
    #[serde(default)]
    pub inclusive: bool,
}

impl ThetaBand {
    pub const fn open(min: f64, max: f64) -> Self {
        Self { min, max, inclusive: false }
    }

    pub const fn closed(min: f64, max: f64) -> Self {
        Self { min, max, inclusive: true }
    }

    pub fn contains(&self, theta: f64) -> bool {
        let (lo, hi) = (self.min * PI, self.max * PI);
        if self.inclusive {
            lo <= theta && theta <= hi
        } else {
            lo < theta && theta < hi
        }
    }

    fn check(&self, name: &str) -> Result<(), ConfigError> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min >= self.max {
            return Err(ConfigError::Invalid(format!(
                "{name}: band lower bound must be below upper bound"
            )));
        }
        if self.min < -1.0 || self.max > 1.0 {
            return Err(ConfigError::Invalid(format!("{name}: band outside [-1, 1] pi")));
        }
        Ok(())
    }
}

/// Optional closed ranges on the extent ratios. No default rule uses them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectBounds {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<[f64; 2]>,
}

impl AspectBounds {
    fn admits(&self, f: &PairFeatures) -> bool {
        let within = |range: Option<[f64; 2]>, v: f64| range.is_none_or(|[lo, hi]| lo <= v && v <= hi);
        within(self.alpha, f.alpha) && within(self.beta, f.beta)
    }
}

/// Vertical stacking: `theta` in band and `mu > mu_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackRule {
    pub theta: ThetaBand,
    pub mu_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<AspectBounds>,
}

/// Scripts: `theta` in band and `mu <= mu_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    pub theta: ThetaBand,
    pub mu_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<AspectBounds>,
}

/// Horizontal adjacency: `theta` in band and `lambda > lambda_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RightRule {
    pub theta: ThetaBand,
    pub lambda_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<AspectBounds>,
}

/// Containment of the adjacent box in a container-labeled reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsideRule {
    pub containment_min: f64,
    pub containers: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub units: String,
    pub above: StackRule,
    pub below: StackRule,
    pub superscript: ScriptRule,
    pub subscript: ScriptRule,
    pub right: RightRule,
    pub inside: InsideRule,
    /// A script region ends at the first symbol whose vertical center lies
    /// within this fraction of the base symbol's height from the base's center.
    pub script_return_band: f64,
    pub priority: Vec<RelationLabel>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        default_config()
    }
}

pub fn default_config() -> RuleConfig {
    RuleConfig {
        units: PI_RADIANS.into(),
        above: StackRule {
            theta: ThetaBand::open(0.4, 0.6),
            mu_min: 0.5,
            aspect: None,
        },
        below: StackRule {
            theta: ThetaBand::open(-0.6, -0.4),
            mu_min: 0.5,
            aspect: None,
        },
        superscript: ScriptRule {
            theta: ThetaBand::closed(0.1, 0.4),
            mu_max: 0.5,
            aspect: None,
        },
        subscript: ScriptRule {
            theta: ThetaBand::closed(-0.4, -0.1),
            mu_max: 0.5,
            aspect: None,
        },
        right: RightRule {
            theta: ThetaBand::open(-0.1, 0.1),
            lambda_min: 0.3,
            aspect: None,
        },
        inside: InsideRule {
            containment_min: 0.85,
            containers: [SQRT_LABEL.to_string()].into_iter().collect(),
        },
        script_return_band: 0.25,
        priority: vec![
            RelationLabel::Inside,
            RelationLabel::Above,
            RelationLabel::Below,
            RelationLabel::Superscript,
            RelationLabel::Subscript,
            RelationLabel::Right,
        ],
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.units != PI_RADIANS {
            return Err(ConfigError::Invalid(format!(
                "units must be {PI_RADIANS:?}, found {:?}",
                self.units
            )));
        }
        self.above.theta.check("above")?;
        self.below.theta.check("below")?;
        self.superscript.theta.check("superscript")?;
        self.subscript.theta.check("subscript")?;
        self.right.theta.check("right")?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("above.mu_min", self.above.mu_min)?;
        unit("below.mu_min", self.below.mu_min)?;
        unit("superscript.mu_max", self.superscript.mu_max)?;
        unit("subscript.mu_max", self.subscript.mu_max)?;
        unit("right.lambda_min", self.right.lambda_min)?;
        if !(self.inside.containment_min > 0.0 && self.inside.containment_min <= 1.0) {
            return Err(ConfigError::Invalid("inside.containment_min outside (0, 1]".into()));
        }
        if !(self.script_return_band.is_finite() && self.script_return_band >= 0.0) {
            return Err(ConfigError::Invalid("script_return_band must be >= 0".into()));
        }
        let expected: BTreeSet<_> = RelationLabel::ALL
            .into_iter()
            .filter(|r| *r != RelationLabel::Unrelated)
            .collect();
        let given: BTreeSet<_> = self.priority.iter().copied().collect();
        if given != expected || self.priority.len() != expected.len() {
            return Err(ConfigError::Invalid(
                "priority must list each relation except Unrelated exactly once".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RuleConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("rules serialize");
        out.push('\n');
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn is_container(&self, label: &str) -> bool {
        self.inside.containers.contains(label)
    }

    fn holds(&self, relation: RelationLabel, f: &PairFeatures) -> bool {
        let aspect_ok = |a: &Option<AspectBounds>| a.as_ref().is_none_or(|a| a.admits(f));
        match relation {
            RelationLabel::Above => {
                self.above.theta.contains(f.theta) && f.mu > self.above.mu_min && aspect_ok(&self.above.aspect)
            }
            RelationLabel::Below => {
                self.below.theta.contains(f.theta) && f.mu > self.below.mu_min && aspect_ok(&self.below.aspect)
            }
            RelationLabel::Superscript => {
                self.superscript.theta.contains(f.theta)
                    && f.mu <= self.superscript.mu_max
                    && aspect_ok(&self.superscript.aspect)
            }
            RelationLabel::Subscript => {
                self.subscript.theta.contains(f.theta)
                    && f.mu <= self.subscript.mu_max
                    && aspect_ok(&self.subscript.aspect)
            }
            RelationLabel::Right => {
                self.right.theta.contains(f.theta)
                    && f.lambda > self.right.lambda_min
                    && aspect_ok(&self.right.aspect)
            }
            RelationLabel::Inside | RelationLabel::Unrelated => false,
        }
    }
}

/// Fraction of `inner`'s area covered by `outer`.
pub fn containment(outer: &SymbolBox, inner: &SymbolBox) -> f64 {
    let w = interval_overlap(outer.x_min, outer.x_max(), inner.x_min, inner.x_max());
    let h = interval_overlap(outer.y_min, outer.y_max(), inner.y_min, inner.y_max());
    ((w * h) / inner.area()).clamp(0.0, 1.0)
}

/// Classifies `adjacent` relative to `reference`.
///
/// Inside only needs areas, so it is decided even for coincident centers;
/// every angular rule is skipped for such degenerate pairs.
pub fn classify(reference: &SymbolBox, adjacent: &SymbolBox, config: &RuleConfig) -> RelationLabel {
    let features = pair_features(reference, adjacent).ok();
    for &relation in &config.priority {
        let hit = match relation {
            RelationLabel::Inside => {
                config.is_container(&reference.label)
                    && containment(reference, adjacent) >= config.inside.containment_min
            }
            other => features.as_ref().is_some_and(|f| config.holds(other, f)),
        };
        if hit {
            return relation;
        }
    }
    RelationLabel::Unrelated
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> SymbolBox {
        SymbolBox::new("x", x, y, w, h)
    }

    #[test]
    fn defaults_match_stated_rule() {
        let c = default_config();
        c.validate().unwrap();
        assert_eq!(c.above.theta.min, 0.4);
        assert_eq!(c.above.theta.max, 0.6);
        assert_eq!(c.above.mu_min, 0.5);
        assert_eq!((c.below.theta.min, c.below.theta.max), (-0.6, -0.4));
        assert_eq!(c.below.theta.min, -c.above.theta.max);
        assert_eq!(c.below.theta.max, -c.above.theta.min);
    }

    #[test]
    fn config_json_round_trip_and_validation() {
        let c = default_config();
        let text = c.to_json();
        assert!(text.contains("\"units\": \"pi_radians\""));
        assert_eq!(RuleConfig::from_json(&text).unwrap(), c);

        let mut bad = c.clone();
        bad.right.theta = ThetaBand::open(0.2, 0.1);
        assert!(RuleConfig::from_json(&bad.to_json()).is_err());
        let mut bad = c.clone();
        bad.priority.pop();
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.units = "radians".into();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn containment_cases() {
        let outer = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(containment(&outer, &bx(2.0, 2.0, 3.0, 3.0)), 1.0);
        assert_eq!(containment(&outer, &bx(20.0, 2.0, 3.0, 3.0)), 0.0);
        assert_eq!(containment(&outer, &bx(8.0, 0.0, 4.0, 10.0)), 0.5);
    }

    #[test]
    fn classify_examples() {
        let c = default_config();
        // theta = 0.5 pi, mu = 0.9
        let r = bx(0.0, 20.0, 10.0, 10.0);
        let a = bx(0.5, 0.0, 9.0, 10.0);
        assert_eq!(classify(&r, &a, &c), RelationLabel::Above);
        // rightward translate of an identical box
        assert_eq!(classify(&r, &bx(15.0, 20.0, 10.0, 10.0), &c), RelationLabel::Right);
        // small box up-right at 45 degrees, no horizontal overlap
        let sup = bx(12.0, 8.0, 4.0, 4.0);
        assert_eq!(classify(&r, &sup, &c), RelationLabel::Superscript);
        // mirrored
        let sub = bx(12.0, 28.0, 4.0, 4.0);
        assert_eq!(classify(&r, &sub, &c), RelationLabel::Subscript);
        // far to the left
        assert_eq!(classify(&r, &bx(-50.0, 20.0, 10.0, 10.0), &c), RelationLabel::Unrelated);
    }

    #[test]
    fn inside_requires_container_label() {
        let c = default_config();
        let outer = SymbolBox::new(SQRT_LABEL, 0.0, 0.0, 30.0, 20.0);
        let inner = bx(10.0, 5.0, 10.0, 10.0);
        assert_eq!(classify(&outer, &inner, &c), RelationLabel::Inside);
        let plain = bx(0.0, 0.0, 30.0, 20.0);
        assert_eq!(classify(&plain, &inner, &c), RelationLabel::Unrelated);
    }

    #[test]
    fn coincident_centers_are_unrelated() {
        let c = default_config();
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(classify(&a, &bx(2.0, 2.0, 6.0, 6.0), &c), RelationLabel::Unrelated);
    }

    #[test]
    fn aspect_bounds_restrict_rules() {
        let mut c = default_config();
        c.right.aspect = Some(AspectBounds { alpha: Some([0.9, 1.1]), beta: None });
        let r = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(classify(&r, &bx(15.0, 0.0, 10.0, 10.0), &c), RelationLabel::Right);
        assert_eq!(classify(&r, &bx(15.0, 0.0, 30.0, 10.0), &c), RelationLabel::Unrelated);
    }

    #[test]
    fn relation_names_parse() {
        for r in RelationLabel::ALL {
            assert_eq!(r.as_str().parse::<RelationLabel>().unwrap(), r);
        }
        assert_eq!(RelationLabel::ALL.len(), 7);
    }

    fn arb_box() -> impl Strategy<Value = SymbolBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    fn reflect(b: &SymbolBox, axis_y: f64) -> SymbolBox {
        SymbolBox { y_min: 2.0 * axis_y - b.y_max(), ..b.clone() }
    }

    proptest! {
        #[test]
        fn mirror_swaps_vertical_relations(r in arb_box(), a in arb_box()) {
            let c = default_config();
            let axis = r.y_min + r.height / 2.0;
            let before = classify(&r, &a, &c);
            let after = classify(&reflect(&r, axis), &reflect(&a, axis), &c);
            prop_assert_eq!(after, before.mirrored());
        }

        #[test]
        fn classify_translation_and_scale_invariant(
            r in arb_box(), a in arb_box(),
            tx in -1000.0..1000.0f64, ty in -1000.0..1000.0f64, s in 0.5..4.0f64,
        ) {
            let c = default_config();
            let f = |b: &SymbolBox| bx(b.x_min * s + tx, b.y_min * s + ty, b.width * s, b.height * s);
            let before = pair_features(&r, &a);
            let after = pair_features(&f(&r), &f(&a));
            // skip pairs sitting within rounding distance of a band edge
            let near_edge = match before {
                Ok(p) => {
                    let t = p.theta / PI;
                    [0.1, 0.4, 0.6, -0.1, -0.4, -0.6].iter().any(|e| (t - e).abs() < 1e-9)
                        || [0.3, 0.5].iter().any(|e| (p.mu - e).abs() < 1e-9 || (p.lambda - e).abs() < 1e-9)
                }
                Err(_) => true,
            };
            prop_assume!(!near_edge && after.is_ok());
            prop_assert_eq!(classify(&r, &a, &c), classify(&f(&r), &f(&a), &c));
        }
    }
}
