//! Pairwise geometric features of two symbol boxes.
//!
//! For an ordered pair `(reference, adjacent)` five quantities are derived:
//! the center offset angle `theta`, the extent ratios `alpha`/`beta` and the
//! projection overlap ratios `lambda`/`mu`. "Length" is the horizontal extent
//! of a box and "width" its vertical extent. Angles use math orientation, so
//! an adjacent symbol above the reference has a positive angle even though
//! image y grows downward.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detections::SymbolBox;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("degenerate pair: both boxes are centered at ({x}, {y})")]
pub struct DegeneratePair {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    /// Center offset angle in radians, in (-pi, pi].
    pub theta: f64,
    /// Horizontal extent ratio reference / adjacent.
    pub alpha: f64,
    /// Vertical extent ratio reference / adjacent.
    pub beta: f64,
    /// Shared vertical projection over the reference's height.
    pub lambda: f64,
    /// Shared horizontal projection over the reference's width.
    pub mu: f64,
}

pub fn center(b: &SymbolBox) -> (f64, f64) {
    (b.x_min + b.width / 2.0, b.y_min + b.height / 2.0)
}

/// Maps any angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

pub fn center_offset_theta(reference: &SymbolBox, adjacent: &SymbolBox) -> Result<f64, DegeneratePair> {
    let (rx, ry) = center(reference);
    let (ax, ay) = center(adjacent);
    let dx = ax - rx;
    // flip image y so that "up" is positive
    let dy = ry - ay;
    if dx == 0.0 && dy == 0.0 {
        return Err(DegeneratePair { x: rx, y: ry });
    }
    let theta = dy.atan2(dx);
    // atan2(-0.0, negative) yields -pi
    Ok(if theta <= -PI { PI } else { theta })
}

pub fn aspect_ratios(reference: &SymbolBox, adjacent: &SymbolBox) -> (f64, f64) {
    (
        reference.width / adjacent.width,
        reference.height / adjacent.height,
    )
}

/// Length of the intersection of `[lo_a, hi_a]` and `[lo_b, hi_b]`, zero when disjoint.
pub fn interval_overlap(lo_a: f64, hi_a: f64, lo_b: f64, hi_b: f64) -> f64 {
    (hi_a.min(hi_b) - lo_a.max(lo_b)).max(0.0)
}

/// `(lambda, mu)`: vertical and horizontal shared projection, each divided by
/// the reference's extent on that axis.
pub fn overlap_ratios(reference: &SymbolBox, adjacent: &SymbolBox) -> (f64, f64) {
    let vertical = interval_overlap(
        reference.y_min,
        reference.y_max(),
        adjacent.y_min,
        adjacent.y_max(),
    );
    let horizontal = interval_overlap(
        reference.x_min,
        reference.x_max(),
        adjacent.x_min,
        adjacent.x_max(),
    );
    (
        (vertical / reference.height).clamp(0.0, 1.0),
        (horizontal / reference.width).clamp(0.0, 1.0),
    )
}

pub fn pair_features(reference: &SymbolBox, adjacent: &SymbolBox) -> Result<PairFeatures, DegeneratePair> {
    let theta = center_offset_theta(reference, adjacent)?;
    let (alpha, beta) = aspect_ratios(reference, adjacent);
    let (lambda, mu) = overlap_ratios(reference, adjacent);
    Ok(PairFeatures {
        theta,
        alpha,
        beta,
        lambda,
        mu,
    })
}
