//! Slit geometry: polyline slits in the unit disk, slit systems, prefix
//! extraction, validation, extension, and the JSON wire format.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::zipper;

/// Separations at or below this are treated as touching by `validate`.
const TOUCH_TOL: f64 = 1e-12;

/// Keep-out margins used while extending a slit: distance to the unit
/// circle, to the origin, to other slits, and to the slit's own earlier
/// segments.
const EXTEND_BOUNDARY_MARGIN: f64 = 0.02;
const EXTEND_ORIGIN_MARGIN: f64 = 0.02;
const EXTEND_OTHER_MARGIN: f64 = 0.015;
const EXTEND_SELF_MARGIN: f64 = 0.01;

/// Resolution of the single-slit map evaluations that steer `extend`; the
/// stop test only needs to clear its target, not resolve it finely.
const EXTEND_RESOLUTION: usize = 512;

const EXTEND_MAX_APPENDED: usize = 4000;

/// A simple polyline from the unit circle into the disk: the first point is
/// the base on the circle, every later point lies strictly inside.
#[derive(Debug, Clone, PartialEq)]
pub struct Slit {
    pub points: Vec<Complex64>,
}

impl Slit {
    pub fn new(points: Vec<Complex64>) -> Self {
        Slit { points }
    }

    /// Convenience for building from (re, im) pairs.
    pub fn from_pairs(pairs: &[[f64; 2]]) -> Self {
        Slit { points: pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect() }
    }

    pub fn base(&self) -> Complex64 {
        self.points[0]
    }

    pub fn tip(&self) -> Complex64 {
        *self.points.last().expect("slit has points")
    }

    pub fn total_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Sub-polyline holding the given fraction of total arclength, measured
    /// from the base, with an interpolated final point. Fraction 0 collapses
    /// to just the base; fraction 1 returns the full slit unchanged.
    pub fn prefix_points(&self, fraction: f64) -> Result<Vec<Complex64>, GeometryError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(GeometryError::FractionOutOfRange(fraction));
        }
        if fraction == 1.0 {
            return Ok(self.points.clone());
        }
        let total = self.total_length();
        let target = fraction * total;
        let mut out = vec![self.points[0]];
        if target <= 0.0 || total == 0.0 {
            return Ok(out);
        }
        let mut cum = 0.0;
        for seg in self.points.windows(2) {
            let (p, q) = (seg[0], seg[1]);
            let len = (q - p).norm();
            if len == 0.0 {
                continue;
            }
            if cum + len < target {
                out.push(q);
                cum += len;
            } else {
                let rest = target - cum;
                if rest > 1e-15 * total {
                    out.push(p + (q - p) * (rest / len));
                }
                break;
            }
        }
        Ok(out)
    }
}

/// A family of pairwise disjoint slits plus the safety factor applied to
/// the mapping-radius target when the slits are extended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemJson", into = "SystemJson")]
pub struct SlitSystem {
    pub slits: Vec<Slit>,
    pub extension_headroom: f64,
}

/// Canonical wire format: complex numbers as [re, im] pairs.
#[derive(Serialize, Deserialize)]
struct SystemJson {
    slits: Vec<Vec<[f64; 2]>>,
    extension_headroom: f64,
}

impl From<SlitSystem> for SystemJson {
    fn from(s: SlitSystem) -> Self {
        SystemJson {
            slits: s
                .slits
                .iter()
                .map(|sl| sl.points.iter().map(|p| [p.re, p.im]).collect())
                .collect(),
            extension_headroom: s.extension_headroom,
        }
    }
}

impl TryFrom<SystemJson> for SlitSystem {
    type Error = GeometryError;

    fn try_from(j: SystemJson) -> Result<Self, GeometryError> {
        if !j.extension_headroom.is_finite() {
            return Err(GeometryError::Parse("extension_headroom is not finite".into()));
        }
        for (i, sl) in j.slits.iter().enumerate() {
            for p in sl {
                if !p[0].is_finite() || !p[1].is_finite() {
                    return Err(GeometryError::Parse(format!(
                        "slit {i} contains a non-finite coordinate"
                    )));
                }
            }
        }
        Ok(SlitSystem {
            slits: j
                .slits
                .into_iter()
                .map(|sl| Slit { points: sl.into_iter().map(|p| Complex64::new(p[0], p[1])).collect() })
                .collect(),
            extension_headroom: j.extension_headroom,
        })
    }
}

fn cross(u: Complex64, v: Complex64) -> f64 {
    u.re * v.im - u.im * v.re
}

pub(crate) fn point_segment_dist(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn segments_properly_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0)
}

fn segment_segment_dist(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> f64 {
    if segments_properly_intersect(a, b, c, d) {
        return 0.0;
    }
    point_segment_dist(a, c, d)
        .min(point_segment_dist(b, c, d))
        .min(point_segment_dist(c, a, b))
        .min(point_segment_dist(d, a, b))
}

/// Minimum distance between two polylines.
pub fn polyline_dist(p: &[Complex64], q: &[Complex64]) -> f64 {
    let mut best = f64::INFINITY;
    if p.len() == 1 || q.len() == 1 {
        // Degenerate cases still compare pointwise.
        for &a in p {
            for &c in q {
                best = best.min((a - c).norm());
            }
        }
    }
    for sa in p.windows(2) {
        for sb in q.windows(2) {
            best = best.min(segment_segment_dist(sa[0], sa[1], sb[0], sb[1]));
        }
    }
    if p.len() >= 2 && q.len() == 1 {
        for sa in p.windows(2) {
            best = best.min(point_segment_dist(q[0], sa[0], sa[1]));
        }
    }
    if q.len() >= 2 && p.len() == 1 {
        for sb in q.windows(2) {
            best = best.min(point_segment_dist(p[0], sb[0], sb[1]));
        }
    }
    best
}

impl SlitSystem {
    pub fn new(slits: Vec<Slit>, extension_headroom: f64) -> Self {
        SlitSystem { slits, extension_headroom }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("slit system serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self, GeometryError> {
        serde_json::from_str(s).map_err(|e| GeometryError::Parse(e.to_string()))
    }

    /// Check every structural invariant and return one line per violation;
    /// an empty report means the system is admissible.
    pub fn validate(&self) -> Vec<String> {
        let mut report = Vec::new();
        if self.slits.is_empty() {
            report.push("system has no slits".to_string());
        }
        if !(self.extension_headroom > 0.0) {
            report.push(format!(
                "extension_headroom {} is not positive",
                self.extension_headroom
            ));
        }
        for (i, slit) in self.slits.iter().enumerate() {
            let pts = &slit.points;
            if pts.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
                report.push(format!("slit {i}: non-finite coordinate"));
                continue;
            }
            if pts.len() < 2 {
                report.push(format!("slit {i}: fewer than 2 points"));
                continue;
            }
            if ((pts[0].norm()) - 1.0).abs() > TOUCH_TOL {
                report.push(format!(
                    "slit {i}: base point modulus {} is not 1",
                    pts[0].norm()
                ));
            }
            for (j, p) in pts.iter().enumerate().skip(1) {
                let r = p.norm();
                if r >= 1.0 - TOUCH_TOL {
                    report.push(format!("slit {i}: point {j} modulus {r} is not inside the disk"));
                }
                if r <= TOUCH_TOL {
                    report.push(format!("slit {i}: point {j} coincides with the origin"));
                }
            }
            for (j, seg) in pts.windows(2).enumerate() {
                if (seg[1] - seg[0]).norm() <= TOUCH_TOL {
                    report.push(format!("slit {i}: segment {j} has zero length"));
                }
                if point_segment_dist(Complex64::new(0.0, 0.0), seg[0], seg[1]) <= TOUCH_TOL {
                    report.push(format!("slit {i}: segment {j} passes through the origin"));
                }
            }
            // Simplicity: non-adjacent segments must not meet.
            for j in 0..pts.len().saturating_sub(1) {
                for l in (j + 2)..pts.len() - 1 {
                    let d = segment_segment_dist(pts[j], pts[j + 1], pts[l], pts[l + 1]);
                    if d <= TOUCH_TOL {
                        report.push(format!(
                            "slit {i}: segments {j} and {l} intersect (self-intersection)"
                        ));
                    }
                }
            }
        }
        for i in 0..self.slits.len() {
            for j in (i + 1)..self.slits.len() {
                let (a, b) = (&self.slits[i], &self.slits[j]);
                if a.points.is_empty() || b.points.is_empty() {
                    continue;
                }
                if (a.base() - b.base()).norm() <= TOUCH_TOL {
                    report.push(format!("slits {i} and {j} share a base point"));
                }
                if polyline_dist(&a.points, &b.points) <= TOUCH_TOL {
                    report.push(format!("slits {i} and {j} are not disjoint"));
                }
            }
        }
        report
    }

    /// Logarithmic mapping radius of the disk minus one slit on its own.
    fn single_slit_lmr(points: &[Complex64]) -> Result<f64, GeometryError> {
        zipper::map_disk_minus_slits(
            std::slice::from_ref(&points.to_vec()),
            EXTEND_RESOLUTION.max(points.len()),
        )
        .map(|r| r.lmr_value)
        .map_err(|e| GeometryError::Invalid(format!("mapping failed during extension: {e}")))
    }

    /// Prolong every slit (tangentially, bending inward when blocked) until
    /// each one alone has logarithmic mapping radius at least `target_lmr`.
    /// Existing points are never touched; slits already past the target are
    /// returned unchanged.
    pub fn extend(&self, target_lmr: f64) -> Result<SlitSystem, GeometryError> {
        let mut out: Vec<Slit> = self.slits.clone();
        for idx in 0..out.len() {
            let mut pts = out[idx].points.clone();
            if pts.len() < 2 {
                return Err(GeometryError::Invalid(format!(
                    "slit {idx} has fewer than 2 points"
                )));
            }
            let mut appended = 0usize;
            while Self::single_slit_lmr(&pts)? < target_lmr {
                if appended >= EXTEND_MAX_APPENDED {
                    return Err(GeometryError::ExtensionBlocked {
                        slit: idx,
                        obstruction: "mapping-radius target not reached".into(),
                        appended,
                    });
                }
                let tip = *pts.last().unwrap();
                let prev = pts[pts.len() - 2];
                let dir = {
                    let d = tip - prev;
                    d / d.norm()
                };
                // Clearance to the nearest obstacle bounds a sensible step.
                let mut clearance = (1.0 - tip.norm()).min(tip.norm());
                for (l, other) in out.iter().enumerate() {
                    if l != idx {
                        clearance = clearance.min(polyline_dist(
                            std::slice::from_ref(&tip),
                            &other.points,
                        ));
                    }
                }
                let mut h = (0.3 * clearance).clamp(1e-3, 0.05);

                // Prefer rotating toward the origin when the straight
                // continuation is blocked.
                let inward = if cross(dir, -tip) >= 0.0 { 1.0 } else { -1.0 };
                let mut placed = None;
                'search: while h >= 1e-4 {
                    for step_deg in 0..18 {
                        let mut signs: &[f64] = &[inward, -inward];
                        if step_deg == 0 {
                            signs = &[1.0];
                        }
                        for &sgn in signs {
                            let phi = sgn * (step_deg as f64) * 10.0_f64.to_radians();
                            let cand = tip + dir * Complex64::from_polar(h, phi);
                            if self.extension_candidate_ok(&out, idx, &pts, tip, cand) {
                                placed = Some(cand);
                                break 'search;
                            }
                        }
                    }
                    h *= 0.5;
                }
                match placed {
                    Some(p) => {
                        pts.push(p);
                        appended += 1;
                    }
                    None => {
                        return Err(GeometryError::ExtensionBlocked {
                            slit: idx,
                            obstruction: self.describe_obstruction(&out, idx, tip),
                            appended,
                        });
                    }
                }
            }
            out[idx] = Slit { points: pts };
        }
        Ok(SlitSystem { slits: out, extension_headroom: self.extension_headroom })
    }

    fn extension_candidate_ok(
        &self,
        current: &[Slit],
        idx: usize,
        pts: &[Complex64],
        tip: Complex64,
        cand: Complex64,
    ) -> bool {
        if cand.norm() > 1.0 - EXTEND_BOUNDARY_MARGIN || cand.norm() < EXTEND_ORIGIN_MARGIN {
            return false;
        }
        let seg = [tip, cand];
        for (l, other) in current.iter().enumerate() {
            if l == idx {
                continue;
            }
            if polyline_dist(&seg, &other.points) < EXTEND_OTHER_MARGIN {
                return false;
            }
        }
        // Own polyline, excluding a trailing arclength window behind the tip;
        // otherwise densely sampled curves would flag their own freshest
        // segments as obstructions and could never grow.
        let window = 2.0 * (cand - tip).norm() + 4.0 * EXTEND_SELF_MARGIN;
        let mut keep = pts.len() - 1;
        let mut acc = 0.0;
        while keep > 0 && acc < window {
            acc += (pts[keep] - pts[keep - 1]).norm();
            keep -= 1;
        }
        if keep >= 1 {
            let head = &pts[..=keep];
            if polyline_dist(&seg, head) < EXTEND_SELF_MARGIN {
                return false;
            }
        }
        true
    }

    fn describe_obstruction(&self, current: &[Slit], idx: usize, tip: Complex64) -> String {
        let to_boundary = 1.0 - tip.norm();
        let to_origin = tip.norm();
        let mut best = if to_boundary < to_origin {
            ("unit circle".to_string(), to_boundary)
        } else {
            ("origin".to_string(), to_origin)
        };
        for (l, other) in current.iter().enumerate() {
            if l == idx {
                continue;
            }
            let d = polyline_dist(std::slice::from_ref(&tip), &other.points);
            if d < best.1 {
                best = (format!("slit {l}"), d);
            }
        }
        best.0
    }
}
