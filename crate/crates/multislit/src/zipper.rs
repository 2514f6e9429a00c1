//! Conformal mapping engine.
//!
//! Maps the unit disk minus a family of disjoint polyline slits onto the
//! disk, normalized so 0 maps to 0 with positive derivative, by composing
//! elementary slit maps in the upper half-plane (the geodesic "unzipping"
//! family). The log-derivative at 0 is tracked analytically through every
//! factor, so the logarithmic mapping radius comes out far more accurately
//! than the individual boundary images do.
//!
//! Coordinates: the disk is sent to the upper half-plane H by
//! M(z) = i(1-z)/(1+z), with M(0) = i and M'(0) = -2i. A global input
//! rotation first turns the configuration so that the largest angular gap
//! between slit base points straddles -1 (the pole of M), keeping all slit
//! data away from infinity in H.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::ZipperError;

/// Relative |Re a|/|a| below which a shifted tip is treated as a straight
/// vertical slit; the general two-parameter map degrades numerically as its
/// pole runs off to infinity, and the vertical map is its exact limit.
const VERTICAL_EPS: f64 = 1e-6;

/// Interior points may legitimately hug the real axis (slit bases live
/// there), but once Im falls below this relative floor the configuration is
/// numerically indistinguishable from touching slits.
const IM_COLLAPSE: f64 = 1e-13;

fn m_map(z: Complex64) -> Complex64 {
    Complex64::i() * (1.0 - z) / (1.0 + z)
}

/// Boundary restriction of `m_map`: for |u| = 1 the image is real.
fn m_map_boundary(u: Complex64) -> f64 {
    2.0 * u.im / (1.0 + u).norm_sqr()
}

/// w * sqrt(1 + (b/w)^2) with the principal square root. Written in factored
/// form so the branch cut falls exactly on the slit [0, ib] and nowhere else
/// in the closed upper half-plane.
fn sqrt_slit(w: Complex64, b: f64) -> Complex64 {
    let r = b / w;
    w * (1.0 + r * r).sqrt()
}

/// Real restriction of `sqrt_slit`: sign(x) * hypot(x, b).
fn sqrt_slit_real(x: f64, b: f64) -> f64 {
    x.signum() * x.hypot(b)
}

/// One elementary unzip factor, acting on coordinates already shifted so the
/// removed arc starts at the origin.
#[derive(Debug, Clone, Copy)]
enum Elem {
    /// Straight slit [0, ib]: z -> z*sqrt(1+(b/z)^2). Fixes the tip image 0.
    Vertical { b: f64 },
    /// Arc from 0 to a tilted tip, factored through the Möbius map
    /// T(z) = z/(1 - z/d) and the vertical map at height b, renormalized to
    /// look like z + O(1) at infinity:
    ///   G(z) = -s / (S(T(z)) - w_inf),
    /// with d = |a|^2/Re a, b = |a|^2/Im a, rho = hypot(d,b),
    /// w_inf = -sign(d)*rho, s = |d|^3/rho.
    General { d: f64, b: f64, w_inf: f64, s: f64 },
}

impl Elem {
    fn from_tip(a: Complex64) -> Elem {
        let r = a.norm();
        if a.re.abs() <= VERTICAL_EPS * r {
            Elem::Vertical { b: a.im }
        } else {
            let d = a.norm_sqr() / a.re;
            let b = a.norm_sqr() / a.im;
            let rho = d.hypot(b);
            Elem::General {
                d,
                b,
                w_inf: -d.signum() * rho,
                s: d.abs().powi(3) / rho,
            }
        }
    }

    /// Image of the advanced slit's tip (the point `a` itself).
    fn tip_image(&self) -> f64 {
        match *self {
            Elem::Vertical { .. } => 0.0,
            Elem::General { d, w_inf, s, .. } => {
                // s/w_inf = -sign(d)|d|^3/rho^2
                let _ = d;
                s / w_inf
            }
        }
    }

    /// Stable value of S(T(z)) - w_inf for the general map. Direct
    /// subtraction cancels as z -> infinity (T -> -d), so when it does we
    /// rationalize: S - w_inf = d^3 (2z - d) / ((d - z)^2 (S + w_inf)).
    fn general_denom(d: f64, b: f64, w_inf: f64, z: Complex64) -> (Complex64, Complex64, Complex64) {
        let w = d - z;
        let t = z * d / w;
        let s_val = sqrt_slit(t, b);
        let n1 = s_val - w_inf;
        let n2 = s_val + w_inf;
        let denom = if n1.norm_sqr() >= n2.norm_sqr() {
            n1
        } else {
            d * d * d * (2.0 * z - d) / (w * w * n2)
        };
        (denom, t, s_val)
    }

    fn apply(&self, z: Complex64) -> Complex64 {
        match *self {
            Elem::Vertical { b } => sqrt_slit(z, b),
            Elem::General { d, b, w_inf, s } => {
                if (d - z).norm_sqr() <= 1e-24 * d * d {
                    // At the pole of T the renormalized map passes smoothly
                    // through 0: G(z) = -s(1/z - 1/d) + O(d - z).
                    return -s * (1.0 / z - 1.0 / d);
                }
                let (denom, _, _) = Self::general_denom(d, b, w_inf, z);
                -s / denom
            }
        }
    }

    /// Map value and derivative at z in one pass (shares the stabilized
    /// denominator).
    fn apply_with_deriv(&self, z: Complex64) -> (Complex64, Complex64) {
        match *self {
            Elem::Vertical { b } => {
                let val = sqrt_slit(z, b);
                (val, z / val)
            }
            Elem::General { d, b, w_inf, s } => {
                if (d - z).norm_sqr() <= 1e-24 * d * d {
                    return (-s * (1.0 / z - 1.0 / d), s / (z * z));
                }
                let (denom, t, s_val) = Self::general_denom(d, b, w_inf, z);
                let w = d - z;
                let val = -s / denom;
                let deriv = s * (t / s_val) * (d * d / (w * w)) / (denom * denom);
                (val, deriv)
            }
        }
    }

    /// Real-axis restriction; boundary points (other slits' tips and bases)
    /// stay exactly real under every factor.
    fn apply_real(&self, x: f64) -> f64 {
        match *self {
            Elem::Vertical { b } => sqrt_slit_real(x, b),
            Elem::General { d, b, w_inf, s } => {
                if (d - x).abs() <= 1e-12 * d.abs() {
                    return -s * (1.0 / x - 1.0 / d);
                }
                let t = x * d / (d - x);
                let s_val = sqrt_slit_real(t, b);
                let n1 = s_val - w_inf;
                let n2 = s_val + w_inf;
                let denom = if n1.abs() >= n2.abs() {
                    n1
                } else {
                    d * d * d * (2.0 * x - d) / ((d - x) * (d - x) * n2)
                };
                -s / denom
            }
        }
    }
}

/// One recorded unzip step: shift the active slit's tip to the origin, then
/// apply the elementary factor.
#[derive(Debug, Clone, Copy)]
struct Step {
    shift: f64,
    elem: Elem,
    slit: usize,
    lmr_after: f64,
}

/// Normalized conformal map of the disk minus partial slits onto the disk.
#[derive(Debug, Clone)]
pub struct MappingResult {
    /// log g'(0) of the normalized map; 0 exactly when nothing was unzipped.
    pub lmr_value: f64,
    /// Final boundary image of each slit's tip; `None` for empty prefixes.
    pub tip_images: Vec<Option<Complex64>>,
    /// Number of elementary unzip steps actually composed.
    pub resolution: usize,
    /// Set when the requested resolution could not honor the input points.
    pub accuracy_warning: bool,
    rot_in: Complex64,
    rot_out: Complex64,
    z_star: Complex64,
    steps: Arc<Vec<Step>>,
    identity: bool,
}

impl MappingResult {
    /// Evaluate the map at a point of the slit-complement domain.
    pub fn evaluate(&self, z: Complex64) -> Complex64 {
        if self.identity {
            return z;
        }
        let mut w = m_map(self.rot_in * z);
        for step in self.steps.iter() {
            w = step.elem.apply(w - step.shift);
        }
        self.rot_out * (w - self.z_star) / (w - self.z_star.conj())
    }

    /// Diagnostic dump of the composed steps, one row per elementary map.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("step,slit,shift,kind,b,d,running_lmr\n");
        for (i, s) in self.steps.iter().enumerate() {
            let (kind, b, d) = match s.elem {
                Elem::Vertical { b } => ("vertical", b, f64::NAN),
                Elem::General { d, b, .. } => ("general", b, d),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i, s.slit, s.shift, kind, b, d, s.lmr_after
            ));
        }
        out
    }
}

/// Herglotz kernel specification for the canonical domain.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    /// Number of circular boundary arcs of the canonical domain. Only 0
    /// (plain unit disk) is computable here.
    pub connectivity: usize,
    /// Human-readable description of the canonical domain.
    pub domain_description: &'static str,
}

impl KernelSpec {
    pub fn disk() -> Self {
        KernelSpec { connectivity: 0, domain_description: "unit disk" }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::disk()
    }
}

/// Loewner kernel (u+w)/(u-w) of the unit disk: u on the boundary, w in the
/// closed disk away from u.
pub fn kernel(u: Complex64, w: Complex64, spec: &KernelSpec) -> Result<Complex64, ZipperError> {
    if spec.connectivity != 0 {
        return Err(ZipperError::UnsupportedConnectivity(spec.connectivity));
    }
    if (u.norm() - 1.0).abs() > 1e-9 {
        return Err(ZipperError::KernelDomain(format!("|u| = {} is not 1", u.norm())));
    }
    if w.norm() > 1.0 + 1e-9 {
        return Err(ZipperError::KernelDomain(format!("|w| = {} exceeds 1", w.norm())));
    }
    if (u - w).norm() <= 1e-12 {
        return Err(ZipperError::KernelPole);
    }
    Ok((u + w) / (u - w))
}

pub(crate) fn polyline_length(points: &[Complex64]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Subdivide every positive-length segment so no piece exceeds the target
/// spacing; original vertices are kept verbatim.
pub(crate) fn resample(prefixes: &[Vec<Complex64>], resolution: usize) -> Vec<Vec<Complex64>> {
    let total: f64 = prefixes.iter().map(|p| polyline_length(p)).sum();
    if total <= 0.0 {
        return prefixes.to_vec();
    }
    let h = total / resolution.max(1) as f64;
    prefixes
        .iter()
        .map(|poly| {
            if poly.is_empty() {
                return Vec::new();
            }
            let mut out = Vec::with_capacity(poly.len());
            out.push(poly[0]);
            for seg in poly.windows(2) {
                let (p, q) = (seg[0], seg[1]);
                let len = (q - p).norm();
                if len == 0.0 {
                    continue;
                }
                let pieces = ((len / h).ceil() as usize).clamp(1, 1_000_000);
                for i in 1..pieces {
                    out.push(p + (q - p) * (i as f64 / pieces as f64));
                }
                out.push(q);
            }
            out
        })
        .collect()
}

/// Conditioning floor: prefixes closer than this are rejected up front
/// rather than unzipped into garbage.
const SEPARATION_FLOOR: f64 = 1e-9;

/// Map the disk minus the given partial slits onto the disk, unzipping
/// roughly `resolution` points distributed over all slits by arclength.
/// Each prefix is a polyline whose first point is its base on the unit
/// circle; prefixes with fewer than two distinct points are treated as not
/// yet grown.
pub fn map_disk_minus_slits(
    prefixes: &[Vec<Complex64>],
    resolution: usize,
) -> Result<MappingResult, ZipperError> {
    for i in 0..prefixes.len() {
        for j in (i + 1)..prefixes.len() {
            if prefixes[i].len() < 2 || prefixes[j].len() < 2 {
                continue;
            }
            let d = crate::geometry::polyline_dist(&prefixes[i], &prefixes[j]);
            if d < SEPARATION_FLOOR {
                return Err(ZipperError::GeometricConflict {
                    step: 0,
                    detail: format!(
                        "prefixes {i} and {j} are only {d:.3e} apart; \
                         conditioning collapses below {SEPARATION_FLOOR:.0e}"
                    ),
                });
            }
        }
    }
    let input_points: usize = prefixes.iter().map(|p| p.len()).sum();
    let sampled = resample(prefixes, resolution);
    let mut result = map_presampled(&sampled)?;
    result.accuracy_warning = resolution < input_points;
    Ok(result)
}

/// Like [`map_disk_minus_slits`] but unzips the given points exactly as
/// supplied, with no internal resampling. This is what the lmr oracle uses:
/// it manages its own sampling so that values vary smoothly with the prefix
/// fractions it probes.
pub fn map_presampled(prefixes: &[Vec<Complex64>]) -> Result<MappingResult, ZipperError> {
    let m = prefixes.len();
    let active: Vec<bool> = prefixes.iter().map(|p| polyline_length(p) > 0.0).collect();

    if !active.iter().any(|&a| a) {
        return Ok(MappingResult {
            lmr_value: 0.0,
            tip_images: vec![None; m],
            resolution: 0,
            accuracy_warning: false,
            rot_in: Complex64::new(1.0, 0.0),
            rot_out: Complex64::new(1.0, 0.0),
            z_star: Complex64::i(),
            steps: Arc::new(Vec::new()),
            identity: true,
        });
    }

    // Rotate the largest angular gap between base points onto -1 so no slit
    // data sits near the pole of M.
    let mut angles: Vec<f64> = prefixes
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| p[0].arg())
        .collect();
    angles.sort_by(f64::total_cmp);
    let tau = std::f64::consts::TAU;
    let (mut best_gap, mut best_mid) = (-1.0, 0.0);
    for i in 0..angles.len() {
        let a = angles[i];
        let b = if i + 1 < angles.len() { angles[i + 1] } else { angles[0] + tau };
        if b - a > best_gap {
            best_gap = b - a;
            best_mid = 0.5 * (a + b);
        }
    }
    let rot_in = Complex64::from_polar(1.0, std::f64::consts::PI - best_mid);

    // Transform to H and build the merged event order by per-slit arclength
    // fraction (ties broken by slit index via the sort key layout).
    let mut pts: Vec<Vec<Complex64>> = Vec::with_capacity(m);
    let mut tips: Vec<Option<f64>> = Vec::with_capacity(m);
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    for (k, poly) in prefixes.iter().enumerate() {
        if poly.is_empty() {
            pts.push(Vec::new());
            tips.push(None);
            continue;
        }
        tips.push(Some(m_map_boundary(rot_in * poly[0])));
        let total = polyline_length(poly);
        let mut interior = Vec::with_capacity(poly.len().saturating_sub(1));
        if total > 0.0 {
            let mut cum = 0.0;
            let mut prev = poly[0];
            for &q in &poly[1..] {
                let len = (q - prev).norm();
                prev = q;
                if len == 0.0 {
                    continue;
                }
                cum += len;
                events.push((cum / total, k, interior.len()));
                interior.push(m_map(rot_in * q));
            }
        }
        pts.push(interior);
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut next = vec![0usize; m];
    let mut zs = Complex64::i();
    // Chain-rule product for g'(0), seeded with M'(0) * rot_in.
    let mut deriv = Complex64::new(0.0, -2.0) * rot_in;
    let mut steps: Vec<Step> = Vec::with_capacity(events.len());

    for &(_, k, idx) in &events {
        debug_assert_eq!(idx, next[k]);
        let shift = tips[k].expect("active slit has a tip");
        let a = pts[k][idx] - shift;
        if a.im <= 0.0 {
            return Err(ZipperError::GeometricConflict {
                step: steps.len(),
                detail: format!(
                    "slit {k} point left the upper half-plane (Im = {:.3e}); \
                     prefixes intersect or the sampling is too coarse",
                    a.im
                ),
            });
        }
        if a.norm() <= 1e-14 * (1.0 + shift.abs()) {
            return Err(ZipperError::GeometricConflict {
                step: steps.len(),
                detail: format!("slit {k} produced a zero-length unzip step"),
            });
        }
        let elem = Elem::from_tip(a);

        let (zs_new, dz) = elem.apply_with_deriv(zs - shift);
        zs = zs_new;
        deriv *= dz;

        for l in 0..m {
            let start = if l == k { idx + 1 } else { next[l] };
            for j in start..pts[l].len() {
                let p = elem.apply(pts[l][j] - shift);
                if p.im <= IM_COLLAPSE * (1.0 + p.re.abs()) {
                    return Err(ZipperError::GeometricConflict {
                        step: steps.len(),
                        detail: format!(
                            "slit {l} collapsed onto the boundary near Re = {:.6} \
                             (prefixes within working tolerance of each other)",
                            p.re
                        ),
                    });
                }
                pts[l][j] = p;
            }
        }
        for l in 0..m {
            if l == k {
                continue;
            }
            if let Some(t) = tips[l] {
                tips[l] = Some(elem.apply_real(t - shift));
            }
        }
        tips[k] = Some(elem.tip_image());
        next[k] = idx + 1;

        let lmr_after = (deriv.norm() / (2.0 * zs.im)).ln();
        steps.push(Step { shift, elem, slit: k, lmr_after });
    }

    // Renormalize: Möbius H -> D sending z* to 0, then rotate the total
    // derivative onto the positive real axis.
    let moebius_deriv = Complex64::new(0.0, -1.0) / (2.0 * zs.im);
    let total = deriv * moebius_deriv;
    let lmr_value = total.norm().ln();
    let rot_out = total.conj() / total.norm();

    let tip_images = (0..m)
        .map(|k| {
            if !active[k] {
                return None;
            }
            let t = tips[k].expect("active slit has a tip");
            let v = rot_out * (t - zs) / (t - zs.conj());
            Some(v / v.norm())
        })
        .collect();

    Ok(MappingResult {
        lmr_value,
        tip_images,
        resolution: steps.len(),
        accuracy_warning: false,
        rot_in,
        rot_out,
        z_star: zs,
        steps: Arc::new(steps),
        identity: false,
    })
}
