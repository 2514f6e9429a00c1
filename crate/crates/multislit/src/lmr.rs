//! The logarithmic mapping radius (lmr) as a function of slit prefix
//! fractions.
//!
//! [`LmrOracle`] freezes a slit system into per-slit master polylines at a
//! resolution chosen by a doubling test, then answers
//! `lmr(f_1, …, f_m) = log h'(0)` for any tuple of arclength fractions by
//! unzipping the corresponding prefixes. Prefix vertices are always taken
//! from the master polyline (plus one interpolated tip), so values vary
//! smoothly with the fractions and repeated queries hit a concurrent cache.
//!
//! The module also provides the four partition sums used to identify the
//! per-slit growth coefficients, and an empirical continuity modulus for the
//! difference-quotient comparison that underpins them.

use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::OracleError;
use crate::geometry::SlitSystem;
use crate::zipper::{self, MappingResult};

/// Fractions are quantized to this grid before any evaluation, so cache keys
/// are exact and every query in the same cell returns bit-identical values.
const FRACTION_QUANTUM: f64 = 1e9;

/// Resolution ladder for the doubling test: the oracle settles on the first
/// rung whose value agrees with the next rung within the accuracy target.
const RESOLUTION_LADDER: [usize; 5] = [128, 256, 512, 1024, 2048];

/// One slit frozen at the chosen resolution, with cumulative arclength per
/// vertex for fast prefix extraction.
#[derive(Debug, Clone)]
struct Master {
    points: Vec<Complex64>,
    cum: Vec<f64>,
    total: f64,
}

impl Master {
    fn new(points: Vec<Complex64>) -> Self {
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for w in points.windows(2) {
            acc += (w[1] - w[0]).norm();
            cum.push(acc);
        }
        Master {
            points,
            cum,
            total: acc,
        }
    }

    /// Vertices of the prefix covering `fraction` of the arclength: master
    /// vertices verbatim plus one interpolated tip (skipped when it would
    /// coincide with the last kept vertex).
    fn prefix(&self, fraction: f64) -> Vec<Complex64> {
        if fraction <= 0.0 || self.total == 0.0 {
            return vec![self.points[0]];
        }
        if fraction >= 1.0 {
            return self.points.clone();
        }
        let target = fraction * self.total;
        let pos = self.cum.partition_point(|&c| c <= target);
        let mut out = self.points[..pos].to_vec();
        let covered = self.cum[pos - 1];
        if target - covered > 1e-15 * self.total && pos < self.points.len() {
            let seg = self.cum[pos] - covered;
            let s = (target - covered) / seg;
            out.push(self.points[pos - 1] + (self.points[pos] - self.points[pos - 1]) * s);
        }
        out
    }
}

/// Evaluate the full-system lmr on the resolution ladder until two successive
/// rungs agree within `accuracy`. Returns `(resolution, value, est_accuracy)`
/// where the value belongs to the accepted (smaller) rung; if the ladder is
/// exhausted the top rung is returned with the last observed difference.
pub(crate) fn converged_full_lmr(
    prefixes: &[Vec<Complex64>],
    accuracy: f64,
) -> Result<(usize, f64, f64), OracleError> {
    let accuracy = accuracy.max(1e-12);
    let mut prev: Option<(usize, f64)> = None;
    let mut last_diff = f64::NAN;
    for &res in &RESOLUTION_LADDER {
        let value = zipper::map_disk_minus_slits(prefixes, res)?.lmr_value;
        if let Some((prev_res, prev_value)) = prev {
            last_diff = (value - prev_value).abs();
            if last_diff <= accuracy {
                return Ok((prev_res, prev_value, last_diff));
            }
        }
        prev = Some((res, value));
    }
    let (res, value) = prev.expect("resolution ladder is non-empty");
    Ok((res, value, last_diff))
}

/// Cached evaluator of `lmr(f_1, …, f_m)` over a fixed slit system.
#[derive(Debug, Clone)]
pub struct LmrOracle {
    system: SlitSystem,
    masters: Vec<Master>,
    resolution: usize,
    est_accuracy: f64,
    cache: Arc<DashMap<Vec<u64>, f64>>,
}

impl LmrOracle {
    /// Freeze `system` at a resolution where the full-system lmr is stable
    /// within `accuracy` under doubling. The system's slits must already be
    /// pairwise disjoint; conditioning failures surface as zipper errors.
    pub fn new(system: SlitSystem, accuracy: f64) -> Result<Self, OracleError> {
        let full: Vec<Vec<Complex64>> = system.slits.iter().map(|s| s.points.clone()).collect();
        let (resolution, _, est_accuracy) = converged_full_lmr(&full, accuracy)?;
        let masters = zipper::resample(&full, resolution)
            .into_iter()
            .map(Master::new)
            .collect();
        Ok(LmrOracle {
            system,
            masters,
            resolution,
            est_accuracy,
            cache: Arc::new(DashMap::new()),
        })
    }

    /// Number of slits.
    pub fn slit_count(&self) -> usize {
        self.masters.len()
    }

    /// The slit system the oracle was built over.
    pub fn system(&self) -> &SlitSystem {
        &self.system
    }

    /// Resolution (total unzip events across all full slits) selected by the
    /// doubling test.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Observed doubling difference at the selected resolution: an empirical
    /// accuracy estimate, and the floor below which continuity claims are
    /// refused.
    pub fn est_accuracy(&self) -> f64 {
        self.est_accuracy
    }

    /// Number of distinct tuples evaluated so far.
    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    fn quantize(&self, fractions: &[f64]) -> Result<(Vec<u64>, Vec<f64>), OracleError> {
        if fractions.len() != self.masters.len() {
            return Err(OracleError::Arity {
                expected: self.masters.len(),
                got: fractions.len(),
            });
        }
        let mut key = Vec::with_capacity(fractions.len());
        let mut snapped = Vec::with_capacity(fractions.len());
        for &f in fractions {
            if !f.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&f) {
                return Err(OracleError::Fraction(f));
            }
            let q = (f.clamp(0.0, 1.0) * FRACTION_QUANTUM).round();
            key.push(q as u64);
            snapped.push(q / FRACTION_QUANTUM);
        }
        Ok((key, snapped))
    }

    fn prefixes_for(&self, snapped: &[f64]) -> Vec<Vec<Complex64>> {
        self.masters
            .iter()
            .zip(snapped)
            .map(|(m, &f)| m.prefix(f))
            .collect()
    }

    /// `lmr(f_1, …, f_m)`: the logarithmic mapping radius of the disk minus
    /// the given arclength prefixes of each slit.
    pub fn lmr_at(&self, fractions: &[f64]) -> Result<f64, OracleError> {
        let (key, snapped) = self.quantize(fractions)?;
        if let Some(hit) = self.cache.get(&key) {
            return Ok(*hit);
        }
        let value = zipper::map_presampled(&self.prefixes_for(&snapped))?.lmr_value;
        self.cache.insert(key, value);
        Ok(value)
    }

    /// Full mapping data (normalized map, tip images, step list) at a tuple.
    /// Uncached; use this for driving-function extraction, `lmr_at` for bulk
    /// value queries.
    pub fn map_at(&self, fractions: &[f64]) -> Result<MappingResult, OracleError> {
        let (_, snapped) = self.quantize(fractions)?;
        Ok(zipper::map_presampled(&self.prefixes_for(&snapped))?)
    }

    /// Fill an `n × n` grid of lmr values over `[0, top_1] × [0, top_2]`
    /// (two-slit systems only). Rows index the first slit's fraction.
    pub fn grid(&self, n: usize, tops: &[f64]) -> Result<Vec<Vec<f64>>, OracleError> {
        if self.slit_count() != 2 {
            return Err(OracleError::NotTwoSlits(self.slit_count()));
        }
        if tops.len() != 2 {
            return Err(OracleError::Arity {
                expected: 2,
                got: tops.len(),
            });
        }
        let axis = |top: f64| -> Vec<f64> {
            (0..n)
                .map(|i| top * i as f64 / (n - 1).max(1) as f64)
                .collect()
        };
        let (fs, gs) = (axis(tops[0]), axis(tops[1]));
        fs.par_iter()
            .map(|&f| gs.iter().map(|&g| self.lmr_at(&[f, g])).collect())
            .collect()
    }
}

/// Piecewise-linear table of a monotone function on `[0, T]`, used for the
/// reparametrizations `u_k` and their compositions with arclength scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl MonotoneTable {
    /// Build from matched samples; `xs` must be strictly increasing.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len(), "sample vectors must be matched");
        assert!(xs.len() >= 2, "need at least two samples");
        assert!(
            xs.windows(2).all(|w| w[1] > w[0]),
            "abscissae must be strictly increasing"
        );
        MonotoneTable { xs, ys }
    }

    /// Uniform table over `[0, span]`.
    pub fn uniform(span: f64, ys: Vec<f64>) -> Self {
        let n = ys.len();
        let xs = (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect();
        MonotoneTable::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn span(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Clamped linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= *self.xs.last().unwrap() {
            return *self.ys.last().unwrap();
        }
        let pos = self.xs.partition_point(|&t| t <= x);
        let (x0, x1) = (self.xs[pos - 1], self.xs[pos]);
        let (y0, y1) = (self.ys[pos - 1], self.ys[pos]);
        y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
    }

    /// Sup-norm distance to another table, sampled at both tables' nodes.
    pub fn sup_distance(&self, other: &MonotoneTable) -> f64 {
        let probe = |xs: &[f64]| -> f64 {
            xs.iter()
                .map(|&x| (self.eval(x) - other.eval(x)).abs())
                .fold(0.0, f64::max)
        };
        probe(&self.xs).max(probe(&other.xs))
    }
}

/// The four partition sums over a two-slit system: advancing one slit at a
/// time across each cell of the partition, in both orders.
#[derive(Debug, Clone)]
pub struct PartitionSums {
    /// Advance slit 1 first: Σ lmr(a(t_{l+1}), b(t_l)) − lmr(a(t_l), b(t_l)).
    pub s1: f64,
    /// Advance slit 2 first: Σ lmr(a(t_l), b(t_{l+1})) − lmr(a(t_l), b(t_l)).
    pub s2: f64,
    /// Slit-1 increment at the advanced second slit:
    /// Σ lmr(a(t_{l+1}), b(t_{l+1})) − lmr(a(t_l), b(t_{l+1})).
    pub s1_tilde: f64,
    /// Slit-2 increment at the advanced first slit:
    /// Σ lmr(a(t_{l+1}), b(t_{l+1})) − lmr(a(t_{l+1}), b(t_l)).
    pub s2_tilde: f64,
    /// The partition of `[0, t]` the sums were taken over.
    pub partition: Vec<f64>,
    /// Mesh of the partition.
    pub norm: f64,
}

/// Compute the four partition sums for prefix-fraction tables `a`, `b` over
/// the partition `z` of `[0, t]`. Requires a two-slit oracle, and `z` sorted
/// from 0 to `t`.
pub fn sums(
    oracle: &LmrOracle,
    a: &MonotoneTable,
    b: &MonotoneTable,
    t: f64,
    z: &[f64],
) -> Result<PartitionSums, OracleError> {
    if oracle.slit_count() != 2 {
        return Err(OracleError::NotTwoSlits(oracle.slit_count()));
    }
    let spans_range = z.len() >= 2
        && z[0].abs() <= 1e-12
        && (z[z.len() - 1] - t).abs() <= 1e-12 * t.max(1.0)
        && z.windows(2).all(|w| w[1] > w[0]);
    if !spans_range {
        return Err(OracleError::BadPartition);
    }
    let av: Vec<f64> = z.iter().map(|&s| a.eval(s)).collect();
    let bv: Vec<f64> = z.iter().map(|&s| b.eval(s)).collect();
    let (mut s1, mut s2, mut s1_tilde, mut s2_tilde) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..z.len() - 1 {
        let base = oracle.lmr_at(&[av[l], bv[l]])?;
        let adv1 = oracle.lmr_at(&[av[l + 1], bv[l]])?;
        let adv2 = oracle.lmr_at(&[av[l], bv[l + 1]])?;
        let both = oracle.lmr_at(&[av[l + 1], bv[l + 1]])?;
        s1 += adv1 - base;
        s2 += adv2 - base;
        s1_tilde += both - adv2;
        s2_tilde += both - adv1;
    }
    let norm = z.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(PartitionSums {
        s1,
        s2,
        s1_tilde,
        s2_tilde,
        partition: z.to_vec(),
        norm,
    })
}

/// Continuity-modulus report: the largest certified gap and the worst ratio
/// observed at that gap.
#[derive(Debug, Clone, Copy)]
pub struct ContinuityEstimate {
    /// Largest grid-aligned `δ` such that all difference-quotient ratios with
    /// both gaps ≤ δ stay within `(1−ε, 1+ε)`.
    pub delta: f64,
    /// Worst ratio deviation `|ratio − 1|` among the certified quadruples.
    pub worst_deviation: f64,
    /// Grid spacing used, as a lower bound on meaningful δ claims.
    pub grid_spacing: f64,
}

/// Estimate the modulus `δ(ε)` of the difference-quotient comparison on a
/// 33×33 grid over the oracle's full fraction domain: for fractions
/// `f̌ < f̂`, `ǧ < ĝ` with both gaps below δ,
///
/// ```text
/// lmr(f̂, ǧ) − lmr(f̌, ǧ)
/// ─────────────────────── ∈ (1−ε, 1+ε).
/// lmr(f̂, ĝ) − lmr(f̌, ĝ)
/// ```
///
/// Denominators within noise of the oracle's accuracy floor cannot certify a
/// ratio; if no candidate δ survives, the floor error is returned.
pub fn continuity_modulus(
    oracle: &LmrOracle,
    epsilon: f64,
) -> Result<ContinuityEstimate, OracleError> {
    const N: usize = 33;
    let grid = oracle.grid(N, &[1.0, 1.0])?;
    let spacing = 1.0 / (N - 1) as f64;
    let noise = 32.0 * oracle.est_accuracy().max(f64::EPSILON);
    for k in [8usize, 4, 2, 1] {
        let delta = k as f64 * spacing;
        let mut worst = 0.0f64;
        let mut certified = true;
        'scan: for i1 in 0..N {
            for i2 in i1 + 1..(i1 + k + 1).min(N) {
                for j1 in 0..N {
                    for j2 in j1 + 1..(j1 + k + 1).min(N) {
                        let num = grid[i2][j1] - grid[i1][j1];
                        let den = grid[i2][j2] - grid[i1][j2];
                        if den <= noise {
                            certified = false;
                            break 'scan;
                        }
                        let dev = (num / den - 1.0).abs();
                        if dev >= epsilon {
                            certified = false;
                            break 'scan;
                        }
                        worst = worst.max(dev);
                    }
                }
            }
        }
        if certified {
            return Ok(ContinuityEstimate {
                delta,
                worst_deviation: worst,
                grid_spacing: spacing,
            });
        }
    }
    Err(OracleError::FloorReached {
        eps: oracle.est_accuracy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Slit;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn radial_system(x: f64) -> SlitSystem {
        SlitSystem::new(
            vec![Slit::new(vec![c(1.0, 0.0), c(x, 0.0)])],
            1.5,
        )
    }

    fn pair_system() -> SlitSystem {
        SlitSystem::new(
            vec![
                Slit::new(vec![c(1.0, 0.0), c(0.45, 0.0)]),
                Slit::new(vec![c(-1.0, 0.0), c(-0.55, 0.0)]),
            ],
            1.5,
        )
    }

    fn radial_lmr(x: f64) -> f64 {
        ((1.0 + x) * (1.0 + x) / (4.0 * x)).ln()
    }

    #[test]
    fn zero_tuple_is_exactly_zero() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        assert_eq!(oracle.lmr_at(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn full_radial_slit_matches_closed_form() {
        let x = 0.35;
        let oracle = LmrOracle::new(radial_system(x), 1e-6).unwrap();
        let got = oracle.lmr_at(&[1.0]).unwrap();
        assert!(
            (got - radial_lmr(x)).abs() < 1e-8,
            "got {got}, want {}",
            radial_lmr(x)
        );
    }

    #[test]
    fn partial_radial_prefixes_match_closed_form() {
        let x = 0.3;
        let oracle = LmrOracle::new(radial_system(x), 1e-6).unwrap();
        for f in [0.25, 0.5, 0.75, 0.9] {
            let tip = 1.0 - f * (1.0 - x);
            let got = oracle.lmr_at(&[f]).unwrap();
            let want = radial_lmr(tip);
            assert!(
                (got - want).abs() < 1e-8,
                "f={f}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn values_increase_in_each_fraction() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let grid = oracle.grid(9, &[1.0, 1.0]).unwrap();
        for i in 0..9 {
            for j in 0..8 {
                assert!(grid[i][j + 1] > grid[i][j], "row {i} col {j}");
                assert!(grid[j + 1][i] > grid[j][i], "col {i} row {j}");
            }
        }
    }

    #[test]
    fn cache_and_rebuild_are_bit_reproducible() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let f = [0.412_345_678_9, 0.733_333_333_3];
        let first = oracle.lmr_at(&f).unwrap();
        let second = oracle.lmr_at(&f).unwrap();
        assert_eq!(first.to_bits(), second.to_bits());
        let rebuilt = LmrOracle::new(pair_system(), 1e-6).unwrap();
        assert_eq!(first.to_bits(), rebuilt.lmr_at(&f).unwrap().to_bits());
        assert_eq!(oracle.cache_len(), 1);
    }

    #[test]
    fn quantization_snaps_nearby_queries_to_one_cell() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let a = oracle.lmr_at(&[0.5, 0.5]).unwrap();
        let b = oracle.lmr_at(&[0.5 + 2e-11, 0.5 - 2e-11]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(oracle.cache_len(), 1);
    }

    #[test]
    fn rejects_bad_fractions_and_arity() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        assert!(matches!(
            oracle.lmr_at(&[1.2, 0.0]),
            Err(OracleError::Fraction(_))
        ));
        assert!(matches!(
            oracle.lmr_at(&[-0.1, 0.0]),
            Err(OracleError::Fraction(_))
        ));
        assert!(matches!(
            oracle.lmr_at(&[0.5]),
            Err(OracleError::Arity { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn straight_slits_settle_on_lowest_rung() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        assert_eq!(oracle.resolution(), 128);
        assert!(oracle.est_accuracy() < 1e-12);
    }

    #[test]
    fn monotone_table_interpolates_and_clamps() {
        let t = MonotoneTable::uniform(2.0, vec![0.0, 0.5, 1.0]);
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(3.0), 1.0);
        assert!((t.eval(0.5) - 0.25).abs() < 1e-15);
        assert!((t.eval(1.5) - 0.75).abs() < 1e-15);
        assert_eq!(t.span(), 2.0);
    }

    #[test]
    fn sums_telescope_to_corner_difference() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let a = MonotoneTable::uniform(1.0, vec![0.0, 0.3, 0.5, 0.8]);
        let b = MonotoneTable::uniform(1.0, vec![0.0, 0.2, 0.6, 0.7]);
        let z: Vec<f64> = (0..=6).map(|i| i as f64 / 6.0).collect();
        let s = sums(&oracle, &a, &b, 1.0, &z).unwrap();
        let corner = oracle.lmr_at(&[0.8, 0.7]).unwrap();
        assert!((s.s1 + s.s2_tilde - corner).abs() < 1e-12);
        assert!((s.s2 + s.s1_tilde - corner).abs() < 1e-12);
        assert!((s.norm - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn sums_reject_bad_partitions() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let a = MonotoneTable::uniform(1.0, vec![0.0, 1.0]);
        let b = a.clone();
        assert!(matches!(
            sums(&oracle, &a, &b, 1.0, &[0.0, 0.4]),
            Err(OracleError::BadPartition)
        ));
        assert!(matches!(
            sums(&oracle, &a, &b, 1.0, &[0.2, 1.0]),
            Err(OracleError::BadPartition)
        ));
        assert!(matches!(
            sums(&oracle, &a, &b, 1.0, &[0.0, 0.6, 0.5, 1.0]),
            Err(OracleError::BadPartition)
        ));
    }

    #[test]
    fn symmetric_pair_sums_agree_across_slits() {
        let system = SlitSystem::new(
            vec![
                Slit::new(vec![c(1.0, 0.0), c(0.5, 0.0)]),
                Slit::new(vec![c(-1.0, 0.0), c(-0.5, 0.0)]),
            ],
            1.5,
        );
        let oracle = LmrOracle::new(system, 1e-6).unwrap();
        let a = MonotoneTable::uniform(1.0, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let z: Vec<f64> = (0..=4).map(|i| i as f64 / 4.0).collect();
        let s = sums(&oracle, &a, &a, 1.0, &z).unwrap();
        assert!((s.s1 - s.s2).abs() < 1e-9, "s1={}, s2={}", s.s1, s.s2);
        assert!(
            (s.s1_tilde - s.s2_tilde).abs() < 1e-9,
            "s1~={}, s2~={}",
            s.s1_tilde,
            s.s2_tilde
        );
    }

    #[test]
    fn continuity_modulus_certifies_loose_epsilon() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        let est = continuity_modulus(&oracle, 1.0).unwrap();
        assert!(est.delta >= est.grid_spacing);
        assert!(est.worst_deviation < 1.0);
    }

    #[test]
    fn continuity_modulus_hits_floor_for_tiny_epsilon() {
        let oracle = LmrOracle::new(pair_system(), 1e-6).unwrap();
        assert!(matches!(
            continuity_modulus(&oracle, 1e-13),
            Err(OracleError::FloorReached { .. })
        ));
    }
}
