//! Construction of the constant growth coefficients and reparametrizations.
//!
//! Given a system of m disjoint slits, the goal is a coefficient vector
//! λ ∈ (0,1)^m with Σλ = 1 and monotone reparametrizations u_k with
//! u_k(0) = 0, u_k(L) = 1, such that growing each slit to `u_k(t)` of its
//! arclength keeps the logarithmic mapping radius equal to `t` for all
//! t ∈ [0, L].
//!
//! The approximation scheme alternates slit growth over an n-cell partition:
//! in each cell every slit in turn advances until the mapping radius has
//! gained exactly `λ_k · L / n`. For the right λ the schedule lands every
//! slit exactly on its original tip when the radius reaches L; λ is found by
//! a bracketed root solve on that landing condition, and refining n yields a
//! converging sequence of coefficient vectors and growth tables.
//!
//! Slits are first prolonged past their tips (see
//! [`SlitSystem::extend`](crate::geometry::SlitSystem::extend)) so that every
//! intermediate advance has room to overshoot; the original configuration is
//! pinned to interior fractions of the extended system.

use std::cell::RefCell;

use num_complex::Complex64;

use crate::error::{ConstructError, GeometryError, OracleError};
use crate::geometry::SlitSystem;
use crate::lmr::{converged_full_lmr, LmrOracle, MonotoneTable};
use crate::roots::{solve_bracketed_with, RootError};

/// Levels `base^e` for `e` in `from_exp..=to_exp`, e.g. dyadic `[4,…,64]`
/// via `(2, 2, 6)` or triadic `[3, 9, 27, 81]` via `(3, 1, 4)`.
pub fn geometric_levels(base: usize, from_exp: u32, to_exp: u32) -> Vec<usize> {
    (from_exp..=to_exp).map(|e| base.pow(e)).collect()
}

/// Tuning for the construction pipeline.
#[derive(Debug, Clone)]
pub struct ConstructOptions {
    /// Accuracy target handed to the lmr oracle's resolution policy.
    pub accuracy: f64,
    /// Partition sizes to sweep, coarse to fine.
    pub levels: Vec<usize>,
    /// Early-stop tolerance on successive coefficient vectors; `0` disables
    /// early stopping so the finest requested level is always reached.
    pub lambda_tol: f64,
    /// Early-stop tolerance on successive growth tables (sup norm).
    pub table_tol: f64,
    /// Residual tolerance (lmr units) for the per-cell advance solves.
    pub root_ftol: f64,
    /// Residual tolerance (arclength-fraction units) for the landing solve
    /// that determines λ.
    pub lambda_ftol: f64,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions {
            accuracy: 1e-6,
            levels: geometric_levels(2, 2, 6),
            lambda_tol: 1e-3,
            table_tol: 1e-3,
            root_ftol: 1e-8,
            lambda_ftol: 1e-7,
        }
    }
}

/// One alternating-growth schedule at a fixed partition size.
#[derive(Debug, Clone)]
pub struct PartitionLevel {
    /// Number of partition cells.
    pub n: usize,
    /// Coefficient vector the schedule was built with.
    pub lambda: Vec<f64>,
    /// Per-slit extended-arclength fractions after each cell; each table has
    /// `n + 1` entries starting at 0.
    pub t_tables: Vec<Vec<f64>>,
    /// `|lmr(final tuple) − L|`.
    pub residual: f64,
}

/// Convergence trace entry for one level.
#[derive(Debug, Clone)]
pub struct LevelDiag {
    pub n: usize,
    pub lambda: Vec<f64>,
    /// Landing residual `max_k |t_k(end) − F_k|` in fraction units.
    pub residual: f64,
    /// `max_k |λ_k − λ_k(previous level)|`, if a previous level exists.
    pub lambda_diff: Option<f64>,
    /// Sup distance between consecutive growth tables, if available.
    pub table_diff: Option<f64>,
}

/// The converged output of [`Constructor::construct`].
#[derive(Debug, Clone)]
pub struct ConstantCoeffSolution {
    /// Growth coefficients, one per slit, positive with unit sum.
    pub lambda: Vec<f64>,
    /// Time grid `0 = t_0 < … < t_n = L`.
    pub grid: Vec<f64>,
    /// Reparametrizations: fraction of each *original* slit grown at each
    /// grid time; `u_k(0) = 0`, `u_k(L) = 1`.
    pub u_tables: Vec<MonotoneTable>,
    /// The same schedules in *extended* arclength fractions, the coordinate
    /// system of the oracle.
    pub prefix_tables: Vec<MonotoneTable>,
    /// Driving functions: unit-modulus preimages of each slit tip at each
    /// grid time.
    pub xi_tables: Vec<Vec<Complex64>>,
    /// Total time horizon `L = lmr(whole original system)`.
    pub l_total: f64,
    /// Per-level convergence trace.
    pub levels: Vec<LevelDiag>,
    /// `max_k |lmr(schedule(t_k)) − t_k|` over the final grid.
    pub diag_residual: f64,
    /// Largest chordal jump between consecutive driving values.
    pub xi_max_jump: f64,
}

/// Owns the extended system's oracle and runs the construction.
#[derive(Debug)]
pub struct Constructor {
    oracle: LmrOracle,
    original_fractions: Vec<f64>,
    l_total: f64,
    opts: ConstructOptions,
}

fn map_root_err(e: RootError, n: usize) -> ConstructError {
    match e {
        RootError::NoSignChange { f_lo, f_hi } => ConstructError::NonConvergence {
            iterations: 0,
            residuals: vec![f_lo.abs().max(f_hi.abs())],
        },
        RootError::TooManyIterations { max_iter, best } => ConstructError::NonConvergence {
            iterations: max_iter.max(n),
            residuals: vec![best],
        },
    }
}

impl Constructor {
    /// Validate, prolong every slit until it alone has mapping radius at
    /// least `headroom × L`, and freeze the oracle over the extended system.
    pub fn new(system: &SlitSystem, opts: ConstructOptions) -> Result<Self, ConstructError> {
        let report = system.validate();
        if !report.is_empty() {
            return Err(ConstructError::Geometry(GeometryError::Invalid(
                report.join("; "),
            )));
        }
        if system.extension_headroom <= 1.0 {
            return Err(ConstructError::Geometry(GeometryError::Invalid(format!(
                "extension headroom must exceed 1, got {}",
                system.extension_headroom
            ))));
        }
        let full: Vec<Vec<Complex64>> =
            system.slits.iter().map(|s| s.points.clone()).collect();
        let (_, base_lmr, _) = converged_full_lmr(&full, opts.accuracy)?;
        let extended = system.extend(system.extension_headroom * base_lmr)?;
        let original_fractions: Vec<f64> = system
            .slits
            .iter()
            .zip(&extended.slits)
            .map(|(orig, ext)| orig.total_length() / ext.total_length())
            .collect();
        let oracle = LmrOracle::new(extended, opts.accuracy)?;
        let l_total = oracle.lmr_at(&original_fractions)?;
        Ok(Constructor {
            oracle,
            original_fractions,
            l_total,
            opts,
        })
    }

    /// The oracle over the extended system.
    pub fn oracle(&self) -> &LmrOracle {
        &self.oracle
    }

    /// Fraction of each extended slit occupied by the original slit.
    pub fn original_fractions(&self) -> &[f64] {
        &self.original_fractions
    }

    /// Time horizon `L`.
    pub fn l_total(&self) -> f64 {
        self.l_total
    }

    /// Run the alternating-growth schedule for a fixed coefficient vector:
    /// in each of the `n` cells, slit `j` advances until the mapping radius
    /// has gained `λ_j · L / n`.
    pub fn build_level(&self, n: usize, lambda: &[f64]) -> Result<PartitionLevel, ConstructError> {
        let m = self.oracle.slit_count();
        assert_eq!(lambda.len(), m, "one coefficient per slit");
        let mut frac = vec![0.0; m];
        let mut lmr_now = self.oracle.lmr_at(&frac)?;
        let mut tables: Vec<Vec<f64>> = vec![Vec::with_capacity(n + 1); m];
        for t in &mut tables {
            t.push(0.0);
        }
        // Scale-aware first guess for the advance per cell: fractions grow
        // roughly linearly in lmr along the schedule.
        let mut inc: Vec<f64> = (0..m)
            .map(|j| (2.5 * lambda[j] * self.original_fractions[j] / n as f64).max(1e-4))
            .collect();
        for k in 1..=n {
            for j in 0..m {
                let target = lmr_now + lambda[j] * self.l_total / n as f64;
                let oracle_err: RefCell<Option<OracleError>> = RefCell::new(None);
                let mut eval = |x: f64| -> f64 {
                    let mut probe = frac.clone();
                    probe[j] = x;
                    match self.oracle.lmr_at(&probe) {
                        Ok(v) => v - target,
                        Err(e) => {
                            *oracle_err.borrow_mut() = Some(e);
                            0.0
                        }
                    }
                };
                let lo = frac[j];
                let flo = lmr_now - target;
                let mut hi = (lo + 1.6 * inc[j]).min(1.0);
                let mut fhi = eval(hi);
                while fhi < 0.0 && oracle_err.borrow().is_none() {
                    if hi >= 1.0 {
                        return Err(ConstructError::BracketFailure {
                            n,
                            step: k,
                            slit: j,
                            target: lambda[j] * self.l_total / n as f64,
                        });
                    }
                    hi = (lo + 2.0 * (hi - lo)).min(1.0);
                    fhi = eval(hi);
                }
                let root = solve_bracketed_with(
                    &mut eval,
                    (lo, flo),
                    (hi, fhi),
                    1e-13,
                    self.opts.root_ftol,
                    80,
                )
                .map_err(|e| map_root_err(e, n));
                if let Some(e) = oracle_err.into_inner() {
                    return Err(e.into());
                }
                let root = root?;
                inc[j] = (root.x - frac[j]).max(1e-9);
                frac[j] = root.x;
                lmr_now = self.oracle.lmr_at(&frac)?;
                tables[j].push(frac[j]);
            }
        }
        Ok(PartitionLevel {
            n,
            lambda: lambda.to_vec(),
            t_tables: tables,
            residual: (lmr_now - self.l_total).abs(),
        })
    }

    /// Landing error of slit `j` at the end of a schedule: where its prefix
    /// fraction ends up relative to the original tip.
    fn landing(&self, level: &PartitionLevel, j: usize) -> f64 {
        level.t_tables[j][level.n] - self.original_fractions[j]
    }

    /// Solve for the coefficient vector at partition size `n`: the λ for
    /// which every slit's schedule lands exactly on its original tip when
    /// the mapping radius reaches L.
    pub fn solve_lambda(
        &self,
        n: usize,
        warm: Option<&[f64]>,
    ) -> Result<PartitionLevel, ConstructError> {
        let m = self.oracle.slit_count();
        const EDGE: f64 = 1e-6;
        match m {
            1 => self.build_level(n, &[1.0]),
            2 => {
                let build_err: RefCell<Option<ConstructError>> = RefCell::new(None);
                let mut g = |x: f64| -> f64 {
                    match self.build_level(n, &[x, 1.0 - x]) {
                        Ok(level) => self.landing(&level, 0),
                        Err(e) => {
                            *build_err.borrow_mut() = Some(e);
                            0.0
                        }
                    }
                };
                // More weight on a slit advances it farther; the landing
                // error is increasing in its coefficient. Try a window
                // around the warm start first, then the full range.
                let center = warm.map(|w| w[0]).unwrap_or(0.5);
                let mut lo = (center - 0.12).max(EDGE);
                let mut hi = (center + 0.12).min(1.0 - EDGE);
                let mut flo = g(lo);
                let mut fhi = g(hi);
                if build_err.borrow().is_none() && flo > 0.0 {
                    lo = EDGE;
                    flo = g(lo);
                }
                if build_err.borrow().is_none() && fhi < 0.0 {
                    hi = 1.0 - EDGE;
                    fhi = g(hi);
                }
                if build_err.borrow().is_none() && (flo > 0.0 || fhi < 0.0) {
                    return Err(ConstructError::NonConvergence {
                        iterations: 0,
                        residuals: vec![flo.abs().min(fhi.abs())],
                    });
                }
                let root = solve_bracketed_with(
                    &mut g,
                    (lo, flo),
                    (hi, fhi),
                    1e-10,
                    self.opts.lambda_ftol,
                    40,
                )
                .map_err(|e| map_root_err(e, n));
                if let Some(e) = build_err.into_inner() {
                    return Err(e);
                }
                let root = root?;
                self.build_level(n, &[root.x, 1.0 - root.x])
            }
            _ => self.solve_lambda_multi(n, warm),
        }
    }

    /// Coordinatewise landing solve for three or more slits: sweep the
    /// coefficients, each time re-solving one against the last slit's share.
    fn solve_lambda_multi(
        &self,
        n: usize,
        warm: Option<&[f64]>,
    ) -> Result<PartitionLevel, ConstructError> {
        let m = self.oracle.slit_count();
        const EDGE: f64 = 1e-6;
        let mut lam: Vec<f64> = warm
            .map(|w| w.to_vec())
            .unwrap_or_else(|| vec![1.0 / m as f64; m]);
        let mut residual_history = Vec::new();
        for sweep in 1..=100 {
            for j in 0..m - 1 {
                let pool = lam[j] + lam[m - 1];
                let build_err: RefCell<Option<ConstructError>> = RefCell::new(None);
                let lam_probe = lam.clone();
                let mut g = |x: f64| -> f64 {
                    let mut probe = lam_probe.clone();
                    probe[j] = x;
                    probe[m - 1] = pool - x;
                    match self.build_level(n, &probe) {
                        Ok(level) => self.landing(&level, j),
                        Err(e) => {
                            *build_err.borrow_mut() = Some(e);
                            0.0
                        }
                    }
                };
                let lo = EDGE;
                let hi = pool - EDGE;
                let flo = g(lo);
                let fhi = g(hi);
                if build_err.borrow().is_none() && (flo > 0.0 || fhi < 0.0) {
                    return Err(ConstructError::NonConvergence {
                        iterations: sweep,
                        residuals: residual_history,
                    });
                }
                let root = solve_bracketed_with(
                    &mut g,
                    (lo, flo),
                    (hi, fhi),
                    1e-10,
                    self.opts.lambda_ftol,
                    40,
                )
                .map_err(|e| map_root_err(e, n));
                if let Some(e) = build_err.into_inner() {
                    return Err(e);
                }
                let root = root?;
                lam[m - 1] = pool - root.x;
                lam[j] = root.x;
            }
            let level = self.build_level(n, &lam)?;
            let worst = (0..m)
                .map(|j| self.landing(&level, j).abs())
                .fold(0.0, f64::max);
            residual_history.push(worst);
            if worst <= 4.0 * self.opts.lambda_ftol {
                return Ok(level);
            }
        }
        Err(ConstructError::NonConvergence {
            iterations: 100,
            residuals: residual_history,
        })
    }

    fn tables_for(&self, level: &PartitionLevel) -> (Vec<f64>, Vec<MonotoneTable>) {
        let n = level.n;
        let grid: Vec<f64> = (0..=n)
            .map(|k| self.l_total * k as f64 / n as f64)
            .collect();
        let prefix_tables = level
            .t_tables
            .iter()
            .map(|t| MonotoneTable::new(grid.clone(), t.clone()))
            .collect();
        (grid, prefix_tables)
    }

    /// Sweep the requested partition sizes, warm-starting each λ solve from
    /// the previous level, and assemble the finest (or first converged)
    /// schedule into a [`ConstantCoeffSolution`].
    pub fn construct(&self) -> Result<ConstantCoeffSolution, ConstructError> {
        if self.opts.levels.is_empty() {
            return Err(ConstructError::Geometry(GeometryError::Invalid(
                "no partition levels requested".into(),
            )));
        }
        let m = self.oracle.slit_count();
        let mut diags: Vec<LevelDiag> = Vec::new();
        let mut lambda_diffs: Vec<f64> = Vec::new();
        let mut prev: Option<PartitionLevel> = None;
        for &n in &self.opts.levels {
            let level = self.solve_lambda(n, prev.as_ref().map(|p| p.lambda.as_slice()))?;
            let landing = (0..m)
                .map(|j| self.landing(&level, j).abs())
                .fold(0.0, f64::max);
            let (lambda_diff, table_diff) = match &prev {
                Some(p) => {
                    let ld = level
                        .lambda
                        .iter()
                        .zip(&p.lambda)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    let (_, cur_tabs) = self.tables_for(&level);
                    let (_, prev_tabs) = self.tables_for(p);
                    let td = cur_tabs
                        .iter()
                        .zip(&prev_tabs)
                        .map(|(a, b)| a.sup_distance(b))
                        .fold(0.0, f64::max);
                    (Some(ld), Some(td))
                }
                None => (None, None),
            };
            diags.push(LevelDiag {
                n,
                lambda: level.lambda.clone(),
                residual: landing,
                lambda_diff,
                table_diff,
            });
            if let Some(ld) = lambda_diff {
                lambda_diffs.push(ld);
                let k = lambda_diffs.len();
                if k >= 3
                    && lambda_diffs[k - 1] > 1.5 * lambda_diffs[k - 2]
                    && lambda_diffs[k - 2] > 1.5 * lambda_diffs[k - 3]
                    && lambda_diffs[k - 1] > 1e-5
                {
                    return Err(ConstructError::RefinementStall {
                        diffs: lambda_diffs,
                    });
                }
            }
            let converged = match (lambda_diff, table_diff) {
                (Some(ld), Some(td)) => {
                    self.opts.lambda_tol > 0.0
                        && ld < self.opts.lambda_tol
                        && td < self.opts.table_tol
                }
                _ => false,
            };
            prev = Some(level);
            if converged {
                break;
            }
        }
        let mut level = prev.expect("at least one level was built");

        // Snap exact landings: the λ solve leaves each final fraction within
        // its residual tolerance of the original tip.
        for j in 0..m {
            let miss = self.landing(&level, j).abs();
            if miss < 1e-5 {
                let n = level.n;
                level.t_tables[j][n] = self.original_fractions[j];
            }
        }

        let (grid, prefix_tables) = self.tables_for(&level);
        let u_tables: Vec<MonotoneTable> = prefix_tables
            .iter()
            .zip(&self.original_fractions)
            .map(|(t, &f)| {
                MonotoneTable::new(
                    t.xs().to_vec(),
                    t.ys().iter().map(|&y| y / f).collect(),
                )
            })
            .collect();

        let mut xi_tables: Vec<Vec<Complex64>> = vec![Vec::with_capacity(grid.len()); m];
        let mut diag_residual = 0.0f64;
        for (k, &t) in grid.iter().enumerate() {
            let tuple: Vec<f64> = prefix_tables.iter().map(|tab| tab.ys()[k]).collect();
            diag_residual = diag_residual.max((self.oracle.lmr_at(&tuple)? - t).abs());
            let mapped = self.oracle.map_at(&tuple)?;
            for j in 0..m {
                let xi = mapped.tip_images[j]
                    .unwrap_or_else(|| self.oracle.system().slits[j].base());
                xi_tables[j].push(xi);
            }
        }
        let xi_max_jump = xi_tables
            .iter()
            .flat_map(|row| row.windows(2).map(|w| (w[1] - w[0]).norm()))
            .fold(0.0, f64::max);

        Ok(ConstantCoeffSolution {
            lambda: level.lambda.clone(),
            grid,
            u_tables,
            prefix_tables,
            xi_tables,
            l_total: self.l_total,
            levels: diags,
            diag_residual,
            xi_max_jump,
        })
    }

    /// Running per-slit coefficient integrals `c_j` over a partition `z` of
    /// `[0, t]`: advancing slit `j` alone across each cell and accumulating
    /// its mapping-radius gain. For the true schedule `c_j(t) → λ_j t` as the
    /// partition refines.
    pub fn coefficient_integrals(
        &self,
        solution: &ConstantCoeffSolution,
        z: &[f64],
    ) -> Result<Vec<Vec<f64>>, ConstructError> {
        let m = self.oracle.slit_count();
        let ok = z.len() >= 2
            && z[0].abs() <= 1e-12
            && z.windows(2).all(|w| w[1] > w[0])
            && z[z.len() - 1] <= self.l_total * (1.0 + 1e-9);
        if !ok {
            return Err(ConstructError::Oracle(OracleError::BadPartition));
        }
        let tuples: Vec<Vec<f64>> = z
            .iter()
            .map(|&t| solution.prefix_tables.iter().map(|tab| tab.eval(t)).collect())
            .collect();
        let mut out = vec![vec![0.0f64]; m];
        for l in 0..z.len() - 1 {
            let base = self.oracle.lmr_at(&tuples[l])?;
            for j in 0..m {
                let mut advanced = tuples[l].clone();
                advanced[j] = tuples[l + 1][j];
                let gain = self.oracle.lmr_at(&advanced)? - base;
                let prev = *out[j].last().unwrap();
                out[j].push(prev + gain);
            }
        }
        Ok(out)
    }
}
