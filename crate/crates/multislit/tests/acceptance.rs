//! End-to-end acceptance checks for the whole pipeline, one test per claim.
//! Each test prints a `[label] PASS/FAIL` line (visible with `--nocapture`)
//! and asserts the stated tolerance.
//!
//! The heavyweight constructions (full level sweep per fixture) are built
//! once and shared across tests.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use once_cell::sync::Lazy;

use multislit::bangbang::{geometric_levels, ConstantCoeffSolution, ConstructOptions, Constructor};
use multislit::fixtures;
use multislit::geometry::SlitSystem;
use multislit::lmr::{continuity_modulus, sums};
use multislit::loewner::{
    regenerate_traces, roundtrip_report, solve_forward, ForwardOptions, RoundtripBounds, XiTable,
};
use multislit::zipper;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Report one acceptance line and fail the test if the check did not hold.
fn report(label: &str, pass: bool, detail: &str) {
    println!("[{label}] {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "[{label}] {detail}");
}

/// A fixture constructed at the default level sweep (up to 2^6), kept
/// together with its constructor (for the oracle) and the original system.
struct Built {
    system: SlitSystem,
    ctor: Constructor,
    sol: ConstantCoeffSolution,
}

fn build(system: SlitSystem, opts: ConstructOptions) -> Built {
    let ctor = Constructor::new(&system, opts).expect("constructor");
    let sol = ctor.construct().expect("construct");
    Built { system, ctor, sol }
}

fn build_fixture(name: &str) -> Built {
    build(fixtures::fixture(name).expect("fixture"), ConstructOptions::default())
}

static RADIAL: Lazy<Built> = Lazy::new(|| build_fixture("radial"));
static SYMMETRIC: Lazy<Built> = Lazy::new(|| build_fixture("symmetric-pair"));
static ASYMMETRIC: Lazy<Built> = Lazy::new(|| build_fixture("asymmetric-pair"));
static CURVED: Lazy<Built> = Lazy::new(|| build_fixture("curved-pair"));

fn all_fixtures() -> [(&'static str, &'static Built); 4] {
    [
        ("radial", &RADIAL),
        ("symmetric-pair", &SYMMETRIC),
        ("asymmetric-pair", &ASYMMETRIC),
        ("curved-pair", &CURVED),
    ]
}

/// The radial slit `[x, 1)` whose complement has mapping radius exactly
/// `log 2`: the closed form `log((1+x)^2 / 4x)` evaluates to `log 2` at
/// `x = 3 - 2*sqrt(2)`.
#[test]
fn closed_form_mapping_radius_of_radial_slit() {
    let x = 3.0 - 2.0 * 2.0_f64.sqrt();
    let slit = vec![c(1.0, 0.0), c(x, 0.0)];
    let mut detail = String::new();
    let mut pass = true;
    for (resolution, tol) in [(2000usize, 1e-3), (8000, 1e-4)] {
        let got = zipper::map_disk_minus_slits(&[slit.clone()], resolution)
            .expect("zipper")
            .lmr_value;
        let err = (got - LN_2).abs();
        pass &= err <= tol;
        detail.push_str(&format!("res {resolution}: |lmr - log 2| = {err:.3e} (tol {tol:.0e}); "));
    }
    report("closed-form lmr", pass, detail.trim_end());
}

/// On the asymmetric pair, the mapping radius is strictly increasing in each
/// prefix fraction (33x33 grid), and difference-quotient ratios stay within
/// (0.75, 1.25) once both gaps are below the certified modulus delta(0.25).
#[test]
fn mapping_radius_grid_monotone_and_difference_quotients_stable() {
    const N: usize = 33;
    let oracle = ASYMMETRIC.ctor.oracle();
    let grid = oracle.grid(N, &[1.0, 1.0]).expect("grid");
    let spacing = 1.0 / (N - 1) as f64;

    let mut min_d1 = f64::INFINITY;
    let mut min_d2 = f64::INFINITY;
    for i in 0..N {
        for j in 0..N {
            if i + 1 < N {
                min_d1 = min_d1.min(grid[i + 1][j] - grid[i][j]);
            }
            if j + 1 < N {
                min_d2 = min_d2.min(grid[i][j + 1] - grid[i][j]);
            }
        }
    }
    let monotone = min_d1 > 0.0 && min_d2 > 0.0;

    let est = continuity_modulus(oracle, 0.25).expect("modulus");
    let gap = (est.delta / spacing).round() as usize;
    let noise = 32.0 * oracle.est_accuracy().max(f64::EPSILON);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    for i1 in 0..N {
        for i2 in i1 + 1..(i1 + gap + 1).min(N) {
            for j1 in 0..N {
                for j2 in j1 + 1..(j1 + gap + 1).min(N) {
                    let num = grid[i2][j1] - grid[i1][j1];
                    let den = grid[i2][j2] - grid[i1][j2];
                    if den <= noise {
                        continue;
                    }
                    worst = worst.max((num / den - 1.0).abs());
                    checked += 1;
                }
            }
        }
    }
    let ratios_ok = checked > 0 && worst < 0.25;
    report(
        "grid monotonicity",
        monotone && ratios_ok,
        &format!(
            "min first differences {min_d1:.3e}/{min_d2:.3e} > 0; \
             {checked} difference-quotient ratios within [{:.4}, {:.4}] for gaps <= delta(0.25) = {:.4}",
            1.0 - worst,
            1.0 + worst,
            est.delta
        ),
    );
}

/// On the diagonally normalized pair of prefix tables, advancing the slits in
/// either order telescopes to the elapsed time: |S1 + S2~ - t| and
/// |S2 + S1~ - t| below 1e-5 at every grid node.
#[test]
fn partition_sums_telescope_to_elapsed_time() {
    let built = &*ASYMMETRIC;
    let oracle = built.ctor.oracle();
    let a = &built.sol.prefix_tables[0];
    let b = &built.sol.prefix_tables[1];
    let grid = &built.sol.grid;

    let mut worst: f64 = 0.0;
    for k in 1..grid.len() {
        let t = grid[k];
        let s = sums(oracle, a, b, t, &grid[..=k]).expect("sums");
        worst = worst.max((s.s1 + s.s2_tilde - t).abs());
        worst = worst.max((s.s2 + s.s1_tilde - t).abs());
    }
    report(
        "telescoping",
        worst <= 1e-5,
        &format!("max |order-sum - t| = {worst:.3e} over {} grid times (tol 1e-5)", grid.len() - 1),
    );
}

/// Mirror-symmetric slits must receive equal coefficients and identical
/// reparametrizations.
#[test]
fn symmetric_pair_splits_coefficients_evenly() {
    let sol = &SYMMETRIC.sol;
    let lam_err = (sol.lambda[0] - 0.5).abs().max((sol.lambda[1] - 0.5).abs());
    let table_gap = sol.u_tables[0].sup_distance(&sol.u_tables[1]);
    report(
        "symmetry",
        lam_err <= 1e-2 && table_gap <= 1e-3,
        &format!(
            "lambda = ({:.6}, {:.6}), |lambda - 1/2| = {lam_err:.3e} (tol 1e-2); \
             sup |u - v| = {table_gap:.3e} (tol 1e-3)",
            sol.lambda[0], sol.lambda[1]
        ),
    );
}

/// The running single-slit gain c_1 along the constructed schedule converges
/// linearly to lambda_1 * t: its worst deviation halves (within 30%) each
/// time the partition mesh halves.
#[test]
fn per_slit_gains_scale_linearly_with_mesh() {
    let built = &*ASYMMETRIC;
    let sol = &built.sol;
    let lam1 = sol.lambda[0];
    let l_total = sol.l_total;

    // Meshes stay off the construction's own dyadic schedule: a mesh equal
    // to the level size reproduces the root-solved gains exactly (error
    // collapses to the solver residual, ~5e-8 measured), and meshes finer
    // than the schedule bottom out on table interpolation. 5·2^k cells keep
    // every halving inside the splitting-error regime.
    let mut errs = Vec::new();
    for n in [5usize, 10, 20, 40] {
        let z: Vec<f64> = (0..=n).map(|i| l_total * i as f64 / n as f64).collect();
        let gains = built.ctor.coefficient_integrals(sol, &z).expect("gains");
        let err = z
            .iter()
            .zip(&gains[0])
            .map(|(&t, &g)| (g - lam1 * t).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.iter().all(|&r| (0.35..=0.65).contains(&r));
    report(
        "linearity",
        pass,
        &format!(
            "max |c_1 - lambda_1 t| = {:?} over meshes 5/10/20/40; halving ratios {:?} all in [0.35, 0.65]",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    );
}

/// The constructed reparametrizations keep the total mapping radius equal to
/// elapsed time on every fixture: max_t |lmr(u(t), v(t)) - t| <= 5e-6.
#[test]
fn all_fixtures_are_diagonally_normalized() {
    let mut detail = String::new();
    let mut pass = true;
    for (name, built) in all_fixtures() {

        let oracle = built.ctor.oracle();
        let mut worst: f64 = 0.0;
        for (k, &t) in built.sol.grid.iter().enumerate() {
            let tuple: Vec<f64> =
                built.sol.prefix_tables.iter().map(|tab| tab.ys()[k]).collect();
            worst = worst.max((oracle.lmr_at(&tuple).expect("lmr") - t).abs());
        }
        pass &= worst <= 5e-6;
        detail.push_str(&format!("{name}: {worst:.3e}; "));
    }
    report(
        "normalization",
        pass,
        &format!("max |lmr(u(t),v(t)) - t| per fixture (tol 5e-6): {}", detail.trim_end()),
    );
}

/// Traces regenerated from the constructed driving data stay within 3x the
/// scheme's discretization scale of the input slits, and the distance does
/// not grow under step halving (strictly decreasing away from the
/// resolution floor; a 0.2% relative + 1e-9 absolute allowance covers the
/// floor) with a net decrease across the step range.
#[test]
fn regenerated_traces_match_inputs_and_tighten_under_refinement() {
    let steps_ladder = [128usize, 256, 512];
    let bounds = RoundtripBounds::default();
    let mut detail = String::new();
    let mut pass = true;
    for (name, built) in all_fixtures() {

        let mut dists = Vec::new();
        for &steps in &steps_ladder {
            let rt = roundtrip_report(&built.system, &built.sol, steps, &bounds)
                .expect("roundtrip");
            pass &= rt.hausdorff_pass && rt.pass;
            dists.push(rt.per_slit_hausdorff.iter().copied().fold(0.0, f64::max));
        }
        let monotone = dists
            .windows(2)
            .all(|w| w[1] <= w[0] * 1.002 + 1e-9);
        let net_decrease = dists[dists.len() - 1] <= dists[0] + 1e-9;
        pass &= monotone && net_decrease;
        detail.push_str(&format!(
            "{name}: {} within bound; ",
            dists.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" -> ")
        ));
    }
    report(
        "roundtrip",
        pass,
        &format!("worst hausdorff at steps 128/256/512, all fixtures: {}", detail.trim_end()),
    );
}

/// The recovered coefficients do not depend on the discretization choices:
/// dyadic vs triadic level sweeps and two different slit extension margins
/// agree within 1e-2 on every fixture.
#[test]
fn coefficients_stable_across_level_families_and_extensions() {
    let mut detail = String::new();
    let mut pass = true;
    for (name, built) in all_fixtures() {

        let base = &built.sol.lambda;

        let triadic_opts = ConstructOptions {
            levels: geometric_levels(3, 1, 4),
            ..ConstructOptions::default()
        };
        let triadic = build(built.system.clone(), triadic_opts).sol.lambda;

        let wider = SlitSystem::new(built.system.slits.clone(), 1.8);
        let widened = build(wider, ConstructOptions::default()).sol.lambda;

        let gap_levels = base
            .iter()
            .zip(&triadic)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let gap_extension = base
            .iter()
            .zip(&widened)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        pass &= gap_levels <= 1e-2 && gap_extension <= 1e-2;
        detail.push_str(&format!(
            "{name}: levels {gap_levels:.2e}, extension {gap_extension:.2e}; "
        ));
    }
    report(
        "uniqueness",
        pass,
        &format!("max |lambda - lambda'| (tol 1e-2): {}", detail.trim_end()),
    );
}

/// The forward solver keeps the origin fixed and accumulates
/// log h'(0) = t along piecewise-constant driving.
#[test]
fn forward_solver_normalization_on_piecewise_constant_driving() {
    // Step functions realized as steep linear ramps of width 1e-9.
    let l_total = 0.25;
    let cases: Vec<(Vec<f64>, Vec<Vec<f64>>)> = vec![
        // One piece per slit (constant driving).
        (vec![0.6, 0.4], vec![vec![0.4, 0.4], vec![-2.2, -2.2]]),
        // Three pieces on slit 1, two on slit 2.
        (
            vec![0.7, 0.3],
            vec![vec![0.3, 0.3, 1.1, 1.1, 0.7, 0.7], vec![-2.0, -2.0, -2.6, -2.6]],
        ),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (case_idx, (lambda, piece_args)) in cases.iter().enumerate() {
        let xi: Vec<XiTable> = piece_args
            .iter()
            .map(|args| {
                let pieces = args.len() / 2;
                let mut ts = Vec::new();
                for p in 0..pieces {
                    let start = l_total * p as f64 / pieces as f64;
                    let end = l_total * (p + 1) as f64 / pieces as f64;
                    ts.push(if p == 0 { start } else { start + 1e-9 });
                    ts.push(end);
                }
                XiTable::from_args(ts, args.clone()).expect("xi")
            })
            .collect();
        let fwd = solve_forward(
            lambda,
            &xi,
            l_total,
            &[c(0.0, 0.0)],
            50,
            &ForwardOptions::default(),
        )
        .expect("forward");
        let deriv_err = fwd
            .times
            .iter()
            .zip(&fwd.log_deriv_at_0)
            .map(|(&t, &d)| (d - t).abs() / t.max(1.0))
            .fold(0.0, f64::max);
        let origin_moved = fwd.points[0].values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        pass &= deriv_err <= 1e-6 && origin_moved <= 1e-12;
        detail.push_str(&format!(
            "case {case_idx}: |log h'(0) - t| <= {deriv_err:.3e}, |h(0)| <= {origin_moved:.3e}; "
        ));
    }
    report(
        "forward law",
        pass,
        &format!("(tol 1e-6 relative, origin 1e-12): {}", detail.trim_end()),
    );
}

/// Fully synthetic inverse problem: traces generated from known coefficients
/// (0.7, 0.3) and smooth driving are fed back through the constructor, which
/// must recover the coefficients within 2e-2.
#[test]
fn known_coefficients_recovered_from_synthetic_traces() {
    let (system, _xi) = fixtures::synthetic_pair(0.7, 0.25, 256).expect("synthetic traces");
    let built = build(system, ConstructOptions::default());
    let err = (built.sol.lambda[0] - 0.7)
        .abs()
        .max((built.sol.lambda[1] - 0.3).abs());
    report(
        "synthetic inverse",
        err <= 2e-2,
        &format!(
            "recovered lambda = ({:.5}, {:.5}) vs (0.7, 0.3), err {err:.3e} (tol 2e-2)",
            built.sol.lambda[0], built.sol.lambda[1]
        ),
    );
}

/// Duality spot-check (cheap): driving data read off the regenerated traces
/// by the mapping oracle reproduces the total mapping radius, closing the
/// zipper <-> ODE loop from the other side.
#[test]
fn regenerated_traces_reproduce_total_mapping_radius() {
    let built = &*SYMMETRIC;
    let sol = &built.sol;
    let xi: Vec<XiTable> = (0..sol.lambda.len())
        .map(|j| XiTable::from_values(&sol.grid, &sol.xi_tables[j]).expect("xi"))
        .collect();
    let traces = regenerate_traces(&sol.lambda, &xi, sol.l_total, 256).expect("traces");
    let got = zipper::map_disk_minus_slits(&traces, 512).expect("zipper").lmr_value;
    let err = (got - sol.l_total).abs();
    report(
        "duality",
        err <= 2e-2,
        &format!("lmr of regenerated hull = {got:.6} vs L = {:.6} (err {err:.3e})", sol.l_total),
    );
}
