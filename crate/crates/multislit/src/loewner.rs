//! Forward evolution: solve the multi-slit ODE for interior points and
//! regenerate slit traces from the driving functions.
//!
//! The flow under constant coefficients λ and driving functions ξ_k on the
//! unit circle is
//!
//! ```text
//! ẏ(t) = y(t) · Σ_k λ_k · (ξ_k(t) + y(t)) / (ξ_k(t) − y(t)),
//! ```
//!
//! an ordinary differential equation whose time-t map sends the complement of
//! the grown slits onto the disk with derivative `e^t` at the origin.
//! Interior points are integrated by an embedded Runge–Kutta pair with
//! adaptive steps; points that approach a driving position are reported as
//! absorbed (swallowed by the growing slit) rather than failing the solve.
//!
//! Going the other way, [`regenerate_traces`] builds the inverse map as a
//! composition of one-step slit insertions: within each time cell, each slit
//! contributes an elementary map that grows a radial slit of mapping-radius
//! increment `λ_k · Δt` at its driving position. Pushing the driving values
//! through the accumulated composition recovers the slit traces, which
//! [`roundtrip_report`] compares against the original input.

use num_complex::Complex64;

use crate::bangbang::ConstantCoeffSolution;
use crate::error::SolveError;
use crate::geometry::{point_segment_dist, SlitSystem};

/// Piecewise-linear driving function on the unit circle, stored as an
/// unwrapped continuous argument so interpolation never crosses a branch cut.
#[derive(Debug, Clone)]
pub struct XiTable {
    ts: Vec<f64>,
    args: Vec<f64>,
}

impl XiTable {
    /// Build from unit-modulus samples, unwrapping arguments so consecutive
    /// nodes differ by less than π.
    pub fn from_values(ts: &[f64], values: &[Complex64]) -> Result<Self, SolveError> {
        if ts.len() != values.len() || ts.len() < 2 {
            return Err(SolveError::BadInput(
                "driving table needs matched times and values (at least two)".into(),
            ));
        }
        if ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(SolveError::BadInput(
                "driving table times must be non-decreasing".into(),
            ));
        }
        let mut args: Vec<f64> = Vec::with_capacity(values.len());
        for (i, v) in values.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-6 {
                return Err(SolveError::BadInput(format!(
                    "driving value {v} at node {i} is not on the unit circle"
                )));
            }
            let raw = v.arg();
            let arg = match args.last() {
                None => raw,
                Some(&prev) => {
                    let turns = ((prev - raw) / std::f64::consts::TAU).round();
                    raw + std::f64::consts::TAU * turns
                }
            };
            args.push(arg);
        }
        Ok(XiTable {
            ts: ts.to_vec(),
            args,
        })
    }

    /// Build from an already-unwrapped argument table.
    pub fn from_args(ts: Vec<f64>, args: Vec<f64>) -> Result<Self, SolveError> {
        if ts.len() != args.len() || ts.len() < 2 || ts.windows(2).any(|w| w[1] < w[0]) {
            return Err(SolveError::BadInput(
                "driving table needs matched, non-decreasing times".into(),
            ));
        }
        Ok(XiTable { ts, args })
    }

    /// Constant driving at a fixed unit-circle position.
    pub fn constant(value: Complex64, span: f64) -> Self {
        let arg = value.arg();
        XiTable {
            ts: vec![0.0, span],
            args: vec![arg, arg],
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.ts
    }

    /// Unwrapped argument at `t` (clamped linear interpolation; zero-width
    /// cells take the right-hand value).
    pub fn arg_at(&self, t: f64) -> f64 {
        if t <= self.ts[0] {
            return self.args[0];
        }
        if t >= *self.ts.last().unwrap() {
            return *self.args.last().unwrap();
        }
        let pos = self.ts.partition_point(|&s| s <= t);
        let (t0, t1) = (self.ts[pos - 1], self.ts[pos]);
        if t1 == t0 {
            return self.args[pos];
        }
        let w = (t - t0) / (t1 - t0);
        self.args[pos - 1] * (1.0 - w) + self.args[pos] * w
    }

    /// Driving value `ξ(t)` on the unit circle.
    pub fn eval(&self, t: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.arg_at(t))
    }
}

/// Tuning for the forward solve.
#[derive(Debug, Clone)]
pub struct ForwardOptions {
    /// Relative step-error tolerance.
    pub rtol: f64,
    /// Absolute step-error tolerance.
    pub atol: f64,
    /// A trajectory within this distance of a driving position is reported
    /// absorbed and frozen.
    pub absorption: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            rtol: 1e-9,
            atol: 1e-12,
            absorption: 1e-7,
        }
    }
}

/// A trajectory that reached a driving position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorption {
    pub time: f64,
    pub slit: usize,
}

/// One tracked interior point.
#[derive(Debug, Clone)]
pub struct PointPath {
    pub initial: Complex64,
    /// Value at each output node; frozen at the absorption value afterwards.
    pub values: Vec<Complex64>,
    pub absorbed: Option<Absorption>,
}

/// Output of [`solve_forward`].
#[derive(Debug, Clone)]
pub struct ForwardSolveResult {
    /// Output time grid `0 = t_0 < … < t_steps = L`.
    pub times: Vec<f64>,
    /// Integrated `log h'(0)` at each node (the equation makes this `t`; the
    /// integrator does not know that and accumulates it honestly).
    pub log_deriv_at_0: Vec<f64>,
    /// Tracked trajectories, one per initial point.
    pub points: Vec<PointPath>,
}

/// Adaptive integration stalled: steps shrank below the floor at `t` with
/// state `y`.
struct Underflow {
    t: f64,
    y: Complex64,
}

/// Dormand–Prince 5(4) embedded step: returns the fifth-order update and an
/// error estimate.
fn dp45_step<F: FnMut(f64, Complex64) -> Complex64>(
    f: &mut F,
    t: f64,
    y: Complex64,
    h: f64,
) -> (Complex64, f64) {
    let k1 = f(t, y);
    let k2 = f(t + h / 5.0, y + k1 * (h / 5.0));
    let k3 = f(t + 3.0 * h / 10.0, y + k1 * (3.0 * h / 40.0) + k2 * (9.0 * h / 40.0));
    let k4 = f(
        t + 4.0 * h / 5.0,
        y + k1 * (44.0 * h / 45.0) - k2 * (56.0 * h / 15.0) + k3 * (32.0 * h / 9.0),
    );
    let k5 = f(
        t + 8.0 * h / 9.0,
        y + k1 * (19372.0 * h / 6561.0) - k2 * (25360.0 * h / 2187.0)
            + k3 * (64448.0 * h / 6561.0)
            - k4 * (212.0 * h / 729.0),
    );
    let k6 = f(
        t + h,
        y + k1 * (9017.0 * h / 3168.0) - k2 * (355.0 * h / 33.0) + k3 * (46732.0 * h / 5247.0)
            + k4 * (49.0 * h / 176.0)
            - k5 * (5103.0 * h / 18656.0),
    );
    let y5 = y
        + k1 * (35.0 * h / 384.0)
        + k3 * (500.0 * h / 1113.0)
        + k4 * (125.0 * h / 192.0)
        - k5 * (2187.0 * h / 6784.0)
        + k6 * (11.0 * h / 84.0);
    let k7 = f(t + h, y5);
    let err = k1 * (71.0 / 57_600.0) - k3 * (71.0 / 16_695.0) + k4 * (71.0 / 1_920.0)
        - k5 * (17_253.0 / 339_200.0)
        + k6 * (22.0 / 525.0)
        - k7 * (1.0 / 40.0);
    (y5, (err * h).norm())
}

/// Integrate `ẏ = f(t, y)` from `t0` to `t1` adaptively; calls `watch` after
/// every accepted step and stops early if it returns `false`.
fn integrate<F, W>(
    f: &mut F,
    t0: f64,
    t1: f64,
    y0: Complex64,
    opts: &ForwardOptions,
    watch: &mut W,
) -> Result<Complex64, Underflow>
where
    F: FnMut(f64, Complex64) -> Complex64,
    W: FnMut(f64, Complex64) -> bool,
{
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(y0);
    }
    let h_floor = 1e-14 * span.max(1.0);
    let mut t = t0;
    let mut y = y0;
    let mut h = span / 8.0;
    while t < t1 {
        h = h.min(t1 - t);
        let (y_new, err) = dp45_step(f, t, y, h);
        let tol = opts.atol + opts.rtol * y.norm().max(y_new.norm());
        let ratio = err / tol;
        if ratio <= 1.0 {
            t += h;
            y = y_new;
            if !watch(t, y) {
                return Ok(y);
            }
            let grow = if ratio > 0.0 {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            h *= grow;
        } else {
            h *= (0.9 * ratio.powf(-0.2)).clamp(0.2, 0.9);
            if h < h_floor {
                return Err(Underflow { t, y });
            }
        }
    }
    Ok(y)
}

/// A trajectory whose steps underflow this close to a driving position is
/// captured: its approach has square-root speed, so the integrator stalls at
/// distance ~√(step floor) ≈ 1e−7 no matter how small the reporting radius.
const CAPTURE_RADIUS: f64 = 1e-5;

fn validate_inputs(
    lambda: &[f64],
    xi: &[XiTable],
    l_total: f64,
    steps: usize,
) -> Result<(), SolveError> {
    if lambda.is_empty() || lambda.len() != xi.len() {
        return Err(SolveError::BadInput(format!(
            "need one driving table per coefficient, got {} and {}",
            lambda.len(),
            xi.len()
        )));
    }
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(SolveError::BadInput(format!(
            "coefficients must be positive, got {lambda:?}"
        )));
    }
    let sum: f64 = lambda.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(SolveError::BadInput(format!(
            "coefficients must sum to 1, got {sum}"
        )));
    }
    if !(l_total > 0.0) || !l_total.is_finite() {
        return Err(SolveError::BadInput(format!(
            "time horizon must be positive, got {l_total}"
        )));
    }
    if steps == 0 {
        return Err(SolveError::BadInput("need at least one time step".into()));
    }
    Ok(())
}

/// Integrate the flow for each initial interior point over `[0, l_total]`,
/// reporting values on a uniform grid of `steps` cells. Points reaching a
/// driving position are frozen and flagged absorbed, not treated as errors.
pub fn solve_forward(
    lambda: &[f64],
    xi: &[XiTable],
    l_total: f64,
    initial: &[Complex64],
    steps: usize,
    opts: &ForwardOptions,
) -> Result<ForwardSolveResult, SolveError> {
    validate_inputs(lambda, xi, l_total, steps)?;
    for z in initial {
        if z.norm() >= 1.0 {
            return Err(SolveError::BadInput(format!(
                "initial point {z} is not in the open unit disk"
            )));
        }
    }
    let times: Vec<f64> = (0..=steps)
        .map(|k| l_total * k as f64 / steps as f64)
        .collect();

    let m = lambda.len();
    let mut rhs = |t: f64, y: Complex64| -> Complex64 {
        let mut v = Complex64::new(0.0, 0.0);
        for k in 0..m {
            let u = xi[k].eval(t);
            v += (u + y) / (u - y) * lambda[k];
        }
        y * v
    };

    // log h'(0): along the origin trajectory the per-slit kernel is 1, but
    // the channel is integrated, not assumed.
    let mut log_deriv_at_0 = Vec::with_capacity(times.len());
    log_deriv_at_0.push(0.0);
    {
        let mut quad = |t: f64, _d: Complex64| -> Complex64 {
            let y = Complex64::new(0.0, 0.0);
            let mut v = Complex64::new(0.0, 0.0);
            for k in 0..m {
                let u = xi[k].eval(t);
                v += (u + y) / (u - y) * lambda[k];
            }
            v
        };
        let mut d = Complex64::new(0.0, 0.0);
        for w in times.windows(2) {
            d = integrate(&mut quad, w[0], w[1], d, opts, &mut |_, _| true)
                .map_err(|u| SolveError::StepUnderflow { t: u.t })?;
            log_deriv_at_0.push(d.re);
        }
    }

    let nearest_driver = |t: f64, y: Complex64| -> (usize, f64) {
        (0..m)
            .map(|k| (k, (y - xi[k].eval(t)).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    };

    let mut points = Vec::with_capacity(initial.len());
    for &z0 in initial {
        let mut values = Vec::with_capacity(times.len());
        values.push(z0);
        let mut y = z0;
        let mut absorbed: Option<Absorption> = None;
        for w in times.windows(2) {
            if absorbed.is_some() {
                values.push(y);
                continue;
            }
            let mut hit: Option<Absorption> = None;
            match integrate(&mut rhs, w[0], w[1], y, opts, &mut |t, yt| {
                let (k, d) = nearest_driver(t, yt);
                if d <= opts.absorption {
                    hit = Some(Absorption { time: t, slit: k });
                    return false;
                }
                true
            }) {
                Ok(end) => y = end,
                Err(u) => {
                    let (k, d) = nearest_driver(u.t, u.y);
                    if d <= CAPTURE_RADIUS.max(opts.absorption) {
                        y = u.y;
                        hit = Some(Absorption { time: u.t, slit: k });
                    } else {
                        return Err(SolveError::StepUnderflow { t: u.t });
                    }
                }
            }
            absorbed = hit;
            values.push(y);
        }
        points.push(PointPath {
            initial: z0,
            values,
            absorbed,
        });
    }

    Ok(ForwardSolveResult {
        times,
        log_deriv_at_0,
        points,
    })
}

/// Insert a radial slit of mapping-radius increment `c` at driving position
/// `u`: the inner endpoint `x` of the slit `[x, 1]` with `lmr = c`.
fn slit_inner_radius(c: f64) -> f64 {
    let q = 2.0 * c.exp() - 1.0;
    1.0 / (q + (q * q - 1.0).max(0.0).sqrt())
}

fn koebe(z: Complex64) -> Complex64 {
    let d = 1.0 + z;
    z / (d * d)
}

/// Stable inverse of `z ↦ z/(1+z)²` on the disk: `2v / (1−2v + √(1−4v))`.
/// `sqrt_branch` supplies the square root of `1 − 4v`.
fn koebe_inv(v: Complex64, sqrt_branch: Complex64) -> Complex64 {
    v * 2.0 / (Complex64::new(1.0, 0.0) - v * 2.0 + sqrt_branch)
}

/// One-step slit insertion ψ_{u,c}: maps the disk onto the disk minus a
/// radial slit of mapping-radius increment `c` attached at `u`. Boundary
/// points inside the swallowed arc land on the slit; the rest of the circle
/// maps to the circle.
fn insert_slit(u: Complex64, x: f64, w: Complex64) -> Complex64 {
    let omega = w / u;
    let one_plus = omega + 1.0;
    if one_plus.norm_sqr() < 1e-28 {
        // Antipode of the driving position: fixed point of the insertion.
        return u * -1.0;
    }
    let v = koebe(Complex64::new(x, 0.0)) * koebe(omega) * 4.0;
    let disc = Complex64::new(1.0, 0.0) - v * 4.0;
    let on_circle = (w.norm() - 1.0).abs() < 1e-9;
    let root = if on_circle && v.re > 0.25 {
        // Swallowed-side branch: √(1−4v) = −i·sign(Im ω)·√(4v−1), keeping
        // upper-arc points on the upper side of the inserted slit.
        let s = (4.0 * v.re - 1.0).max(0.0).sqrt();
        Complex64::new(0.0, if omega.im >= 0.0 { -s } else { s })
    } else {
        disc.sqrt()
    };
    u * koebe_inv(v, root)
}

/// Angular half-width of the boundary arc swallowed by a slit of
/// mapping-radius increment `c` (small-c asymptotics: `2√c`).
fn swallow_half_width(c: f64, x: f64) -> f64 {
    // cos²(θ_c/2) = 4·k(x) at the arc edge.
    let k = x / ((1.0 + x) * (1.0 + x));
    2.0 * (2.0 * k.sqrt()).min(1.0).acos().max(c.sqrt())
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    if a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Regenerate the slit traces generated by coefficients `lambda` and driving
/// functions `xi` over `[0, l_total]`, using `steps` splitting cells. Returns
/// one polyline per slit with `steps + 1` points, from base to tip.
///
/// Within each cell every slit contributes one insertion at its mid-cell
/// driving value; the per-cell slit order alternates so that first-order
/// ordering bias cancels. Driving positions whose swallowed arcs approach
/// each other are rejected as collisions.
pub fn regenerate_traces(
    lambda: &[f64],
    xi: &[XiTable],
    l_total: f64,
    steps: usize,
    ) -> Result<Vec<Vec<Complex64>>, SolveError> {
    validate_inputs(lambda, xi, l_total, steps)?;
    let m = lambda.len();
    let dt = l_total / steps as f64;

    // Per-cell factors in forward (growth) order.
    struct Factor {
        u: Complex64,
        x: f64,
    }
    let mut cells: Vec<Vec<Factor>> = Vec::with_capacity(steps);
    for i in 0..steps {
        let t_mid = (i as f64 + 0.5) * dt;
        let order: Vec<usize> = if i % 2 == 0 {
            (0..m).collect()
        } else {
            (0..m).rev().collect()
        };
        let mut factors = Vec::with_capacity(m);
        for &j in &order {
            let c = lambda[j] * dt;
            factors.push((j, Factor {
                u: xi[j].eval(t_mid),
                x: slit_inner_radius(c),
            }));
        }
        for a in 0..m {
            for b in a + 1..m {
                let (ja, fa) = &factors[a];
                let (jb, fb) = &factors[b];
                let sep = wrap_angle(fa.u.arg() - fb.u.arg()).abs();
                let need = 1.5
                    * (swallow_half_width(lambda[*ja] * dt, fa.x)
                        + swallow_half_width(lambda[*jb] * dt, fb.x));
                if sep < need {
                    return Err(SolveError::DrivingCollision {
                        a: *ja,
                        b: *jb,
                        t: t_mid,
                    });
                }
            }
        }
        cells.push(factors.into_iter().map(|(_, f)| f).collect());
    }

    // Trace node k of slit j: push ξ_j(t_k) through the inverses of cells
    // k−1…0; within a cell the factors apply in reverse of growth order.
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let mut traces: Vec<Vec<Complex64>> = vec![Vec::with_capacity(steps + 1); m];
    for j in 0..m {
        for (k, &t) in times.iter().enumerate() {
            let mut w = xi[j].eval(t);
            for cell in cells[..k].iter().rev() {
                for f in cell.iter().rev() {
                    w = insert_slit(f.u, f.x, w);
                }
            }
            traces[j].push(w);
        }
    }
    Ok(traces)
}

/// Symmetric Hausdorff distance between two polylines, treating both as
/// unions of segments (vertices of one against segments of the other).
pub fn polyline_hausdorff(a: &[Complex64], b: &[Complex64]) -> f64 {
    fn directed(from: &[Complex64], to: &[Complex64]) -> f64 {
        from.iter()
            .map(|&p| {
                if to.len() == 1 {
                    (p - to[0]).norm()
                } else {
                    to.windows(2)
                        .map(|s| point_segment_dist(p, s[0], s[1]))
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .fold(0.0, f64::max)
    }
    directed(a, b).max(directed(b, a))
}

/// Acceptance bounds for a roundtrip check.
#[derive(Debug, Clone)]
pub struct RoundtripBounds {
    /// Hausdorff distance must stay below this multiple of the regenerated
    /// trace's own discretization scale.
    pub hausdorff_factor: f64,
    /// Bound on `max_k |lmr(schedule(t_k)) − t_k|`.
    pub diag_tol: f64,
    /// Bound on `max_k |log h'(0)(t_k) − t_k|` from the forward solve.
    pub deriv_tol: f64,
    /// Bound on the largest chordal jump between consecutive driving values.
    pub xi_jump_tol: f64,
}

impl Default for RoundtripBounds {
    fn default() -> Self {
        RoundtripBounds {
            hausdorff_factor: 3.0,
            diag_tol: 5e-6,
            deriv_tol: 1e-6,
            xi_jump_tol: 0.1,
        }
    }
}

/// Roundtrip verification summary.
#[derive(Debug, Clone)]
pub struct RoundtripReport {
    pub steps: usize,
    /// Hausdorff distance between each input slit and its regenerated trace.
    pub per_slit_hausdorff: Vec<f64>,
    /// Largest spacing between consecutive regenerated trace points.
    pub discretization_scale: f64,
    /// `hausdorff_factor × discretization_scale`.
    pub hausdorff_bound: f64,
    pub hausdorff_pass: bool,
    pub max_diag_error: f64,
    pub diag_pass: bool,
    pub max_deriv_error: f64,
    pub deriv_pass: bool,
    pub xi_max_jump: f64,
    pub xi_continuity_pass: bool,
    pub pass: bool,
}

/// Regenerate traces from a constructed solution and compare them with the
/// input slits; also re-run the forward derivative channel at the same
/// resolution.
pub fn roundtrip_report(
    system: &SlitSystem,
    solution: &ConstantCoeffSolution,
    steps: usize,
    bounds: &RoundtripBounds,
) -> Result<RoundtripReport, SolveError> {
    let m = solution.lambda.len();
    if system.slits.len() != m {
        return Err(SolveError::BadInput(format!(
            "solution has {m} slits, system has {}",
            system.slits.len()
        )));
    }
    let xi: Vec<XiTable> = (0..m)
        .map(|j| XiTable::from_values(&solution.grid, &solution.xi_tables[j]))
        .collect::<Result<_, _>>()?;
    let traces = regenerate_traces(&solution.lambda, &xi, solution.l_total, steps)?;

    let per_slit_hausdorff: Vec<f64> = (0..m)
        .map(|j| polyline_hausdorff(&system.slits[j].points, &traces[j]))
        .collect();
    let discretization_scale = traces
        .iter()
        .flat_map(|t| t.windows(2).map(|w| (w[1] - w[0]).norm()))
        .fold(0.0, f64::max);
    let hausdorff_bound = bounds.hausdorff_factor * discretization_scale;
    let hausdorff_pass = per_slit_hausdorff.iter().all(|&d| d <= hausdorff_bound);

    let forward = solve_forward(
        &solution.lambda,
        &xi,
        solution.l_total,
        &[Complex64::new(0.0, 0.0)],
        steps,
        &ForwardOptions::default(),
    )?;
    let max_deriv_error = forward
        .times
        .iter()
        .zip(&forward.log_deriv_at_0)
        .map(|(&t, &d)| (d - t).abs())
        .fold(0.0, f64::max);
    let origin_moved = forward.points[0]
        .values
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let deriv_pass = max_deriv_error <= bounds.deriv_tol && origin_moved <= 1e-12;

    let diag_pass = solution.diag_residual <= bounds.diag_tol;
    // Recomputed from the tables (not the stored summary) so that corrupted
    // driving data is caught.
    let xi_max_jump = solution
        .xi_tables
        .iter()
        .flat_map(|row| row.windows(2).map(|w| (w[1] - w[0]).norm()))
        .fold(0.0, f64::max);
    let xi_continuity_pass = xi_max_jump <= bounds.xi_jump_tol;

    Ok(RoundtripReport {
        steps,
        per_slit_hausdorff,
        discretization_scale,
        hausdorff_bound,
        hausdorff_pass,
        max_diag_error: solution.diag_residual,
        diag_pass,
        max_deriv_error,
        deriv_pass,
        xi_max_jump,
        xi_continuity_pass,
        pass: hausdorff_pass && diag_pass && deriv_pass && xi_continuity_pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    const LOG2: f64 = std::f64::consts::LN_2;
    /// Inner endpoint of the radial slit with lmr = log 2.
    const X_LOG2: f64 = 0.17157287525380993; // 3 − 2√2

    #[test]
    fn xi_table_unwraps_through_the_cut() {
        // Walk across arg = π: naive args flip sign, unwrapped ones don't.
        let ts = vec![0.0, 1.0, 2.0, 3.0];
        let vals: Vec<Complex64> = [3.0, 3.1, 3.2, 3.3]
            .iter()
            .map(|&a| Complex64::from_polar(1.0, a))
            .collect();
        let xi = XiTable::from_values(&ts, &vals).unwrap();
        for (i, &t) in ts.iter().enumerate() {
            assert!((xi.arg_at(t) - (3.0 + 0.1 * i as f64)).abs() < 1e-12);
        }
        assert!((xi.eval(1.5) - Complex64::from_polar(1.0, 3.15)).norm() < 1e-12);
    }

    #[test]
    fn xi_table_rejects_bad_input() {
        assert!(XiTable::from_values(&[0.0], &[c(1.0, 0.0)]).is_err());
        assert!(XiTable::from_values(&[0.0, 1.0], &[c(1.0, 0.0), c(0.5, 0.0)]).is_err());
        assert!(XiTable::from_args(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn slit_inner_radius_matches_closed_form() {
        assert!((slit_inner_radius(LOG2) - X_LOG2).abs() < 1e-15);
        // lmr(slit [x,1]) = log((1+x)²/4x) inverts the radius map.
        for c in [0.01, 0.1, 0.5, 1.0] {
            let x = slit_inner_radius(c);
            let back = ((1.0 + x) * (1.0 + x) / (4.0 * x)).ln();
            assert!((back - c).abs() < 1e-12, "c={c}: back={back}");
        }
    }

    #[test]
    fn single_constant_slit_regenerates_exactly() {
        // Radial insertions at a fixed driving point compose exactly, so the
        // regenerated trace must land on the closed-form slit at any step
        // count.
        let xi = vec![XiTable::constant(c(1.0, 0.0), LOG2)];
        for steps in [4usize, 37, 128] {
            let traces = regenerate_traces(&[1.0], &xi, LOG2, steps).unwrap();
            let trace = &traces[0];
            assert_eq!(trace.len(), steps + 1);
            assert!((trace[0] - c(1.0, 0.0)).norm() < 1e-12, "base moved");
            let tip = trace[steps];
            assert!(
                (tip - c(X_LOG2, 0.0)).norm() < 1e-12,
                "steps={steps}: tip={tip}"
            );
            for w in trace {
                assert!(w.im.abs() < 1e-12, "trace left the real axis: {w}");
                assert!(w.re <= 1.0 + 1e-12 && w.re >= X_LOG2 - 1e-12);
            }
            // Monotone from base to tip along the slit.
            for pair in trace.windows(2) {
                assert!(pair[1].re <= pair[0].re + 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_pair_regenerates_mirror_traces() {
        let xi = vec![
            XiTable::constant(c(1.0, 0.0), 0.4),
            XiTable::constant(c(-1.0, 0.0), 0.4),
        ];
        // The per-cell ordering displaces the two slits against each other
        // by O(λ·Δt), so mirror symmetry holds to the splitting bias and
        // tightens as the cells shrink.
        let mirror_dev = |steps: usize| -> f64 {
            let traces = regenerate_traces(&[0.5, 0.5], &xi, 0.4, steps).unwrap();
            traces[0]
                .iter()
                .zip(&traces[1])
                .map(|(p, q)| (*p + *q).norm().max(p.im.abs()))
                .fold(0.0, f64::max)
        };
        let coarse = mirror_dev(64);
        let fine = mirror_dev(256);
        assert!(coarse < 1e-3, "mirror deviation {coarse}");
        assert!(fine < coarse / 2.0, "no improvement: {coarse} -> {fine}");
    }

    #[test]
    fn colliding_drivers_are_rejected() {
        let xi = vec![
            XiTable::constant(c(1.0, 0.0), 0.4),
            XiTable::constant(Complex64::from_polar(1.0, 0.01), 0.4),
        ];
        match regenerate_traces(&[0.5, 0.5], &xi, 0.4, 8) {
            Err(SolveError::DrivingCollision { .. }) => {}
            other => panic!("expected collision, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_coefficients() {
        let xi = vec![XiTable::constant(c(1.0, 0.0), 1.0)];
        assert!(matches!(
            regenerate_traces(&[0.7], &xi, 1.0, 4),
            Err(SolveError::BadInput(_))
        ));
        assert!(matches!(
            solve_forward(&[1.0], &xi, 0.0, &[], 4, &ForwardOptions::default()),
            Err(SolveError::BadInput(_))
        ));
        assert!(matches!(
            solve_forward(
                &[1.0],
                &xi,
                1.0,
                &[c(1.5, 0.0)],
                4,
                &ForwardOptions::default()
            ),
            Err(SolveError::BadInput(_))
        ));
    }

    /// Closed-form flow for a single slit with constant driving at 1:
    /// h_t = F⁻¹ with F the slit insertion of increment t.
    fn radial_flow(t: f64, z: Complex64) -> Complex64 {
        let x = slit_inner_radius(t);
        let kx = koebe(Complex64::new(x, 0.0));
        let v = koebe(z) / (kx * 4.0);
        koebe_inv(v, (Complex64::new(1.0, 0.0) - v * 4.0).sqrt())
    }

    #[test]
    fn forward_solve_matches_closed_form_flow() {
        let xi = vec![XiTable::constant(c(1.0, 0.0), LOG2)];
        let initial = [c(-0.5, 0.0), c(0.0, 0.3), c(0.2, 0.4), c(-0.3, -0.6)];
        let result = solve_forward(
            &[1.0],
            &xi,
            LOG2,
            &initial,
            8,
            &ForwardOptions::default(),
        )
        .unwrap();
        for path in &result.points {
            assert!(path.absorbed.is_none());
            for (k, &t) in result.times.iter().enumerate() {
                let want = radial_flow(t, path.initial);
                let got = path.values[k];
                assert!(
                    (got - want).norm() < 1e-8,
                    "z0={}, t={t}: got {got}, want {want}",
                    path.initial
                );
            }
        }
    }

    #[test]
    fn origin_is_fixed_and_log_deriv_is_t() {
        let xi = vec![
            XiTable::constant(c(1.0, 0.0), 0.6),
            XiTable::constant(c(0.0, 1.0), 0.6),
        ];
        let result = solve_forward(
            &[0.3, 0.7],
            &xi,
            0.6,
            &[c(0.0, 0.0)],
            12,
            &ForwardOptions::default(),
        )
        .unwrap();
        for v in &result.points[0].values {
            assert_eq!(*v, c(0.0, 0.0));
        }
        for (&t, &d) in result.times.iter().zip(&result.log_deriv_at_0) {
            assert!((d - t).abs() < 1e-12, "t={t}: d={d}");
        }
    }

    #[test]
    fn point_near_driver_gets_absorbed_and_frozen() {
        let xi = vec![XiTable::constant(c(1.0, 0.0), LOG2)];
        let result = solve_forward(
            &[1.0],
            &xi,
            LOG2,
            &[c(0.9, 0.0)],
            16,
            &ForwardOptions::default(),
        )
        .unwrap();
        let path = &result.points[0];
        let abs = path.absorbed.expect("point on the slit axis is swallowed");
        assert_eq!(abs.slit, 0);
        assert!(abs.time > 0.0 && abs.time < LOG2);
        let frozen_from = result
            .times
            .iter()
            .position(|&t| t >= abs.time)
            .unwrap();
        for k in frozen_from + 1..path.values.len() {
            assert_eq!(path.values[k], path.values[frozen_from]);
        }
    }

    #[test]
    fn hausdorff_handles_segments_and_points() {
        let a = [c(0.0, 0.0), c(1.0, 0.0)];
        let b = [c(0.0, 0.1), c(1.0, 0.1)];
        assert!((polyline_hausdorff(&a, &b) - 0.1).abs() < 1e-15);
        // A dense polyline against a coarse one covering the same segment.
        let dense: Vec<Complex64> = (0..=100).map(|i| c(i as f64 / 100.0, 0.0)).collect();
        assert!(polyline_hausdorff(&a, &dense) < 1e-15);
        // Point against a segment: the far endpoint dominates the reverse
        // direction, so the symmetric distance is √(0.5² + 0.2²).
        let point = [c(0.5, 0.2)];
        let want = (0.29f64).sqrt();
        assert!((polyline_hausdorff(&point, &a) - want).abs() < 1e-15);
    }

    #[test]
    #[ignore = "measurement harness, not a correctness assertion"]
    fn measure_roundtrip_and_recovery() {
        use crate::bangbang::{ConstructOptions, Constructor};
        use crate::fixtures;

        for name in ["radial", "symmetric-pair", "asymmetric-pair", "curved-pair"] {
            let system = fixtures::fixture(name).unwrap();
            let t0 = std::time::Instant::now();
            let ctor = Constructor::new(
                &system,
                ConstructOptions {
                    lambda_tol: 0.0,
                    ..ConstructOptions::default()
                },
            )
            .unwrap();
            let sol = ctor.construct().unwrap();
            let built = t0.elapsed();
            println!(
                "{name}: construct {built:?}, lambda={:?}, L={:.4}, oracle res={}",
                sol.lambda,
                sol.l_total,
                ctor.oracle().resolution()
            );
            for steps in [64usize, 128, 256, 512] {
                let t1 = std::time::Instant::now();
                let rep =
                    roundtrip_report(&system, &sol, steps, &RoundtripBounds::default()).unwrap();
                println!(
                    "  steps={steps:4}: hausdorff={:?} scale={:.4e} bound={:.4e} pass={} ({:?})",
                    rep.per_slit_hausdorff
                        .iter()
                        .map(|d| format!("{d:.3e}"))
                        .collect::<Vec<_>>(),
                    rep.discretization_scale,
                    rep.hausdorff_bound,
                    rep.pass,
                    t1.elapsed()
                );
            }
        }

        let t0 = std::time::Instant::now();
        let (system, _) = fixtures::synthetic_pair(0.7, 0.25, 256).unwrap();
        println!("synthetic built in {:?}", t0.elapsed());
        let t0 = std::time::Instant::now();
        let ctor = Constructor::new(
            &system,
            ConstructOptions {
                lambda_tol: 0.0,
                ..ConstructOptions::default()
            },
        )
        .unwrap();
        let sol = ctor.construct().unwrap();
        println!(
            "synthetic inverse: construct {:?}, lambda={:?} (want ~0.7), oracle res={}",
            t0.elapsed(),
            sol.lambda,
            ctor.oracle().resolution()
        );
    }

    #[test]
    fn stalled_approach_is_captured_as_absorption() {
        // Even with the reporting radius effectively disabled, a trajectory
        // heading into a driving position stalls the integrator and must be
        // reported captured rather than erroring out.
        let xi = vec![XiTable::constant(c(1.0, 0.0), LOG2)];
        let opts = ForwardOptions {
            absorption: 1e-300,
            ..ForwardOptions::default()
        };
        let r = solve_forward(&[1.0], &xi, LOG2, &[c(0.9, 0.0)], 4, &opts).unwrap();
        let path = &r.points[0];
        let abs = path.absorbed.expect("stalled trajectory is captured");
        assert_eq!(abs.slit, 0);
        let last = path.values.last().unwrap();
        assert!((last - c(1.0, 0.0)).norm() < 1e-4, "stopped at {last}");
    }
}
