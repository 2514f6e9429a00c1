//! Command-line pipeline for the constant-coefficient multi-slit Loewner
//! construction: `validate → construct → forward → roundtrip → report`,
//! plus the mapping-radius diagnostics `lmr-grid` and `lemma-check`.
//!
//! Every artifact carries a provenance header (tool version + a hash of the
//! effective configuration) and is byte-identical across runs with the same
//! configuration on the same build.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};

use multislit::bangbang::{
    geometric_levels, ConstantCoeffSolution, ConstructOptions, Constructor, LevelDiag,
};
use multislit::fixtures;
use multislit::geometry::SlitSystem;
use multislit::lmr::{continuity_modulus, LmrOracle, MonotoneTable};
use multislit::loewner::{
    regenerate_traces, roundtrip_report, solve_forward, ForwardOptions, RoundtripBounds, XiTable,
};

const TOOL: &str = "multislit";
const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Compute driving data for disjoint slits in the unit disk and verify it by
/// regenerating the slits from the flow.
#[derive(Parser)]
#[command(name = TOOL, version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    config: RunConfig,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check a slit system for well-formedness; write validate.json.
    Validate,
    /// Tabulate the mapping radius over prefix fractions; write lmr_grid.csv.
    LmrGrid,
    /// Monotonicity and difference-quotient checks; write lemma_check.json.
    LemmaCheck,
    /// Solve for the constant coefficients and driving functions; write
    /// construct.csv + construct.json.
    Construct,
    /// Regenerate traces from construct artifacts; write traces.csv +
    /// forward.json.
    Forward,
    /// Compare regenerated traces against the input slits; write
    /// roundtrip_traces.csv + roundtrip.json.
    Roundtrip,
    /// Run the whole pipeline and write report.json alongside all artifacts.
    Report,
}

#[derive(Args, Clone)]
struct RunConfig {
    /// Slit-system JSON file: {"slits":[[[re,im],...],...],"extension_headroom":1.5}
    #[arg(long, global = true, env = "MULTISLIT_INPUT", value_name = "PATH")]
    input: Option<PathBuf>,

    /// Built-in fixture name (used when --input is absent)
    #[arg(long, global = true, env = "MULTISLIT_FIXTURE", value_name = "NAME")]
    fixture: Option<String>,

    /// Output directory for artifacts
    #[arg(long, global = true, env = "MULTISLIT_OUT", value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Mapping-radius oracle accuracy target
    #[arg(long, global = true, env = "MULTISLIT_ACCURACY", default_value_t = 1e-6)]
    accuracy: f64,

    /// Largest partition-level exponent J; levels sweep 4, 8, …, 2^J
    #[arg(long, global = true, env = "MULTISLIT_MAX_LEVEL", default_value_t = 6)]
    max_level: u32,

    /// Early-stop tolerance on coefficient changes between levels
    #[arg(long, global = true, env = "MULTISLIT_LAMBDA_TOL", default_value_t = 1e-3)]
    lambda_tol: f64,

    /// Step count for trace regeneration and the forward ODE solve
    #[arg(long, global = true, env = "MULTISLIT_STEPS", default_value_t = 256)]
    steps: usize,
}

/// A failed run: `kind` is machine-stable, `message` is for humans.
struct Failure {
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Failure { kind, message: message.into() }
    }
}

fn fail<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> Failure {
    move |e| Failure::new(kind, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = json!({"error": {"kind": f.kind, "message": f.message}});
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, config: &RunConfig) -> Result<(), Failure> {
    check_config(config)?;
    let ctx = Context::prepare(config)?;
    match command {
        Command::Validate => cmd_validate(&ctx).map(|_| ()),
        Command::LmrGrid => cmd_lmr_grid(&ctx),
        Command::LemmaCheck => cmd_lemma_check(&ctx),
        Command::Construct => cmd_construct(&ctx).map(|_| ()),
        Command::Forward => cmd_forward(&ctx),
        Command::Roundtrip => cmd_roundtrip(&ctx),
        Command::Report => cmd_report(&ctx),
    }
}

fn check_config(config: &RunConfig) -> Result<(), Failure> {
    if !(config.accuracy > 0.0) {
        return Err(Failure::new("config", "--accuracy must be > 0"));
    }
    if !(config.lambda_tol > 0.0) {
        return Err(Failure::new("config", "--lambda-tol must be > 0"));
    }
    if config.max_level < 2 {
        return Err(Failure::new("config", "--max-level must be at least 2"));
    }
    if config.steps == 0 {
        return Err(Failure::new("config", "--steps must be at least 1"));
    }
    Ok(())
}

/// Everything a subcommand needs: the loaded system, the resolved output
/// directory, and the provenance stamp derived from the effective config.
struct Context {
    system: SlitSystem,
    out: PathBuf,
    config: RunConfig,
    /// FNV-1a hash of subcommand + system content + numeric parameters.
    config_hash: String,
}

impl Context {
    fn prepare(config: &RunConfig) -> Result<Self, Failure> {
        let system = load_system(config)?;
        fs::create_dir_all(&config.out).map_err(fail("io"))?;
        // The hash covers exactly the inputs that determine artifact content
        // (not the subcommand), so identical artifacts produced by different
        // subcommands — e.g. construct.csv from `construct` and from
        // `report` — come out byte-identical.
        let mut canon = String::new();
        let _ = write!(
            canon,
            "system={} accuracy={:e} max_level={} lambda_tol={:e} steps={}",
            system.to_json_string(),
            config.accuracy,
            config.max_level,
            config.lambda_tol,
            config.steps,
        );
        Ok(Context {
            system,
            out: config.out.clone(),
            config: config.clone(),
            config_hash: format!("{:016x}", fnv1a64(canon.as_bytes())),
        })
    }

    fn provenance(&self) -> Value {
        json!({"tool": TOOL, "version": VERSION, "config": self.config_hash})
    }

    fn csv_stamp(&self) -> String {
        format!("# {TOOL} {VERSION} config {}", self.config_hash)
    }

    fn write_json(&self, name: &str, doc: &Value) -> Result<(), Failure> {
        let path = self.out.join(name);
        let text = serde_json::to_string_pretty(doc).map_err(fail("io"))?;
        fs::write(&path, text + "\n").map_err(fail("io"))
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<(), Failure> {
        let mut text = String::with_capacity(rows.len() * 64 + 128);
        text.push_str(&self.csv_stamp());
        text.push('\n');
        text.push_str(header);
        text.push('\n');
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        fs::write(self.out.join(name), text).map_err(fail("io"))
    }

    fn construct_options(&self) -> ConstructOptions {
        ConstructOptions {
            accuracy: self.config.accuracy,
            levels: geometric_levels(2, 2, self.config.max_level),
            lambda_tol: self.config.lambda_tol,
            ..ConstructOptions::default()
        }
    }
}

fn load_system(config: &RunConfig) -> Result<SlitSystem, Failure> {
    if let Some(path) = &config.input {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::new("io", format!("cannot read {}: {e}", path.display())))?;
        SlitSystem::from_json_str(&text).map_err(fail("geometry"))
    } else if let Some(name) = &config.fixture {
        fixtures::fixture(name).ok_or_else(|| {
            Failure::new(
                "config",
                format!("unknown fixture {name:?}; available: {}", fixtures::NAMES.join(", ")),
            )
        })
    } else {
        Err(Failure::new("config", "provide --input PATH or --fixture NAME"))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Shortest-roundtrip decimal form; deterministic for a given build.
fn num(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

fn cmd_validate(ctx: &Context) -> Result<Vec<String>, Failure> {
    let violations = ctx.system.validate();
    let doc = json!({
        "provenance": ctx.provenance(),
        "slits": ctx.system.slits.len(),
        "extension_headroom": ctx.system.extension_headroom,
        "violations": violations,
    });
    ctx.write_json("validate.json", &doc)?;
    if violations.is_empty() {
        println!("validate PASS ({} slits, no violations)", ctx.system.slits.len());
        Ok(violations)
    } else {
        Err(Failure::new(
            "validation",
            format!("{} violation(s): {}", violations.len(), violations.join("; ")),
        ))
    }
}

// ---------------------------------------------------------------------------
// lmr-grid / lemma-check
// ---------------------------------------------------------------------------

const GRID_N: usize = 33;

fn cmd_lmr_grid(ctx: &Context) -> Result<(), Failure> {
    let oracle = LmrOracle::new(ctx.system.clone(), ctx.config.accuracy).map_err(fail("oracle"))?;
    let grid = oracle.grid(GRID_N, &[1.0, 1.0]).map_err(fail("oracle"))?;
    let spacing = 1.0 / (GRID_N - 1) as f64;
    let mut rows = Vec::with_capacity(GRID_N * GRID_N);
    for (i, row) in grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            rows.push(format!(
                "{},{},{}",
                num(i as f64 * spacing),
                num(j as f64 * spacing),
                num(v)
            ));
        }
    }
    ctx.write_csv("lmr_grid.csv", "f1,f2,lmr", &rows)?;
    println!(
        "lmr-grid PASS ({GRID_N}x{GRID_N} values, zipper resolution {}, est accuracy {:.2e})",
        oracle.resolution(),
        oracle.est_accuracy()
    );
    Ok(())
}

fn cmd_lemma_check(ctx: &Context) -> Result<(), Failure> {
    let oracle = LmrOracle::new(ctx.system.clone(), ctx.config.accuracy).map_err(fail("oracle"))?;
    let grid = oracle.grid(GRID_N, &[1.0, 1.0]).map_err(fail("oracle"))?;

    // Strict monotonicity of first differences along both coordinates.
    let mut min_d1 = f64::INFINITY;
    let mut min_d2 = f64::INFINITY;
    for i in 0..GRID_N {
        for j in 0..GRID_N {
            if i + 1 < GRID_N {
                min_d1 = min_d1.min(grid[i + 1][j] - grid[i][j]);
            }
            if j + 1 < GRID_N {
                min_d2 = min_d2.min(grid[i][j + 1] - grid[i][j]);
            }
        }
    }
    let monotone_pass = min_d1 > 0.0 && min_d2 > 0.0;

    // Difference-quotient modulus for a ladder of epsilons; 0.25 is the one
    // the pipeline gates on.
    let mut entries = Vec::new();
    let mut gate: Option<(f64, f64)> = None; // (delta, worst_deviation) at eps = 0.25
    for eps in [1.0, 0.5, 0.25] {
        match continuity_modulus(&oracle, eps) {
            Ok(est) => {
                if eps == 0.25 {
                    gate = Some((est.delta, est.worst_deviation));
                }
                entries.push(json!({
                    "epsilon": eps,
                    "delta": est.delta,
                    "worst_deviation": est.worst_deviation,
                    "grid_spacing": est.grid_spacing,
                }));
            }
            Err(e) => {
                entries.push(json!({
                    "epsilon": eps,
                    "delta": Value::Null,
                    "error": e.to_string(),
                }));
            }
        }
    }
    let pass = monotone_pass && gate.is_some();
    let doc = json!({
        "provenance": ctx.provenance(),
        "grid": GRID_N,
        "min_first_difference": [min_d1, min_d2],
        "monotone_pass": monotone_pass,
        "moduli": entries,
        "pass": pass,
    });
    ctx.write_json("lemma_check.json", &doc)?;
    match gate {
        Some((delta, worst)) if monotone_pass => {
            println!(
                "lemma-check PASS (min diffs {min_d1:.3e}/{min_d2:.3e}, delta(0.25)={delta:.4}, \
                 worst ratio in [{:.4}, {:.4}])",
                1.0 - worst,
                1.0 + worst
            );
            Ok(())
        }
        Some(_) => Err(Failure::new("check", "grid first differences are not all positive")),
        None => Err(Failure::new(
            "check",
            "no difference-quotient modulus certified at epsilon 0.25",
        )),
    }
}

// ---------------------------------------------------------------------------
// construct
// ---------------------------------------------------------------------------

fn construct_header(m: usize) -> String {
    let mut h = String::from("t");
    for j in 1..=m {
        let _ = write!(h, ",u_{j}");
    }
    for j in 1..=m {
        let _ = write!(h, ",xi_{j}_re,xi_{j}_im");
    }
    h
}

fn cmd_construct(ctx: &Context) -> Result<ConstantCoeffSolution, Failure> {
    let ctor = Constructor::new(&ctx.system, ctx.construct_options()).map_err(fail("construct"))?;
    let sol = ctor.construct().map_err(fail("construct"))?;
    write_construct_artifacts(ctx, &sol)?;
    println!(
        "construct PASS (lambda = [{}], L = {:.6}, {} levels, diag residual {:.2e})",
        sol.lambda.iter().map(|l| format!("{l:.6}")).collect::<Vec<_>>().join(", "),
        sol.l_total,
        sol.levels.len(),
        sol.diag_residual
    );
    Ok(sol)
}

fn write_construct_artifacts(ctx: &Context, sol: &ConstantCoeffSolution) -> Result<(), Failure> {
    let m = sol.lambda.len();
    let mut rows = Vec::with_capacity(sol.grid.len());
    for (k, &t) in sol.grid.iter().enumerate() {
        let mut row = num(t);
        for table in &sol.u_tables {
            let _ = write!(row, ",{}", num(table.ys()[k]));
        }
        for xi in &sol.xi_tables {
            let _ = write!(row, ",{},{}", num(xi[k].re), num(xi[k].im));
        }
        rows.push(row);
    }
    ctx.write_csv("construct.csv", &construct_header(m), &rows)?;

    let levels: Vec<Value> = sol
        .levels
        .iter()
        .map(|d| json!({"n": d.n, "lambda": d.lambda, "residual": d.residual}))
        .collect();
    let doc = json!({
        "provenance": ctx.provenance(),
        "lambda": sol.lambda,
        "L": sol.l_total,
        "levels": levels,
        "diag_residual": sol.diag_residual,
        "xi_max_jump": sol.xi_max_jump,
        "slits": m,
        "grid_len": sol.grid.len(),
    });
    ctx.write_json("construct.json", &doc)
}

// ---------------------------------------------------------------------------
// reading construct artifacts back (forward / roundtrip)
// ---------------------------------------------------------------------------

fn json_f64(v: &Value, key: &str) -> Result<f64, Failure> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Failure::new("format", format!("construct.json: missing number {key:?}")))
}

fn json_f64_array(v: &Value, key: &str) -> Result<Vec<f64>, Failure> {
    v.get(key)
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_f64).collect::<Vec<f64>>())
        .filter(|a: &Vec<f64>| !a.is_empty())
        .ok_or_else(|| Failure::new("format", format!("construct.json: missing array {key:?}")))
}

/// Rebuild a solution from `construct.csv` + `construct.json` in `out`.
/// Prefix tables are not persisted; nothing downstream of construct uses them.
fn load_solution(out: &Path) -> Result<ConstantCoeffSolution, Failure> {
    let sidecar_path = out.join("construct.json");
    let text = fs::read_to_string(&sidecar_path).map_err(|e| {
        Failure::new("io", format!("cannot read {} (run construct first): {e}", sidecar_path.display()))
    })?;
    let sidecar: Value = serde_json::from_str(&text).map_err(fail("format"))?;
    let lambda = json_f64_array(&sidecar, "lambda")?;
    let l_total = json_f64(&sidecar, "L")?;
    let diag_residual = json_f64(&sidecar, "diag_residual")?;
    let levels: Vec<LevelDiag> = sidecar
        .get("levels")
        .and_then(Value::as_array)
        .map(|a| {
            a.iter()
                .map(|d| {
                    Ok(LevelDiag {
                        n: d.get("n").and_then(Value::as_u64).ok_or_else(|| {
                            Failure::new("format", "construct.json: level missing n")
                        })? as usize,
                        lambda: json_f64_array(d, "lambda")?,
                        residual: json_f64(d, "residual")?,
                        lambda_diff: None,
                        table_diff: None,
                    })
                })
                .collect::<Result<Vec<_>, Failure>>()
        })
        .transpose()?
        .unwrap_or_default();

    let m = lambda.len();
    let csv_path = out.join("construct.csv");
    let text = fs::read_to_string(&csv_path)
        .map_err(|e| Failure::new("io", format!("cannot read {}: {e}", csv_path.display())))?;
    let mut grid = Vec::new();
    let mut u_cols: Vec<Vec<f64>> = vec![Vec::new(); m];
    let mut xi_cols: Vec<Vec<Complex64>> = vec![Vec::new(); m];
    let mut saw_header = false;
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != construct_header(m) {
                return Err(Failure::new(
                    "format",
                    format!("construct.csv: unexpected header {line:?}"),
                ));
            }
            saw_header = true;
            continue;
        }
        let cells: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Failure::new("format", format!("construct.csv: {e} in {line:?}")))?;
        if cells.len() != 1 + 3 * m {
            return Err(Failure::new(
                "format",
                format!("construct.csv: expected {} columns, found {}", 1 + 3 * m, cells.len()),
            ));
        }
        grid.push(cells[0]);
        for j in 0..m {
            u_cols[j].push(cells[1 + j]);
            xi_cols[j].push(Complex64::new(cells[1 + m + 2 * j], cells[2 + m + 2 * j]));
        }
    }
    if !saw_header || grid.len() < 2 {
        return Err(Failure::new("format", "construct.csv: no data rows"));
    }

    let xi_max_jump = xi_cols
        .iter()
        .flat_map(|row| row.windows(2).map(|w| (w[1] - w[0]).norm()))
        .fold(0.0, f64::max);
    Ok(ConstantCoeffSolution {
        lambda,
        u_tables: u_cols
            .into_iter()
            .map(|ys| MonotoneTable::new(grid.clone(), ys))
            .collect(),
        prefix_tables: Vec::new(),
        xi_tables: xi_cols,
        grid,
        l_total,
        levels,
        diag_residual,
        xi_max_jump,
    })
}

fn xi_tables_of(sol: &ConstantCoeffSolution) -> Result<Vec<XiTable>, Failure> {
    sol.xi_tables
        .iter()
        .map(|row| XiTable::from_values(&sol.grid, row))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail("solve"))
}

fn trace_rows(l_total: f64, steps: usize, traces: &[Vec<Complex64>]) -> Vec<String> {
    let mut rows = Vec::with_capacity(traces.iter().map(Vec::len).sum());
    for (j, trace) in traces.iter().enumerate() {
        for (k, w) in trace.iter().enumerate() {
            let t = l_total * k as f64 / steps as f64;
            rows.push(format!("{j},{},{},{}", num(t), num(w.re), num(w.im)));
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

fn cmd_forward(ctx: &Context) -> Result<(), Failure> {
    let sol = load_solution(&ctx.out)?;
    forward_with(ctx, &sol).map(|_| ())
}

fn forward_with(ctx: &Context, sol: &ConstantCoeffSolution) -> Result<Value, Failure> {
    let steps = ctx.config.steps;
    let xi = xi_tables_of(sol)?;
    let traces = regenerate_traces(&sol.lambda, &xi, sol.l_total, steps).map_err(fail("solve"))?;
    ctx.write_csv("traces.csv", "slit,t,re,im", &trace_rows(sol.l_total, steps, &traces))?;

    // Integrate the flow at the origin to expose the normalization channel.
    let fwd = solve_forward(
        &sol.lambda,
        &xi,
        sol.l_total,
        &[Complex64::new(0.0, 0.0)],
        steps,
        &ForwardOptions::default(),
    )
    .map_err(fail("solve"))?;
    let max_deriv_error = fwd
        .times
        .iter()
        .zip(&fwd.log_deriv_at_0)
        .map(|(&t, &d)| (d - t).abs())
        .fold(0.0, f64::max);
    let origin_max = fwd.points[0].values.iter().map(|v| v.norm()).fold(0.0, f64::max);

    let doc = json!({
        "provenance": ctx.provenance(),
        "steps": steps,
        "lambda": sol.lambda,
        "L": sol.l_total,
        "trace_points_per_slit": steps + 1,
        "max_log_deriv_error": max_deriv_error,
        "origin_max_displacement": origin_max,
    });
    ctx.write_json("forward.json", &doc)?;
    println!(
        "forward PASS ({} slits x {} points, |log h'(0) - t| <= {max_deriv_error:.2e})",
        sol.lambda.len(),
        steps + 1
    );
    Ok(doc)
}

// ---------------------------------------------------------------------------
// roundtrip
// ---------------------------------------------------------------------------

fn cmd_roundtrip(ctx: &Context) -> Result<(), Failure> {
    let sol = load_solution(&ctx.out)?;
    roundtrip_with(ctx, &sol).and_then(|(_, pass)| {
        if pass {
            Ok(())
        } else {
            Err(Failure::new("check", "roundtrip comparison failed; see roundtrip.json"))
        }
    })
}

fn roundtrip_with(ctx: &Context, sol: &ConstantCoeffSolution) -> Result<(Value, bool), Failure> {
    let steps = ctx.config.steps;
    let bounds = RoundtripBounds::default();
    let report = roundtrip_report(&ctx.system, sol, steps, &bounds).map_err(fail("solve"))?;

    let xi = xi_tables_of(sol)?;
    let traces = regenerate_traces(&sol.lambda, &xi, sol.l_total, steps).map_err(fail("solve"))?;
    ctx.write_csv(
        "roundtrip_traces.csv",
        "slit,t,re,im",
        &trace_rows(sol.l_total, steps, &traces),
    )?;

    let doc = json!({
        "provenance": ctx.provenance(),
        "steps": report.steps,
        "per_slit_hausdorff": report.per_slit_hausdorff,
        "discretization_scale": report.discretization_scale,
        "hausdorff_bound": report.hausdorff_bound,
        "hausdorff_pass": report.hausdorff_pass,
        "max_diag_error": report.max_diag_error,
        "diag_pass": report.diag_pass,
        "max_deriv_error": report.max_deriv_error,
        "deriv_pass": report.deriv_pass,
        "xi_max_jump": report.xi_max_jump,
        "xi_continuity_pass": report.xi_continuity_pass,
        "pass": report.pass,
    });
    ctx.write_json("roundtrip.json", &doc)?;
    println!(
        "roundtrip {} (worst hausdorff {:.3e} vs bound {:.3e})",
        if report.pass { "PASS" } else { "FAIL" },
        report.per_slit_hausdorff.iter().copied().fold(0.0, f64::max),
        report.hausdorff_bound
    );
    Ok((doc, report.pass))
}

// ---------------------------------------------------------------------------
// report (full pipeline)
// ---------------------------------------------------------------------------

fn cmd_report(ctx: &Context) -> Result<(), Failure> {
    let violations = cmd_validate(ctx)?;
    let sol = cmd_construct(ctx)?;
    let forward = forward_with(ctx, &sol)?;
    let (roundtrip, pass) = roundtrip_with(ctx, &sol)?;

    let levels: Vec<Value> = sol
        .levels
        .iter()
        .map(|d| json!({"n": d.n, "lambda": d.lambda, "residual": d.residual}))
        .collect();
    let doc = json!({
        "provenance": ctx.provenance(),
        "system": {
            "slits": ctx.system.slits.len(),
            "extension_headroom": ctx.system.extension_headroom,
        },
        "validate": {"violations": violations},
        "construct": {
            "lambda": sol.lambda,
            "L": sol.l_total,
            "levels": levels,
            "diag_residual": sol.diag_residual,
            "xi_max_jump": sol.xi_max_jump,
        },
        "forward": forward,
        "roundtrip": roundtrip,
        "pass": pass,
    });
    ctx.write_json("report.json", &doc)?;
    if pass {
        println!("report PASS (all stages)");
        Ok(())
    } else {
        Err(Failure::new("check", "pipeline failed; see report.json"))
    }
}
