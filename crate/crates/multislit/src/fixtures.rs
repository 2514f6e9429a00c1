//! Named example slit systems used by tests and the CLI.

use num_complex::Complex64;

use crate::error::SolveError;
use crate::geometry::{Slit, SlitSystem};
use crate::loewner::{regenerate_traces, XiTable};

/// Names accepted by [`fixture`].
pub const NAMES: [&str; 4] = ["radial", "symmetric-pair", "asymmetric-pair", "curved-pair"];

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A gentle inward spiral: radius shrinks while the angle advances.
fn arc(base_angle: f64, turn: f64, depth: f64, points: usize) -> Slit {
    let pts = (0..points)
        .map(|i| {
            let s = i as f64 / (points - 1) as f64;
            Complex64::from_polar(1.0 - depth * s, base_angle + turn * s)
        })
        .collect();
    Slit::new(pts)
}

/// Look up a fixture by name.
pub fn fixture(name: &str) -> Option<SlitSystem> {
    let system = match name {
        "radial" => SlitSystem::new(vec![Slit::new(vec![c(1.0, 0.0), c(0.35, 0.0)])], 1.5),
        "symmetric-pair" => SlitSystem::new(
            vec![
                Slit::new(vec![c(1.0, 0.0), c(0.5, 0.0)]),
                Slit::new(vec![c(-1.0, 0.0), c(-0.5, 0.0)]),
            ],
            1.5,
        ),
        "asymmetric-pair" => SlitSystem::new(
            vec![
                Slit::new(vec![c(1.0, 0.0), c(0.4, 0.0)]),
                Slit::new(vec![c(0.0, 1.0), c(0.0, 0.65)]),
            ],
            1.5,
        ),
        "curved-pair" => SlitSystem::new(
            vec![arc(0.0, 0.5, 0.55, 11), arc(std::f64::consts::PI, -0.4, 0.45, 11)],
            1.5,
        ),
        _ => return None,
    };
    Some(system)
}

/// Slits generated by prescribed constant coefficients `(λ₀, 1−λ₀)` and
/// smooth driving functions, for testing coefficient recovery. Returns the
/// slit system together with the driving tables that produced it.
pub fn synthetic_pair(
    lambda0: f64,
    l_total: f64,
    steps: usize,
) -> Result<(SlitSystem, Vec<XiTable>), SolveError> {
    let lambda = [lambda0, 1.0 - lambda0];
    let ts: Vec<f64> = (0..=steps)
        .map(|k| l_total * k as f64 / steps as f64)
        .collect();
    let xi = vec![
        XiTable::from_args(ts.clone(), ts.iter().map(|&t| 0.4 + 0.5 * t).collect())?,
        XiTable::from_args(ts.clone(), ts.iter().map(|&t| -2.2 - 0.3 * t).collect())?,
    ];
    let traces = regenerate_traces(&lambda, &xi, l_total, steps)?;
    let slits = traces.into_iter().map(Slit::new).collect();
    Ok((SlitSystem::new(slits, 1.5), xi))
}
