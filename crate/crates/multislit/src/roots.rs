//! Bracketed scalar root finding.
//!
//! Everything here assumes a sign change on the initial bracket. The solver
//! is the Illinois variant of regula falsi: it keeps the bracket (so it is as
//! robust as bisection) but converges superlinearly on the smooth monotone
//! functions we feed it, which matters because every evaluation is a full
//! conformal-map build.

/// Outcome of a successful bracketed solve.
#[derive(Debug, Clone, Copy)]
pub struct RootResult {
    /// Final abscissa.
    pub x: f64,
    /// Residual at `x`.
    pub fx: f64,
    /// Number of function evaluations consumed (excluding endpoint values
    /// supplied by the caller).
    pub evaluations: usize,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RootError {
    #[error("no sign change on bracket: f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}")]
    NoSignChange { f_lo: f64, f_hi: f64 },
    #[error("root did not meet tolerance after {max_iter} iterations (best residual {best:.3e})")]
    TooManyIterations { max_iter: usize, best: f64 },
}

/// Solve f(x) = 0 on [lo, hi] where f(lo) and f(hi) have opposite signs,
/// with the endpoint values already known. Stops when |f| <= ftol or the
/// bracket width falls below xtol.
pub fn solve_bracketed_with<F>(
    mut f: F,
    (mut lo, mut flo): (f64, f64),
    (mut hi, mut fhi): (f64, f64),
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<RootResult, RootError>
where
    F: FnMut(f64) -> f64,
{
    if flo == 0.0 {
        return Ok(RootResult { x: lo, fx: flo, evaluations: 0 });
    }
    if fhi == 0.0 {
        return Ok(RootResult { x: hi, fx: fhi, evaluations: 0 });
    }
    if flo.signum() == fhi.signum() {
        return Err(RootError::NoSignChange { f_lo: flo, f_hi: fhi });
    }
    if flo.abs() <= ftol {
        return Ok(RootResult { x: lo, fx: flo, evaluations: 0 });
    }
    if fhi.abs() <= ftol {
        return Ok(RootResult { x: hi, fx: fhi, evaluations: 0 });
    }

    // Which side the previous iterate landed on; used for the Illinois
    // down-weighting that prevents regula falsi from stalling on one end.
    let mut last_side = 0i8;
    let mut evaluations = 0usize;

    for _ in 0..max_iter {
        let width = hi - lo;
        if width.abs() <= xtol {
            let (x, fx) = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
            return Ok(RootResult { x, fx, evaluations });
        }

        let mut x = (flo * hi - fhi * lo) / (flo - fhi);
        // Keep the trial strictly interior; fall back toward the midpoint
        // when the secant point crowds an endpoint.
        let guard = 1e-3 * width.abs();
        if !x.is_finite() || x <= lo + guard.min(width.abs() * 0.49) || x >= hi - guard.min(width.abs() * 0.49) {
            x = 0.5 * (lo + hi);
        }

        let fx = f(x);
        evaluations += 1;

        if fx == 0.0 || fx.abs() <= ftol {
            return Ok(RootResult { x, fx, evaluations });
        }

        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if last_side == -1 {
                fhi *= 0.5;
            }
            last_side = -1;
        } else {
            hi = x;
            fhi = fx;
            if last_side == 1 {
                flo *= 0.5;
            }
            last_side = 1;
        }
    }

    Err(RootError::TooManyIterations { max_iter, best: flo.abs().min(fhi.abs()) })
}

/// Convenience wrapper that evaluates both endpoints itself.
pub fn solve_bracketed<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<RootResult, RootError>
where
    F: FnMut(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    solve_bracketed_with(&mut f, (lo, flo), (hi, fhi), xtol, ftol, max_iter)
        .map(|mut r| {
            r.evaluations += 2;
            r
        })
}
