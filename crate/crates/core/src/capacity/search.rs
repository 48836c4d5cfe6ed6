//! Matching the Lagrange multiplier to the power budget.
//!
//! Achieved cost is non-increasing in `s`. The search brackets `κ` by
//! doubling/halving from `s = 1`, then bisects on `ln s`. A monotonicity
//! violation inside the bracket switches to golden-section minimization of
//! the dual function, which is convex in `s` with slope `κ − cost(s)`.

use serde::Serialize;

use super::CapacityError;

const S_MAX: f64 = 1e15;
const S_MIN: f64 = 1e-15;
const MAX_BISECTIONS: usize = 200;

/// One evaluation of the Lagrangian problem at fixed `s`.
pub(crate) struct Evaluation<T> {
    pub s: f64,
    pub cost: f64,
    pub dual: f64,
    /// Every innovations covariance vanished, so larger `s` cannot lower the cost.
    pub silent: bool,
    pub payload: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Bisection,
    GoldenSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub method: SearchMethod,
    pub evaluations: usize,
    pub s_lo: f64,
    pub s_hi: f64,
    pub monotone: bool,
    /// `|cost(s*) − κ|` at the returned point.
    pub cost_gap: f64,
}

pub(crate) enum Outcome<T> {
    /// Cost matched to `κ` within tolerance.
    Matched(Evaluation<T>),
    /// Cost stays above `κ` even with zero innovations.
    Infeasible(Evaluation<T>),
    /// Cost stays below `κ` for every multiplier.
    Inactive(Evaluation<T>),
}

pub(crate) fn match_multiplier<T, F>(
    kappa: f64,
    tol: f64,
    mut eval: F,
) -> Result<(Outcome<T>, SearchReport), CapacityError>
where
    F: FnMut(f64) -> Result<Evaluation<T>, CapacityError>,
{
    let mut report = SearchReport {
        method: SearchMethod::Bisection,
        evaluations: 0,
        s_lo: f64::NAN,
        s_hi: f64::NAN,
        monotone: true,
        cost_gap: f64::NAN,
    };
    let mut call = |s: f64, report: &mut SearchReport| {
        report.evaluations += 1;
        eval(s)
    };
    let done = |e: Evaluation<T>, mut report: SearchReport, make: fn(Evaluation<T>) -> Outcome<T>| {
        report.cost_gap = (e.cost - kappa).abs();
        Ok((make(e), report))
    };

    let first = call(1.0, &mut report)?;
    if (first.cost - kappa).abs() <= tol {
        report.s_lo = 1.0;
        report.s_hi = 1.0;
        return done(first, report, Outcome::Matched);
    }
    // lo: cost > κ, hi: cost < κ.
    let (mut lo, mut hi);
    if first.cost > kappa {
        let mut prev = first;
        loop {
            if prev.silent || prev.s >= S_MAX {
                report.s_lo = prev.s;
                report.s_hi = f64::INFINITY;
                return done(prev, report, Outcome::Infeasible);
            }
            let e = call(prev.s * 2.0, &mut report)?;
            if e.cost > prev.cost + tol {
                report.monotone = false;
            }
            if (e.cost - kappa).abs() <= tol {
                report.s_lo = prev.s;
                report.s_hi = e.s;
                return done(e, report, Outcome::Matched);
            }
            if e.cost < kappa {
                lo = prev;
                hi = e;
                break;
            }
            prev = e;
        }
    } else {
        let mut prev = first;
        loop {
            if prev.s <= S_MIN {
                report.s_lo = 0.0;
                report.s_hi = prev.s;
                return done(prev, report, Outcome::Inactive);
            }
            let e = call(prev.s * 0.5, &mut report)?;
            if e.cost + tol < prev.cost {
                report.monotone = false;
            }
            if (e.cost - kappa).abs() <= tol {
                report.s_lo = e.s;
                report.s_hi = prev.s;
                return done(e, report, Outcome::Matched);
            }
            if e.cost > kappa {
                lo = e;
                hi = prev;
                break;
            }
            prev = e;
        }
    }

    for _ in 0..MAX_BISECTIONS {
        report.s_lo = lo.s;
        report.s_hi = hi.s;
        if hi.s / lo.s - 1.0 <= 4.0 * f64::EPSILON {
            break;
        }
        let mid = call((lo.s * hi.s).sqrt(), &mut report)?;
        if mid.cost > lo.cost + tol || mid.cost < hi.cost - tol {
            report.monotone = false;
            report.method = SearchMethod::GoldenSection;
            let best = golden_section(lo.s, hi.s, &mut |s| call(s, &mut report))?;
            return done(best, report, Outcome::Matched);
        }
        if (mid.cost - kappa).abs() <= tol {
            return done(mid, report, Outcome::Matched);
        }
        if mid.cost > kappa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Bracket collapsed onto a jump of the cost; keep the closer side.
    let best = if (lo.cost - kappa).abs() <= (hi.cost - kappa).abs() {
        lo
    } else {
        hi
    };
    done(best, report, Outcome::Matched)
}

/// Minimizes the convex dual on `[a, b]`.
fn golden_section<T, F>(mut a: f64, mut b: f64, eval: &mut F) -> Result<Evaluation<T>, CapacityError>
where
    F: FnMut(f64) -> Result<Evaluation<T>, CapacityError>,
{
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut e1 = eval(x1)?;
    let mut e2 = eval(x2)?;
    while (b - a) > 1e-13 * b {
        if e1.dual <= e2.dual {
            b = x2;
            x2 = x1;
            e2 = e1;
            x1 = b - inv_phi * (b - a);
            e1 = eval(x1)?;
        } else {
            a = x1;
            x1 = x2;
            e1 = e2;
            x2 = a + inv_phi * (b - a);
            e2 = eval(x2)?;
        }
    }
    Ok(if e1.dual <= e2.dual { e1 } else { e2 })
}
