//! Continuous-optimization back end.
//!
//! A self-contained primal simplex solver for linear programs of the form
//! `max c.x  s.t.  A x <= b,  l <= x <= u`, plus a Frank-Wolfe loop for
//! concave quadratic objectives that uses the LP solver as its
//! linear-minimization oracle. Every optimal LP solution can be re-checked
//! by the independent KKT verifier in [`check_kkt`].

mod frank_wolfe;
mod simplex;

pub use frank_wolfe::{frank_wolfe, FwSolution, QuadraticObjective};
pub use simplex::{
    check_kkt, solve_lp, KktReport, LinearProgram, LpSolution, LpStatus, LpTolerances,
};

use std::fmt::Write as _;

/// Render an LP as a plain-text fixed-format listing (objective, constraint
/// rows, bounds) for external cross-checking.
pub fn dump_lp(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str("maximize\n ");
    for (i, c) in lp.objective.iter().enumerate() {
        let _ = write!(out, " {} {} x{}", sign(*c), c.abs(), i);
    }
    out.push_str("\nsubject to\n");
    for (r, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, "  r{r}:");
        for &(j, a) in &row.coeffs {
            let _ = write!(out, " {} {} x{}", sign(a), a.abs(), j);
        }
        let _ = writeln!(out, " <= {}", row.rhs);
    }
    out.push_str("bounds\n");
    for j in 0..lp.n_vars {
        let upper = if lp.upper[j].is_finite() { format!("{}", lp.upper[j]) } else { "inf".into() };
        let _ = writeln!(out, "  {} <= x{} <= {}", lp.lower[j], j, upper);
    }
    out
}

fn sign(v: f64) -> char {
    if v < 0.0 {
        '-'
    } else {
        '+'
    }
}
