//! Frank-Wolfe (conditional gradient) maximization of a concave quadratic
//! over an LP-described polytope, with exact line search.

use nalgebra::DMatrix;

use super::simplex::{solve_lp, LinearProgram, LpStatus, LpTolerances};
use crate::{Error, Result};

/// A concave quadratic `f(w) = constant + linear.w - w' Q w` with `Q`
/// symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// `None` means a purely linear objective.
    pub quadratic: Option<DMatrix<f64>>,
}

impl QuadraticObjective {
    pub fn linear_only(linear: Vec<f64>) -> Self {
        Self { constant: 0.0, linear, quadratic: None }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut v = self.constant;
        for (c, x) in self.linear.iter().zip(w) {
            v += c * x;
        }
        if let Some(q) = &self.quadratic {
            let n = w.len();
            for i in 0..n {
                let mut qi = 0.0;
                for j in 0..n {
                    qi += q[(i, j)] * w[j];
                }
                v -= w[i] * qi;
            }
        }
        v
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.linear.clone();
        if let Some(q) = &self.quadratic {
            let n = w.len();
            for i in 0..n {
                let mut qi = 0.0;
                for j in 0..n {
                    // Q symmetric: grad of -w'Qw is -2 Q w.
                    qi += q[(i, j)] * w[j];
                }
                g[i] -= 2.0 * qi;
            }
        }
        g
    }

    /// Concavity check: `Q` must be symmetric PSD. A Cholesky factorization
    /// with a small diagonal shift stands in for a full eigenvalue test.
    fn check_concave(&self, n: usize) -> Result<()> {
        if self.linear.len() != n {
            return Err(Error::Validation("objective dimension mismatch".into()));
        }
        let Some(q) = &self.quadratic else { return Ok(()) };
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Validation("quadratic term dimension mismatch".into()));
        }
        let scale = 1.0 + q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in (i + 1)..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-8 * scale {
                    return Err(Error::Validation("quadratic term must be symmetric".into()));
                }
            }
        }
        let shifted = q.clone() + DMatrix::identity(n, n) * (1e-9 * scale);
        if shifted.cholesky().is_none() {
            return Err(Error::Validation(
                "quadratic term must be positive semidefinite for a concave objective".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FwSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Final Frank-Wolfe duality gap `g.(s - x)`, an upper bound on the
    /// remaining suboptimality.
    pub gap: f64,
    pub iterations: usize,
}

/// Maximize a concave quadratic over the polytope described by `polytope`'s
/// constraint rows and bounds (its objective vector is ignored).
///
/// Iterates are convex combinations of vertices, hence always feasible.
/// Terminates when the duality gap drops to `tol * (1 + |f|)` or after
/// `max_iter` oracle calls.
pub fn frank_wolfe(
    objective: &QuadraticObjective,
    polytope: &LinearProgram,
    max_iter: usize,
    tol: f64,
) -> Result<FwSolution> {
    let n = polytope.n_vars;
    objective.check_concave(n)?;

    let lp_tol = LpTolerances::default();
    let mut oracle = polytope.clone();

    // Start from the vertex maximizing the linear part; for a purely linear
    // objective this is already the optimum and the loop exits on its first
    // gap evaluation.
    oracle.objective = objective.linear.clone();
    let start = solve_lp(&oracle, lp_tol)?;
    match start.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible("frank-wolfe polytope is empty".into())),
        LpStatus::Unbounded => {
            return Err(Error::Solver("frank-wolfe polytope is unbounded".into()))
        }
    }
    let mut x = start.x;
    let mut value = objective.value(&x);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let grad = objective.gradient(&x);
        oracle.objective = grad.clone();
        let vertex = solve_lp(&oracle, lp_tol)?;
        if vertex.status != LpStatus::Optimal {
            return Err(Error::Solver("frank-wolfe oracle failed".into()));
        }
        let direction: Vec<f64> = vertex.x.iter().zip(&x).map(|(s, w)| s - w).collect();
        gap = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        if gap <= tol * (1.0 + value.abs()) {
            break;
        }

        // Exact line search: f(x + gamma d) = f(x) + gamma g.d - gamma^2 d'Qd.
        let curvature = match &objective.quadratic {
            Some(q) => {
                let mut c = 0.0;
                for i in 0..n {
                    let mut qi = 0.0;
                    for j in 0..n {
                        qi += q[(i, j)] * direction[j];
                    }
                    c += direction[i] * qi;
                }
                c
            }
            None => 0.0,
        };
        let step = if curvature <= 1e-14 { 1.0 } else { (gap / (2.0 * curvature)).clamp(0.0, 1.0) };
        if step <= 0.0 {
            break;
        }
        for (xi, di) in x.iter_mut().zip(&direction) {
            *xi += step * di;
        }
        value = objective.value(&x);
    }

    Ok(FwSolution { x, objective: value, gap, iterations })
}
