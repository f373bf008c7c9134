//! Two-phase primal simplex over a dense tableau.
//!
//! Pricing starts with Dantzig's rule and falls back to Bland's rule after
//! `2 (m + n)` iterations so termination is guaranteed; a hard iteration cap
//! turns pathological cycling into an error instead of a hang.

use crate::{Error, Result};

/// A linear program `max c.x  s.t.  A x <= b,  l <= x <= u`.
///
/// Rows are stored sparsely as `(var, coeff)` lists. Lower bounds must be
/// finite (the builders in this crate only ever need `x >= 0`); upper bounds
/// may be infinite.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearProgram {
    /// An LP over `n_vars` variables with zero objective, no rows, and
    /// bounds `0 <= x`.
    pub fn new(n_vars: usize) -> Self {
        Self {
            n_vars,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(LpRow { coeffs, rhs });
    }

    fn validate(&self) -> Result<()> {
        if self.objective.len() != self.n_vars
            || self.lower.len() != self.n_vars
            || self.upper.len() != self.n_vars
        {
            return Err(Error::Validation("lp dimensions are inconsistent".into()));
        }
        for v in &self.objective {
            if !v.is_finite() {
                return Err(Error::Validation("lp objective must be finite".into()));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(j, a)| *j >= self.n_vars || !a.is_finite()) {
                return Err(Error::Validation("lp row has invalid entries".into()));
            }
        }
        for j in 0..self.n_vars {
            if !self.lower[j].is_finite() {
                return Err(Error::Validation(format!("lower bound of x{j} must be finite")));
            }
            if self.lower[j] > self.upper[j] {
                return Err(Error::Validation(format!("bounds of x{j} are crossed")));
            }
        }
        Ok(())
    }

    /// Evaluate `a_r . x` for row `r`.
    pub fn row_value(&self, r: usize, x: &[f64]) -> f64 {
        self.rows[r].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. Primal/dual values are meaningful only when `status` is
/// `Optimal`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual multiplier per constraint row (nonnegative for `<=` rows).
    pub dual: Vec<f64>,
    /// Dual multipliers of the finite upper bounds, aligned with variables
    /// (zero where the upper bound is infinite).
    pub dual_upper: Vec<f64>,
    pub iterations: usize,
}

/// Feasibility and optimality tolerances, documented defaults `1e-7`/`1e-6`.
#[derive(Debug, Clone, Copy)]
pub struct LpTolerances {
    pub feasibility: f64,
    pub optimality: f64,
}

impl Default for LpTolerances {
    fn default() -> Self {
        Self { feasibility: 1e-7, optimality: 1e-6 }
    }
}

const PIVOT_EPS: f64 = 1e-10;

/// Solve an LP with the two-phase primal simplex method.
///
/// On `Optimal` the returned duals certify the objective: the KKT residuals
/// reported by [`check_kkt`] are within the given tolerances.
pub fn solve_lp(lp: &LinearProgram, tol: LpTolerances) -> Result<LpSolution> {
    lp.validate()?;

    // Shift x = l + y so that y >= 0, and fold finite upper bounds in as
    // extra rows y_j <= u_j - l_j.
    let n = lp.n_vars;
    let mut rhs: Vec<f64> = Vec::new();
    let mut dense_rows: Vec<Vec<f64>> = Vec::new();
    for row in &lp.rows {
        let mut dense = vec![0.0; n];
        let mut shift = 0.0;
        for &(j, a) in &row.coeffs {
            dense[j] += a;
            shift += a * lp.lower[j];
        }
        dense_rows.push(dense);
        rhs.push(row.rhs - shift);
    }
    let m_orig = lp.rows.len();
    let mut upper_row_of_var = vec![usize::MAX; n];
    for j in 0..n {
        if lp.upper[j].is_finite() {
            let mut dense = vec![0.0; n];
            dense[j] = 1.0;
            upper_row_of_var[j] = dense_rows.len();
            dense_rows.push(dense);
            rhs.push(lp.upper[j] - lp.lower[j]);
        }
    }

    let mut tableau = Tableau::new(dense_rows, rhs, n);
    let status = tableau.solve(&lp.objective, tol)?;

    let mut solution = LpSolution {
        status,
        x: Vec::new(),
        objective: f64::NAN,
        dual: Vec::new(),
        dual_upper: vec![0.0; n],
        iterations: tableau.iterations,
    };
    if status != LpStatus::Optimal {
        return Ok(solution);
    }

    let y = tableau.primal(n);
    solution.x = (0..n).map(|j| y[j] + lp.lower[j]).collect();
    solution.objective = lp.objective_value(&solution.x);
    let duals = tableau.duals();
    solution.dual = duals[..m_orig].to_vec();
    for j in 0..n {
        if upper_row_of_var[j] != usize::MAX {
            solution.dual_upper[j] = duals[upper_row_of_var[j]];
        }
    }
    Ok(solution)
}

/// Dense simplex tableau over `max c.y  s.t.  R y + S s = b, y, s >= 0`
/// with `b >= 0` after negating rows (negated rows carry slack coefficient
/// `-1` and an artificial variable).
struct Tableau {
    /// `m x (n_cols + 1)`; the last column is the rhs.
    rows: Vec<Vec<f64>>,
    /// Objective row (reduced costs), same width as `rows` entries.
    obj: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    n_slack: usize,
    /// Column index where artificials start (== total real columns when
    /// there are none).
    art_start: usize,
    n_cols: usize,
    iterations: usize,
}

impl Tableau {
    fn new(dense_rows: Vec<Vec<f64>>, rhs: Vec<f64>, n_struct: usize) -> Self {
        let m = dense_rows.len();
        let n_slack = m;
        let negated: Vec<bool> = rhs.iter().map(|b| *b < 0.0).collect();
        let n_art = negated.iter().filter(|&&neg| neg).count();
        let art_start = n_struct + n_slack;
        let n_cols = art_start + n_art;

        let mut rows = vec![vec![0.0; n_cols + 1]; m];
        let mut basis = vec![0usize; m];
        let mut next_art = art_start;
        for i in 0..m {
            let flip = if negated[i] { -1.0 } else { 1.0 };
            for j in 0..n_struct {
                rows[i][j] = flip * dense_rows[i][j];
            }
            rows[i][n_struct + i] = flip;
            rows[i][n_cols] = flip * rhs[i];
            if negated[i] {
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = n_struct + i;
            }
        }

        Self {
            rows,
            obj: vec![0.0; n_cols + 1],
            basis,
            n_struct,
            n_slack,
            art_start,
            n_cols,
            iterations: 0,
        }
    }

    fn solve(&mut self, objective: &[f64], tol: LpTolerances) -> Result<LpStatus> {
        if self.n_cols > self.art_start {
            // Phase I: max -(sum of artificials).
            let mut phase1 = vec![0.0; self.n_cols];
            for c in phase1.iter_mut().skip(self.art_start) {
                *c = -1.0;
            }
            self.reset_objective(&phase1);
            let status = self.iterate(tol, true)?;
            debug_assert_ne!(status, LpStatus::Unbounded, "phase I is bounded above by 0");
            if self.obj[self.n_cols] < -tol.feasibility {
                return Ok(LpStatus::Infeasible);
            }
            self.evict_artificials();
        }

        let mut phase2 = vec![0.0; self.n_cols];
        phase2[..self.n_struct].copy_from_slice(objective);
        self.reset_objective(&phase2);
        self.iterate(tol, false)
    }

    /// Rebuild the reduced-cost row for a new cost vector given the current
    /// basis: `obj[j] = c_j - sum_i c_basis[i] * T[i][j]`.
    fn reset_objective(&mut self, costs: &[f64]) {
        self.obj = vec![0.0; self.n_cols + 1];
        self.obj[..self.n_cols].copy_from_slice(costs);
        for i in 0..self.rows.len() {
            let cb = costs[self.basis[i]];
            if cb != 0.0 {
                for j in 0..=self.n_cols {
                    self.obj[j] -= cb * self.rows[i][j];
                }
            }
        }
        // The rhs cell holds -objective after the subtraction; flip it so
        // obj[n_cols] is the current objective value.
        self.obj[self.n_cols] = -self.obj[self.n_cols];
    }

    fn iterate(&mut self, tol: LpTolerances, phase1: bool) -> Result<LpStatus> {
        let m = self.rows.len();
        let bland_after = 2 * (m + self.n_cols);
        let hard_cap = 10_000 + 50 * (m + self.n_cols);
        let mut local_iter = 0usize;

        loop {
            let allow_artificial = phase1;
            let entering = if local_iter < bland_after {
                self.price_dantzig(tol.optimality, allow_artificial)
            } else {
                self.price_bland(tol.optimality, allow_artificial)
            };
            let Some(col) = entering else {
                return Ok(LpStatus::Optimal);
            };

            let Some(row) = self.ratio_test(col) else {
                return Ok(LpStatus::Unbounded);
            };

            self.pivot(row, col);
            self.iterations += 1;
            local_iter += 1;
            if local_iter > hard_cap {
                return Err(Error::Solver(format!(
                    "simplex exceeded the cycling guard after {} iterations",
                    self.iterations
                )));
            }
        }
    }

    fn price_dantzig(&self, opt_tol: f64, allow_artificial: bool) -> Option<usize> {
        let limit = if allow_artificial { self.n_cols } else { self.art_start };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..limit {
            let r = self.obj[j];
            if r > opt_tol && best.map_or(true, |(_, b)| r > b) {
                best = Some((j, r));
            }
        }
        best.map(|(j, _)| j)
    }

    fn price_bland(&self, opt_tol: f64, allow_artificial: bool) -> Option<usize> {
        let limit = if allow_artificial { self.n_cols } else { self.art_start };
        (0..limit).find(|&j| self.obj[j] > opt_tol)
    }

    /// Minimum-ratio row for the entering column; ties go to the row with
    /// the smallest basic variable index (Bland-compatible).
    fn ratio_test(&self, col: usize) -> Option<usize> {
        let rhs_col = self.n_cols;
        let mut best: Option<(usize, f64)> = None;
        for (i, row) in self.rows.iter().enumerate() {
            let a = row[col];
            if a > PIVOT_EPS {
                let ratio = row[rhs_col] / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-12
                            || (ratio < br + 1e-12 && self.basis[i] < self.basis[bi])
                        {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.rows[row][col];
        let inv = 1.0 / pivot;
        for v in self.rows[row].iter_mut() {
            *v *= inv;
        }
        self.rows[row][col] = 1.0;

        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                r[col] = 0.0;
            }
        }
        // Objective row: obj value lives at rhs with opposite sign
        // convention, so update value and reduced costs together.
        let factor = self.obj[col];
        if factor != 0.0 {
            for j in 0..self.n_cols {
                self.obj[j] -= factor * pivot_row[j];
            }
            self.obj[col] = 0.0;
            self.obj[self.n_cols] += factor * pivot_row[self.n_cols];
        }
        self.basis[row] = col;
    }

    /// After phase I, pivot artificial variables out of the basis where
    /// possible; rows where every real coefficient vanished are redundant
    /// and keep their zero-valued artificial.
    fn evict_artificials(&mut self) {
        for i in 0..self.rows.len() {
            if self.basis[i] < self.art_start {
                continue;
            }
            if let Some(col) = (0..self.art_start).find(|&j| self.rows[i][j].abs() > PIVOT_EPS) {
                self.pivot(i, col);
            }
        }
    }

    fn primal(&self, n_struct: usize) -> Vec<f64> {
        let mut y = vec![0.0; n_struct];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n_struct {
                y[b] = self.rows[i][self.n_cols];
            }
        }
        y
    }

    /// Dual value per row from the reduced costs of the slack columns.
    ///
    /// For a `<=` row with slack column `e_i` the multiplier is
    /// `z = c_B B^-1 e_i = -obj[col]`; for a negated row the slack column is
    /// `-e_i` but the original constraint is also the negation of the stored
    /// one, so the two sign flips cancel and the same formula applies.
    fn duals(&self) -> Vec<f64> {
        (0..self.n_slack).map(|i| -self.obj[self.n_struct + i]).collect()
    }
}

/// Residuals of the KKT conditions for a claimed-optimal solution.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// Worst violation of `A x <= b` and the variable bounds.
    pub primal_residual: f64,
    /// Worst violation of dual feasibility/stationarity.
    pub dual_residual: f64,
    /// Absolute strong-duality gap `|c.x - dual objective|`.
    pub gap: f64,
    /// Worst complementary-slackness product.
    pub complementarity: f64,
}

impl KktReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.primal_residual <= tol
            && self.dual_residual <= tol
            && self.gap <= tol
            && self.complementarity <= tol
    }
}

/// Independent feasibility-and-duality check of an optimal solution. Works
/// only from the LP data and the returned primal/dual values; shares no
/// state with the solver.
pub fn check_kkt(lp: &LinearProgram, sol: &LpSolution) -> KktReport {
    let n = lp.n_vars;
    let x = &sol.x;
    let scale = 1.0 + sol.objective.abs();

    let mut primal: f64 = 0.0;
    for (r, row) in lp.rows.iter().enumerate() {
        primal = primal.max(lp.row_value(r, x) - row.rhs);
    }
    for j in 0..n {
        primal = primal.max(lp.lower[j] - x[j]);
        if lp.upper[j].is_finite() {
            primal = primal.max(x[j] - lp.upper[j]);
        }
    }

    // Stationarity: c - A^T y - z + mu = 0 with y, z, mu >= 0 where z are
    // upper-bound duals and mu (lower-bound duals) is the slack variable of
    // the equation. Dual feasibility demands mu_j >= 0.
    let mut dual: f64 = 0.0;
    for &y in &sol.dual {
        dual = dual.max(-y);
    }
    for &z in &sol.dual_upper {
        dual = dual.max(-z);
    }
    let mut reduced = lp.objective.clone();
    for (r, row) in lp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            reduced[j] -= sol.dual[r] * a;
        }
    }
    for j in 0..n {
        reduced[j] -= sol.dual_upper[j];
        // mu_j = -reduced[j] must be >= 0.
        dual = dual.max(reduced[j]);
    }

    // Complementary slackness.
    let mut comp: f64 = 0.0;
    for (r, row) in lp.rows.iter().enumerate() {
        comp = comp.max((sol.dual[r] * (row.rhs - lp.row_value(r, x))).abs());
    }
    for j in 0..n {
        if lp.upper[j].is_finite() {
            comp = comp.max((sol.dual_upper[j] * (lp.upper[j] - x[j])).abs());
        }
        comp = comp.max(((-reduced[j]) * (x[j] - lp.lower[j])).abs());
    }

    // Strong duality in the shifted space y = x - l:
    //   c.(x - l) = (b - A l).dual + (u - l).dual_upper.
    let mut dual_obj = 0.0;
    for (r, row) in lp.rows.iter().enumerate() {
        let shift: f64 = row.coeffs.iter().map(|&(j, a)| a * lp.lower[j]).sum();
        dual_obj += sol.dual[r] * (row.rhs - shift);
    }
    for j in 0..n {
        if lp.upper[j].is_finite() {
            dual_obj += sol.dual_upper[j] * (lp.upper[j] - lp.lower[j]);
        }
    }
    let shifted_primal: f64 = (0..n).map(|j| lp.objective[j] * (x[j] - lp.lower[j])).sum();
    let gap = (shifted_primal - dual_obj).abs();

    KktReport {
        primal_residual: primal / scale,
        dual_residual: dual / scale,
        gap: gap / scale,
        complementarity: comp / scale,
    }
}
