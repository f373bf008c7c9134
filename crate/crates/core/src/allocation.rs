//! Budget-constrained allocation models.
//!
//! Three ways to decide who gets which coupon under a total budget:
//!
//! - multiple-choice knapsack over individual customers (`solve_mck_exact`
//!   for small instances by dynamic programming, `solve_mck_greedy` at
//!   scale via the efficiency-frontier greedy),
//! - mean-variance portfolio optimization over customer clusters
//!   (`solve_mvo`, Frank-Wolfe on a concave quadratic),
//! - robust optimization with a budgeted uncertainty set (`solve_ro`, the
//!   dual LP reformulation; `worst_case_penalty` evaluates the worst case
//!   directly for the strong-duality self-check).
//!
//! Fractional cluster-level solutions are turned into customer-level plans
//! by `realize` (floor counts, seeded sampling within clusters).

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{fmt_f64, AllocationPlan, BudgetConfig, CouponCatalog, ExperimentDataset};
use crate::segmentation::ClusterStats;
use crate::solver::{
    frank_wolfe, solve_lp, LinearProgram, LpStatus, LpTolerances, QuadraticObjective,
};
use crate::uplift::CateMatrix;
use crate::{Error, Result};

/// Which model produced a fractional allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    MckRelaxed,
    Mvo,
    Ro,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::MckRelaxed => "mck-relaxed",
            Self::Mvo => "mvo",
            Self::Ro => "ro",
        };
        f.write_str(s)
    }
}

/// Cluster-level coupon counts `w[k][j-1]` produced by a fractional model.
#[derive(Debug, Clone)]
pub struct FractionalAllocation {
    pub w: Vec<Vec<f64>>,
    pub model: ModelTag,
    pub objective: f64,
}

impl FractionalAllocation {
    pub fn n_clusters(&self) -> usize {
        self.w.len()
    }

    pub fn n_coupons(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// Check the feasibility invariants against the producing inputs.
    pub fn check_invariants(
        &self,
        stats: &ClusterStats,
        cat: &CouponCatalog,
        budget: &BudgetConfig,
    ) -> Result<()> {
        let j_count = self.n_coupons();
        let mut total_cost = 0.0;
        for (k, row) in self.w.iter().enumerate() {
            let cluster_total: f64 = row.iter().sum();
            if cluster_total > stats.sizes[k] as f64 + 1e-7 {
                return Err(Error::Validation(format!(
                    "cluster {k} allocation {cluster_total} exceeds its size {}",
                    stats.sizes[k]
                )));
            }
            if row.iter().any(|v| *v < -1e-9) {
                return Err(Error::Validation(format!("cluster {k} has a negative count")));
            }
            for (j, v) in row.iter().enumerate() {
                total_cost += cat.coupons()[j].unit_cost * v;
            }
        }
        if total_cost > budget.total_budget + 1e-6 {
            return Err(Error::Validation(format!(
                "allocation cost {total_cost} exceeds the budget {}",
                budget.total_budget
            )));
        }
        if let Some((lo, hi)) = budget.proportion_bounds {
            let population: f64 = stats.sizes.iter().sum::<usize>() as f64;
            for j in 0..j_count {
                let count: f64 = self.w.iter().map(|row| row[j]).sum();
                if count < lo * population - 1e-6 || count > hi * population + 1e-6 {
                    return Err(Error::Validation(format!(
                        "coupon {} proportion {} violates bounds [{lo}, {hi}]",
                        j + 1,
                        count / population
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write as `k,j,w` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["k", "j", "w"])?;
        for (k, row) in self.w.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writer.write_record(&[k.to_string(), (j + 1).to_string(), fmt_f64(*v)])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Total estimated effect of a customer-level plan.
pub fn plan_effect(plan: &AllocationPlan, pihat: &CateMatrix) -> f64 {
    let mut total = 0.0;
    for (&customer, &coupon) in &plan.assignments {
        if let Some(row) = pihat.row_of(customer) {
            total += pihat.get(row, coupon);
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Multiple-choice knapsack
// ---------------------------------------------------------------------------

/// Guard limits for the exact DP (memory stays under ~100 MB).
pub const MCK_EXACT_MAX_CUSTOMERS: usize = 500;
pub const MCK_EXACT_MAX_BUDGET: f64 = 20_000.0;

/// Exact multiple-choice knapsack by dynamic programming over the budget.
///
/// Requires integer unit costs and a desk-scale instance (see the guard
/// constants); proportion bounds are not supported here. Only options with
/// positive estimated effect are considered: skipping dominates any
/// negative-effect assignment.
pub fn solve_mck_exact(
    pihat: &CateMatrix,
    cat: &CouponCatalog,
    budget: f64,
    bounds: Option<(f64, f64)>,
) -> Result<AllocationPlan> {
    if bounds.is_some() {
        return Err(Error::Validation(
            "exact knapsack supports no proportion bounds; use solve_mck_greedy".into(),
        ));
    }
    if !cat.integer_costs() {
        return Err(Error::Validation("exact knapsack requires integer unit costs".into()));
    }
    if budget < 0.0 {
        return Err(Error::Validation("budget must be nonnegative".into()));
    }
    let n = pihat.n_rows();
    if n > MCK_EXACT_MAX_CUSTOMERS || budget > MCK_EXACT_MAX_BUDGET {
        return Err(Error::Validation(format!(
            "instance too large for the exact DP (n = {n}, budget = {budget}); use solve_mck_greedy"
        )));
    }

    let capacity = budget.floor() as usize;
    let costs: Vec<usize> = cat.coupons().iter().map(|c| c.unit_cost as usize).collect();
    let j_count = cat.n_coupons();

    let mut dp = vec![0.0f64; capacity + 1];
    // choice[i * (capacity + 1) + b]: coupon picked for customer i at butget
    // level b (0 = skip) on the optimal path.
    let mut choice = vec![0u8; n * (capacity + 1)];
    for i in 0..n {
        let row = pihat.row(i);
        for b in (0..=capacity).rev() {
            let mut best = dp[b];
            let mut best_j = 0u8;
            for j in 0..j_count {
                let cost = costs[j];
                let effect = row[j];
                if effect > 0.0 && cost <= b {
                    let candidate = dp[b - cost] + effect;
                    if candidate > best {
                        best = candidate;
                        best_j = (j + 1) as u8;
                    }
                }
            }
            if best_j != 0 {
                dp[b] = best;
                choice[i * (capacity + 1) + b] = best_j;
            }
        }
    }

    let mut assignments = BTreeMap::new();
    let mut b = capacity;
    for i in (0..n).rev() {
        let j = choice[i * (capacity + 1) + b];
        if j != 0 {
            assignments.insert(pihat.customer_ids()[i], j as usize);
            b -= costs[j as usize - 1];
        }
    }
    AllocationPlan::new(assignments, cat)
}

/// One undominated option on a customer's efficiency frontier.
#[derive(Debug, Clone, Copy)]
struct Increment {
    customer_row: usize,
    /// Position in the customer's frontier chain.
    step: usize,
    coupon: usize,
    delta_cost: f64,
    delta_effect: f64,
}

/// Multiple-choice knapsack greedy via the LP-relaxation efficiency
/// frontier.
///
/// Per customer, dominated options (cost >=, effect <=) and options off the
/// concave efficiency frontier are removed; the remaining incremental
/// upgrades are taken in global efficiency order while the budget lasts.
/// The result is also floored at the best-single-item greedy baseline. With
/// proportion bounds a swap post-pass enforces them or reports
/// infeasibility.
pub fn solve_mck_greedy(
    pihat: &CateMatrix,
    cat: &CouponCatalog,
    budget: f64,
    bounds: Option<(f64, f64)>,
) -> Result<AllocationPlan> {
    if budget < 0.0 {
        return Err(Error::Validation("budget must be nonnegative".into()));
    }
    let frontier = build_frontiers(pihat, cat);
    let increments = global_increment_order(&frontier);

    // Walk increments; a customer whose next upgrade does not fit is frozen
    // (later upgrades assume the missing one).
    let n = pihat.n_rows();
    let mut applied_steps = vec![0usize; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut frozen = vec![false; n];
    let mut remaining = budget;
    for inc in &increments {
        let i = inc.customer_row;
        if frozen[i] || inc.step != applied_steps[i] {
            frozen[i] = true;
            continue;
        }
        if inc.delta_cost <= remaining {
            remaining -= inc.delta_cost;
            applied_steps[i] += 1;
            assigned[i] = Some(inc.coupon);
        } else {
            frozen[i] = true;
        }
    }
    let incremental_plan = plan_from_assigned(&assigned, pihat, cat)?;

    // Baseline: each customer's single best option, taken greedily by
    // effect-per-cost.
    let mut singles: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (i, chain) in frontier.iter().enumerate() {
        if let Some(best) = chain
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)))
        {
            singles.push((i, best.2, best.0, best.1));
        }
    }
    singles.sort_by(|a, b| {
        let ea = a.3 / a.2;
        let eb = b.3 / b.2;
        eb.total_cmp(&ea).then(a.0.cmp(&b.0))
    });
    let mut baseline_assigned: Vec<Option<usize>> = vec![None; n];
    let mut baseline_remaining = budget;
    for &(i, coupon, cost, _) in &singles {
        if cost <= baseline_remaining {
            baseline_remaining -= cost;
            baseline_assigned[i] = Some(coupon);
        }
    }
    let baseline_plan = plan_from_assigned(&baseline_assigned, pihat, cat)?;

    let mut plan = if plan_effect(&baseline_plan, pihat) > plan_effect(&incremental_plan, pihat) {
        baseline_plan
    } else {
        incremental_plan
    };

    if let Some((lo, hi)) = bounds {
        plan = enforce_proportion_bounds(plan, pihat, cat, budget, lo, hi)?;
    }
    Ok(plan)
}

/// Per-customer concave efficiency frontier as `(cost, effect, coupon)`
/// chains with strictly increasing cost/effect and strictly decreasing
/// incremental efficiency.
fn build_frontiers(pihat: &CateMatrix, cat: &CouponCatalog) -> Vec<Vec<(f64, f64, usize)>> {
    let j_count = cat.n_coupons();
    let mut frontiers = Vec::with_capacity(pihat.n_rows());
    for i in 0..pihat.n_rows() {
        let row = pihat.row(i);
        let mut options: Vec<(f64, f64, usize)> = (0..j_count)
            .filter(|j| row[*j] > 0.0)
            .map(|j| (cat.coupons()[j].unit_cost, row[j], j + 1))
            .collect();
        options.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));

        // Plain dominance: drop options no better than a cheaper one.
        let mut undominated: Vec<(f64, f64, usize)> = Vec::new();
        for opt in options {
            if undominated.last().map_or(true, |last| opt.1 > last.1) {
                undominated.push(opt);
            }
        }

        // LP dominance: keep the concave hull starting from (0, 0), so
        // incremental efficiencies strictly decrease along the chain.
        let mut hull: Vec<(f64, f64, usize)> = Vec::new();
        for opt in undominated {
            loop {
                let (prev_cost, prev_effect) = match hull.len() {
                    0 => (0.0, 0.0),
                    len => (hull[len - 1].0, hull[len - 1].1),
                };
                let slope_new = (opt.1 - prev_effect) / (opt.0 - prev_cost);
                if let Some(last) = hull.last() {
                    let (before_cost, before_effect) = match hull.len() {
                        1 => (0.0, 0.0),
                        len => (hull[len - 2].0, hull[len - 2].1),
                    };
                    let slope_last = (last.1 - before_effect) / (last.0 - before_cost);
                    if slope_new >= slope_last {
                        hull.pop();
                        continue;
                    }
                }
                break;
            }
            hull.push(opt);
        }
        frontiers.push(hull);
    }
    frontiers
}

/// All frontier increments sorted by efficiency (descending), tie-broken by
/// customer row then step so within-customer order is preserved.
fn global_increment_order(frontier: &[Vec<(f64, f64, usize)>]) -> Vec<Increment> {
    let mut increments = Vec::new();
    for (i, chain) in frontier.iter().enumerate() {
        let mut prev = (0.0, 0.0);
        for (step, &(cost, effect, coupon)) in chain.iter().enumerate() {
            increments.push(Increment {
                customer_row: i,
                step,
                coupon,
                delta_cost: cost - prev.0,
                delta_effect: effect - prev.1,
            });
            prev = (cost, effect);
        }
    }
    increments.sort_by(|a, b| {
        let ea = a.delta_effect / a.delta_cost;
        let eb = b.delta_effect / b.delta_cost;
        eb.total_cmp(&ea)
            .then(a.customer_row.cmp(&b.customer_row))
            .then(a.step.cmp(&b.step))
    });
    increments
}

fn plan_from_assigned(
    assigned: &[Option<usize>],
    pihat: &CateMatrix,
    cat: &CouponCatalog,
) -> Result<AllocationPlan> {
    let mut assignments = BTreeMap::new();
    for (i, coupon) in assigned.iter().enumerate() {
        if let Some(j) = coupon {
            assignments.insert(pihat.customer_ids()[i], *j);
        }
    }
    AllocationPlan::new(assignments, cat)
}

/// Swap pass bringing per-coupon counts into `[lo, hi]` proportions of the
/// full population while staying within the budget.
fn enforce_proportion_bounds(
    plan: AllocationPlan,
    pihat: &CateMatrix,
    cat: &CouponCatalog,
    budget: f64,
    lo: f64,
    hi: f64,
) -> Result<AllocationPlan> {
    let n = pihat.n_rows();
    let j_count = cat.n_coupons();
    let lo_count = (lo * n as f64 - 1e-9).ceil().max(0.0) as usize;
    let hi_count = (hi * n as f64 + 1e-9).floor() as usize;
    if lo_count > hi_count {
        return Err(Error::Infeasible(format!(
            "proportion bounds [{lo}, {hi}] admit no integer count for {n} customers"
        )));
    }
    if lo_count * j_count > n {
        return Err(Error::Infeasible(format!(
            "lower bound {lo} over {j_count} coupons needs more than {n} customers"
        )));
    }
    let min_fill_cost: f64 =
        cat.coupons().iter().map(|c| c.unit_cost * lo_count as f64).sum();
    if min_fill_cost > budget + 1e-9 {
        return Err(Error::Infeasible(format!(
            "budget {budget} cannot cover the lower-bound counts (need {min_fill_cost})"
        )));
    }

    let mut assigned: Vec<Option<usize>> = vec![None; n];
    for (customer, coupon) in &plan.assignments {
        if let Some(row) = pihat.row_of(*customer) {
            assigned[row] = Some(*coupon);
        }
    }
    let mut counts = vec![0usize; j_count];
    let mut cost = 0.0;
    for coupon in assigned.iter().flatten() {
        counts[coupon - 1] += 1;
        cost += cat.coupons()[coupon - 1].unit_cost;
    }

    // Uppers first: unassign the weakest holders of any over-limit coupon.
    for j in 1..=j_count {
        if counts[j - 1] <= hi_count {
            continue;
        }
        let mut holders: Vec<(f64, usize)> = assigned
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(j))
            .map(|(i, _)| (pihat.get(i, j), i))
            .collect();
        holders.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, i) in holders.iter().take(counts[j - 1] - hi_count) {
            assigned[i] = None;
            cost -= cat.coupons()[j - 1].unit_cost;
        }
        counts[j - 1] = hi_count;
    }

    // Lowers: promote the best candidates into each under-limit coupon.
    for j in 1..=j_count {
        while counts[j - 1] < lo_count {
            let c_j = cat.coupons()[j - 1].unit_cost;
            // Candidate customers: unassigned, or holding a coupon above its
            // own lower bound.
            let mut best: Option<(f64, f64, usize)> = None; // (gain, delta_cost, row)
            for (i, current) in assigned.iter().enumerate() {
                let (gain, delta_cost) = match current {
                    None => (pihat.get(i, j), c_j),
                    Some(held) if *held != j && counts[held - 1] > lo_count => (
                        pihat.get(i, j) - pihat.get(i, *held),
                        c_j - cat.coupons()[held - 1].unit_cost,
                    ),
                    _ => continue,
                };
                if cost + delta_cost > budget + 1e-9 {
                    continue;
                }
                if best.map_or(true, |(bg, _, _)| gain > bg) {
                    best = Some((gain, delta_cost, i));
                }
            }
            let Some((_, delta_cost, i)) = best else {
                // No candidate fits the budget: free funds by unassigning the
                // weakest above-lower-bound holder, then retry.
                let mut victim: Option<(f64, usize)> = None;
                for (i, current) in assigned.iter().enumerate() {
                    if let Some(held) = current {
                        if *held != j && counts[held - 1] > lo_count {
                            let value = pihat.get(i, *held);
                            if victim.map_or(true, |(v, _)| value < v) {
                                victim = Some((value, i));
                            }
                        }
                    }
                }
                let Some((_, i)) = victim else {
                    return Err(Error::Infeasible(format!(
                        "cannot reach the lower bound for coupon {j} within budget {budget}"
                    )));
                };
                let held = assigned[i].expect("victim holds a coupon");
                counts[held - 1] -= 1;
                cost -= cat.coupons()[held - 1].unit_cost;
                assigned[i] = None;
                continue;
            };
            if let Some(held) = assigned[i] {
                counts[held - 1] -= 1;
            }
            assigned[i] = Some(j);
            counts[j - 1] += 1;
            cost += delta_cost;
        }
    }

    let plan = plan_from_assigned(&assigned, pihat, cat)?;
    debug_assert!(plan.consumed_cost <= budget + 1e-6);
    Ok(plan)
}

// ---------------------------------------------------------------------------
// Mean-variance optimization
// ---------------------------------------------------------------------------

/// Polytope shared by the portfolio models: budget row, cluster capacities,
/// optional per-coupon proportion bounds over `extra_vars + K*J` variables
/// (`w` occupies the leading block).
fn portfolio_polytope(
    stats: &ClusterStats,
    cat: &CouponCatalog,
    budget: &BudgetConfig,
    extra_vars: usize,
) -> LinearProgram {
    let k_count = stats.n_clusters();
    let j_count = stats.n_coupons();
    let w_vars = k_count * j_count;
    let mut lp = LinearProgram::new(w_vars + extra_vars);

    let budget_row: Vec<(usize, f64)> = (0..w_vars)
        .map(|idx| (idx, cat.coupons()[idx % j_count].unit_cost))
        .collect();
    lp.add_row(budget_row, budget.total_budget);

    for k in 0..k_count {
        let row: Vec<(usize, f64)> =
            (0..j_count).map(|j| (k * j_count + j, 1.0)).collect();
        lp.add_row(row, stats.sizes[k] as f64);
    }

    if let Some((lo, hi)) = budget.proportion_bounds {
        let population: f64 = stats.sizes.iter().sum::<usize>() as f64;
        for j in 0..j_count {
            let coupon_vars: Vec<(usize, f64)> =
                (0..k_count).map(|k| (k * j_count + j, 1.0)).collect();
            lp.add_row(coupon_vars.clone(), hi * population);
            let negated: Vec<(usize, f64)> =
                coupon_vars.into_iter().map(|(idx, v)| (idx, -v)).collect();
            lp.add_row(negated, -(lo * population));
        }
    }
    lp
}

/// Mean-variance allocation: maximize
/// `(1 - lambda) pibar.w - lambda w' sigma w` over the cluster polytope via
/// Frank-Wolfe. The covariance is projected to the PSD cone by eigenvalue
/// clipping when necessary.
pub fn solve_mvo(
    stats: &ClusterStats,
    cat: &CouponCatalog,
    budget: &BudgetConfig,
    lambda: f64,
) -> Result<FractionalAllocation> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Validation(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let k_count = stats.n_clusters();
    let j_count = stats.n_coupons();

    let linear: Vec<f64> = stats
        .means
        .iter()
        .flat_map(|row| row.iter().map(|m| (1.0 - lambda) * m))
        .collect();
    let quadratic = if lambda == 0.0 {
        None
    } else {
        Some(psd_projection(&stats.covariance) * lambda)
    };

    let polytope = portfolio_polytope(stats, cat, budget, 0);
    let objective = QuadraticObjective { constant: 0.0, linear, quadratic };
    let fw = frank_wolfe(&objective, &polytope, 20_000, 1e-5)?;
    if fw.gap > 1e-5 * (1.0 + fw.objective.abs()) {
        return Err(Error::Solver(format!(
            "frank-wolfe stopped at gap {} after {} iterations",
            fw.gap, fw.iterations
        )));
    }

    let w: Vec<Vec<f64>> =
        (0..k_count).map(|k| fw.x[k * j_count..(k + 1) * j_count].to_vec()).collect();
    let allocation = FractionalAllocation { w, model: ModelTag::Mvo, objective: fw.objective };
    allocation.check_invariants(stats, cat, budget)?;
    Ok(allocation)
}

/// Clip negative eigenvalues of a symmetric matrix at zero.
fn psd_projection(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let n = sigma.nrows();
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eigen = sym.clone().symmetric_eigen();
    if eigen.eigenvalues.iter().all(|l| *l >= 0.0) {
        return sym;
    }
    let mut scaled = eigen.eigenvectors.clone();
    for (c, l) in eigen.eigenvalues.iter().enumerate() {
        let clipped = l.max(0.0);
        for r in 0..n {
            scaled[(r, c)] *= clipped;
        }
    }
    &scaled * eigen.eigenvectors.transpose()
}

// ---------------------------------------------------------------------------
// Robust optimization
// ---------------------------------------------------------------------------

/// Worst-case total shortfall for an allocation under the budgeted
/// uncertainty set: the largest sum of `alpha * delta_kj * w_kj` over at
/// most `gamma` cluster-coupon pairs (fractional `gamma` takes the next
/// term partially). Equals the optimum of the inner minimization LP in
/// magnitude.
pub fn worst_case_penalty(
    w: &FractionalAllocation,
    stats: &ClusterStats,
    alpha: f64,
    gamma: f64,
) -> f64 {
    let mut terms: Vec<f64> = Vec::with_capacity(w.n_clusters() * w.n_coupons());
    for (k, row) in w.w.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            terms.push(alpha * stats.stderrs[k][j] * v.max(0.0));
        }
    }
    terms.sort_by(|a, b| b.total_cmp(a));
    let whole = gamma.floor().min(terms.len() as f64) as usize;
    let mut penalty: f64 = terms.iter().take(whole).sum();
    if whole < terms.len() {
        penalty += (gamma - whole as f64).clamp(0.0, 1.0) * terms[whole];
    }
    penalty
}

/// Robust allocation: maximize the worst-case total effect over the
/// budgeted uncertainty set via the dual LP
/// `max pibar.w - gamma h - sum q  s.t.  h + q_kj >= alpha delta_kj w_kj`
/// plus the budget/capacity/bound rows.
///
/// The returned objective is self-checked against
/// [`worst_case_penalty`] (strong duality) before returning.
pub fn solve_ro(
    stats: &ClusterStats,
    cat: &CouponCatalog,
    budget: &BudgetConfig,
    alpha: f64,
    gamma: f64,
) -> Result<FractionalAllocation> {
    if alpha < 0.0 || gamma < 0.0 {
        return Err(Error::Validation("alpha and gamma must be nonnegative".into()));
    }
    let k_count = stats.n_clusters();
    let j_count = stats.n_coupons();
    let w_vars = k_count * j_count;
    // Variable layout: w (w_vars) | h (1) | q (w_vars).
    let h_var = w_vars;
    let q_start = w_vars + 1;

    let mut lp = portfolio_polytope(stats, cat, budget, 1 + w_vars);
    for k in 0..k_count {
        for j in 0..j_count {
            let idx = k * j_count + j;
            lp.add_row(
                vec![
                    (idx, alpha * stats.stderrs[k][j]),
                    (h_var, -1.0),
                    (q_start + idx, -1.0),
                ],
                0.0,
            );
        }
    }
    let mut objective = vec![0.0; lp.n_vars];
    for k in 0..k_count {
        for j in 0..j_count {
            objective[k * j_count + j] = stats.means[k][j];
        }
    }
    objective[h_var] = -gamma;
    for q in 0..w_vars {
        objective[q_start + q] = -1.0;
    }
    lp.objective = objective;

    let sol = solve_lp(&lp, LpTolerances::default())?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(
                "robust model is infeasible (budget vs proportion bounds)".into(),
            ))
        }
        LpStatus::Unbounded => {
            return Err(Error::Solver("robust model LP is unbounded".into()))
        }
    }

    let w: Vec<Vec<f64>> = (0..k_count)
        .map(|k| sol.x[k * j_count..(k + 1) * j_count].to_vec())
        .collect();
    let allocation = FractionalAllocation { w, model: ModelTag::Ro, objective: sol.objective };
    allocation.check_invariants(stats, cat, budget)?;

    // Strong-duality self-check: the LP objective must equal the nominal
    // effect minus the combinatorial worst-case penalty.
    let nominal: f64 = allocation
        .w
        .iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter().enumerate().map(|(j, v)| stats.means[k][j] * v).sum::<f64>()
        })
        .sum();
    let penalty = worst_case_penalty(&allocation, stats, alpha, gamma);
    let direct = nominal - penalty;
    if (allocation.objective - direct).abs() > 1e-6 * (1.0 + allocation.objective.abs()) {
        return Err(Error::Solver(format!(
            "robust strong-duality check failed: lp {} vs direct {}",
            allocation.objective, direct
        )));
    }
    Ok(allocation)
}

// ---------------------------------------------------------------------------
// Realization and the random baseline
// ---------------------------------------------------------------------------

/// Turn a fractional cluster allocation into a customer-level plan:
/// allocate `floor(w_kj)` coupons of type `j` to customers drawn uniformly
/// without replacement from cluster `k`'s not-yet-assigned members, in
/// ascending `(k, j)` order. Deterministic under the seed.
pub fn realize(
    w: &FractionalAllocation,
    stats: &ClusterStats,
    cat: &CouponCatalog,
    seed: u64,
) -> Result<AllocationPlan> {
    let j_count = w.n_coupons();
    if w.n_clusters() != stats.n_clusters() || j_count != stats.n_coupons() {
        return Err(Error::Validation("allocation and stats shapes differ".into()));
    }
    // Per-cluster pools of member row indices, in matrix row order.
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); stats.n_clusters()];
    for (row, &label) in stats.labels.iter().enumerate() {
        pools[label].push(row);
    }

    for (k, row) in w.w.iter().enumerate() {
        let total: usize = row.iter().map(|v| (v + 1e-9).floor().max(0.0) as usize).sum();
        if total > stats.sizes[k] {
            return Err(Error::Validation(format!(
                "cluster {k} floor counts {total} exceed its {} members",
                stats.sizes[k]
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    for k in 0..w.n_clusters() {
        let pool = &mut pools[k];
        let mut remaining = pool.len();
        for j in 0..j_count {
            let count = (w.w[k][j] + 1e-9).floor().max(0.0) as usize;
            for _ in 0..count {
                let pick = rng.random_range(0..remaining);
                let row = pool[pick];
                pool.swap(pick, remaining - 1);
                remaining -= 1;
                assignments.insert(stats.customer_ids[row], j + 1);
            }
        }
    }
    AllocationPlan::new(assignments, cat)
}

/// Random baseline: visit customers in seeded random order; each draws a
/// uniformly random coupon and receives it if its cost still fits, else is
/// skipped. Stops once no coupon fits the remaining budget.
pub fn random_allocate(
    ds: &ExperimentDataset,
    cat: &CouponCatalog,
    budget: f64,
    seed: u64,
) -> Result<AllocationPlan> {
    let j_count = cat.n_coupons();
    let min_cost = cat.min_cost();
    let mut order: Vec<usize> = (0..ds.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let mut remaining = budget;
    let mut assignments = BTreeMap::new();
    for i in order {
        if remaining < min_cost {
            break;
        }
        let j = rng.random_range(1..=j_count);
        let cost = cat.coupons()[j - 1].unit_cost;
        if cost <= remaining {
            remaining -= cost;
            assignments.insert(ds.rows[i].customer_id, j);
        }
    }
    AllocationPlan::new(assignments, cat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_from(rows: &[Vec<f64>]) -> CateMatrix {
        let j = rows[0].len();
        let ids: Vec<u64> = (0..rows.len() as u64).collect();
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        CateMatrix::new(ids, values, j).unwrap()
    }

    /// Stats scaffold for the portfolio models; labels assign the first
    /// `sizes[0]` ids to cluster 0 and so on.
    fn stats_from(sizes: &[usize], means: &[Vec<f64>], stderrs: &[Vec<f64>]) -> ClusterStats {
        let j = means[0].len();
        let total: usize = sizes.iter().sum();
        let mut labels = Vec::with_capacity(total);
        for (k, &size) in sizes.iter().enumerate() {
            labels.extend(std::iter::repeat(k).take(size));
        }
        ClusterStats {
            sizes: sizes.to_vec(),
            means: means.to_vec(),
            stderrs: stderrs.to_vec(),
            covariance: DMatrix::zeros(sizes.len() * j, sizes.len() * j),
            customer_ids: (0..total as u64).collect(),
            labels,
        }
    }

    fn two_coupon_catalog() -> CouponCatalog {
        CouponCatalog::new(vec![("cheap".into(), 5.0), ("dear".into(), 10.0)]).unwrap()
    }

    /// Brute force over every per-customer choice (including skip).
    fn mck_brute_force(pihat: &CateMatrix, cat: &CouponCatalog, budget: f64) -> f64 {
        let n = pihat.n_rows();
        let j_count = cat.n_coupons();
        let mut best = 0.0f64;
        let combos = (j_count + 1).pow(n as u32);
        for combo in 0..combos {
            let mut c = combo;
            let mut cost = 0.0;
            let mut effect = 0.0;
            for i in 0..n {
                let pick = c % (j_count + 1);
                c /= j_count + 1;
                if pick > 0 {
                    cost += cat.coupons()[pick - 1].unit_cost;
                    effect += pihat.get(i, pick);
                }
            }
            if cost <= budget && effect > best {
                best = effect;
            }
        }
        best
    }

    #[test]
    fn exact_dp_matches_the_worked_example() {
        // Two customers, costs (5, 10), effects [[3, 4], [1, 9]], budget 15:
        // best is cust0 -> cheap (3) + cust1 -> dear (9) = 12.
        let pihat = matrix_from(&[vec![3.0, 4.0], vec![1.0, 9.0]]);
        let cat = two_coupon_catalog();
        let plan = solve_mck_exact(&pihat, &cat, 15.0, None).unwrap();
        assert_eq!(plan.assignments.get(&0), Some(&1));
        assert_eq!(plan.assignments.get(&1), Some(&2));
        assert_eq!(plan.consumed_cost, 15.0);
        assert!((plan_effect(&plan, &pihat) - 12.0).abs() < 1e-12);
        assert!((mck_brute_force(&pihat, &cat, 15.0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn exact_dp_zero_budget_and_nonpositive_effects() {
        let cat = two_coupon_catalog();
        let pihat = matrix_from(&[vec![3.0, 4.0], vec![1.0, 9.0]]);
        let plan = solve_mck_exact(&pihat, &cat, 0.0, None).unwrap();
        assert!(plan.is_empty());

        let nonpositive = matrix_from(&[vec![-1.0, 0.0], vec![-2.0, -0.5]]);
        let plan = solve_mck_exact(&nonpositive, &cat, 100.0, None).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn exact_dp_guard_rejects_large_instances() {
        let cat = two_coupon_catalog();
        let rows: Vec<Vec<f64>> = (0..501).map(|_| vec![1.0, 2.0]).collect();
        let pihat = matrix_from(&rows);
        assert!(solve_mck_exact(&pihat, &cat, 100.0, None).is_err());

        let small = matrix_from(&[vec![1.0, 2.0]]);
        assert!(solve_mck_exact(&small, &cat, 30_000.0, None).is_err());
        assert!(solve_mck_exact(&small, &cat, 10.0, Some((0.0, 1.0))).is_err());
    }

    #[test]
    fn exact_dp_matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cat = two_coupon_catalog();
        for _ in 0..30 {
            let n = rng.random_range(1..=6);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.random_range(-2.0..6.0)).collect())
                .collect();
            let pihat = matrix_from(&rows);
            let budget = rng.random_range(0..30) as f64;
            let plan = solve_mck_exact(&pihat, &cat, budget, None).unwrap();
            let best = mck_brute_force(&pihat, &cat, budget);
            assert!(
                (plan_effect(&plan, &pihat) - best).abs() < 1e-9,
                "dp {} vs brute {best}",
                plan_effect(&plan, &pihat)
            );
        }
    }

    #[test]
    fn greedy_matches_exact_on_the_worked_example() {
        let pihat = matrix_from(&[vec![3.0, 4.0], vec![1.0, 9.0]]);
        let cat = two_coupon_catalog();
        let plan = solve_mck_greedy(&pihat, &cat, 15.0, None).unwrap();
        assert!((plan_effect(&plan, &pihat) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn greedy_with_ample_budget_gives_everyone_their_best_coupon() {
        let pihat = matrix_from(&[
            vec![3.0, 4.0],
            vec![1.0, 9.0],
            vec![-1.0, 2.0],
            vec![-1.0, -2.0],
        ]);
        let cat = two_coupon_catalog();
        let plan = solve_mck_greedy(&pihat, &cat, 1_000.0, None).unwrap();
        assert_eq!(plan.assignments.get(&0), Some(&2));
        assert_eq!(plan.assignments.get(&1), Some(&2));
        assert_eq!(plan.assignments.get(&2), Some(&2));
        assert_eq!(plan.assignments.get(&3), None);
    }

    #[test]
    fn greedy_objective_within_one_item_of_exact() {
        let costs = [5.0, 5.0, 10.0, 10.0, 15.0, 13.0];
        let cat = CouponCatalog::new(
            costs.iter().enumerate().map(|(i, c)| (format!("c{i}"), *c)).collect(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let n = rng.random_range(2..=40);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..6).map(|_| rng.random_range(-1.0..5.0)).collect())
                .collect();
            let pihat = matrix_from(&rows);
            let budget = rng.random_range(10..=400) as f64;
            let exact = solve_mck_exact(&pihat, &cat, budget, None).unwrap();
            let greedy = solve_mck_greedy(&pihat, &cat, budget, None).unwrap();
            let max_effect = pihat.values().iter().copied().fold(0.0f64, f64::max);
            assert!(
                plan_effect(&greedy, &pihat)
                    >= plan_effect(&exact, &pihat) - max_effect - 1e-9,
                "greedy {} vs exact {} (max item {max_effect})",
                plan_effect(&greedy, &pihat),
                plan_effect(&exact, &pihat)
            );
            assert!(greedy.consumed_cost <= budget + 1e-9);
        }
    }

    #[test]
    fn greedy_bounds_post_pass_enforces_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(2.0..4.0)])
            .collect();
        let pihat = matrix_from(&rows);
        let cat = two_coupon_catalog();
        // Without bounds everything goes to the second coupon.
        let unbounded = solve_mck_greedy(&pihat, &cat, 600.0, None).unwrap();
        let counts = unbounded.coupon_counts(2);
        assert_eq!(counts[0], 0);

        let plan = solve_mck_greedy(&pihat, &cat, 600.0, Some((0.10, 0.60))).unwrap();
        let counts = plan.coupon_counts(2);
        for &count in &counts {
            assert!(count >= 6, "count {count} below the lower bound");
            assert!(count <= 36, "count {count} above the upper bound");
        }
        assert!(plan.consumed_cost <= 600.0 + 1e-9);
    }

    #[test]
    fn greedy_bounds_infeasible_budget_reported() {
        let pihat = matrix_from(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let cat = two_coupon_catalog();
        // Lower bound of one coupon each needs at least 15 of budget.
        match solve_mck_greedy(&pihat, &cat, 10.0, Some((0.5, 1.0))) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn penalty_matches_enumeration_examples() {
        // Terms {4, 3, 1}: gamma 2 -> 7, gamma 1.5 -> 5.5, gamma 0 -> 0.
        let stats = stats_from(
            &[3],
            &[vec![0.0, 0.0, 0.0]],
            &[vec![4.0, 3.0, 1.0]],
        );
        let w = FractionalAllocation {
            w: vec![vec![1.0, 1.0, 1.0]],
            model: ModelTag::Ro,
            objective: 0.0,
        };
        assert_eq!(worst_case_penalty(&w, &stats, 1.0, 0.0), 0.0);
        assert_eq!(worst_case_penalty(&w, &stats, 1.0, 2.0), 7.0);
        assert_eq!(worst_case_penalty(&w, &stats, 1.0, 1.5), 5.5);
        assert_eq!(worst_case_penalty(&w, &stats, 1.0, 99.0), 8.0);
    }

    #[test]
    fn ro_toy_instance_matches_grid_search() {
        // K = 2, J = 1, pibar = (2, 1), delta = (1, 0.1), alpha = 1,
        // gamma = 1, cost 1, budget 10, sizes (10, 10): optimum 10.
        let stats = stats_from(&[10, 10], &[vec![2.0], vec![1.0]], &[vec![1.0], vec![0.1]]);
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let budget = BudgetConfig::new(10.0, None).unwrap();
        let sol = solve_ro(&stats, &cat, &budget, 1.0, 1.0).unwrap();
        assert!((sol.objective - 10.0).abs() < 1e-6, "objective {}", sol.objective);

        // Dense 2-d grid over (w0, w1) with the worst case evaluated
        // directly.
        let mut best = f64::NEG_INFINITY;
        for a in 0..=100 {
            for b in 0..=(100 - a) {
                let w0 = a as f64 / 10.0;
                let w1 = b as f64 / 10.0;
                let nominal = 2.0 * w0 + 1.0 * w1;
                let mut terms = [1.0 * w0, 0.1 * w1];
                terms.sort_by(|x, y| y.total_cmp(x));
                let value = nominal - terms[0];
                best = best.max(value);
            }
        }
        assert!((sol.objective - best).abs() < 1e-6, "lp {} vs grid {best}", sol.objective);
    }

    #[test]
    fn ro_with_zero_alpha_equals_the_nominal_lp() {
        let stats = stats_from(
            &[5, 8],
            &[vec![1.5, 0.4], vec![0.9, 2.0]],
            &[vec![0.5, 0.1], vec![0.2, 0.8]],
        );
        let cat = two_coupon_catalog();
        let budget = BudgetConfig::new(60.0, None).unwrap();
        let robust = solve_ro(&stats, &cat, &budget, 0.0, 3.0).unwrap();

        let mut lp = portfolio_polytope(&stats, &cat, &budget, 0);
        lp.objective = stats.means.iter().flatten().copied().collect();
        let nominal = solve_lp(&lp, LpTolerances::default()).unwrap();
        assert!((robust.objective - nominal.objective).abs() < 1e-8);
    }

    #[test]
    fn ro_with_full_cardinality_equals_the_shifted_lp() {
        // gamma = |K x J| pushes every pair to its worst value: the model
        // collapses to the LP with coefficients pibar - alpha delta.
        let stats = stats_from(
            &[4, 6],
            &[vec![2.0, 1.0], vec![0.5, 1.8]],
            &[vec![0.6, 0.3], vec![0.2, 0.9]],
        );
        let cat = two_coupon_catalog();
        let budget = BudgetConfig::new(55.0, None).unwrap();
        let alpha = 0.8;
        let robust = solve_ro(&stats, &cat, &budget, alpha, 4.0).unwrap();

        let mut lp = portfolio_polytope(&stats, &cat, &budget, 0);
        lp.objective = stats
            .means
            .iter()
            .zip(&stats.stderrs)
            .flat_map(|(m, d)| m.iter().zip(d).map(|(mean, delta)| mean - alpha * delta))
            .collect();
        let shifted = solve_lp(&lp, LpTolerances::default()).unwrap();
        assert!(
            (robust.objective - shifted.objective).abs() < 1e-6,
            "ro {} vs shifted {}",
            robust.objective,
            shifted.objective
        );
    }

    #[test]
    fn mvo_lambda_zero_equals_ro_alpha_zero() {
        let stats = stats_from(
            &[7, 3],
            &[vec![1.2, 0.3], vec![2.5, 0.1]],
            &[vec![0.4, 0.2], vec![1.0, 0.05]],
        );
        let cat = two_coupon_catalog();
        let budget = BudgetConfig::new(45.0, None).unwrap();
        let mvo = solve_mvo(&stats, &cat, &budget, 0.0).unwrap();
        let ro = solve_ro(&stats, &cat, &budget, 0.0, 2.0).unwrap();
        assert!((mvo.objective - ro.objective).abs() < 1e-6);
    }

    #[test]
    fn mvo_with_full_risk_and_zero_covariance_reports_zero() {
        let stats = stats_from(&[5], &[vec![1.0, 2.0]], &[vec![0.1, 0.2]]);
        let cat = two_coupon_catalog();
        let budget = BudgetConfig::new(30.0, None).unwrap();
        let sol = solve_mvo(&stats, &cat, &budget, 1.0).unwrap();
        assert!(sol.objective.abs() < 1e-9);
    }

    #[test]
    fn mvo_two_cluster_toy_matches_grid_search() {
        // One coupon, two clusters with a known 2x2 covariance.
        let mut stats = stats_from(&[6, 6], &[vec![1.0], vec![0.8]], &[vec![0.3], vec![0.1]]);
        stats.covariance = DMatrix::from_row_slice(2, 2, &[0.09, 0.02, 0.02, 0.01]);
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let budget = BudgetConfig::new(8.0, None).unwrap();
        let lambda = 0.4;
        let sol = solve_mvo(&stats, &cat, &budget, lambda).unwrap();

        let mut best = f64::NEG_INFINITY;
        let steps = 240;
        for a in 0..=steps {
            for b in 0..=steps {
                let w0 = 6.0 * a as f64 / steps as f64;
                let w1 = 6.0 * b as f64 / steps as f64;
                if w0 + w1 > 8.0 {
                    continue;
                }
                let mean = 1.0 * w0 + 0.8 * w1;
                let var = 0.09 * w0 * w0 + 2.0 * 0.02 * w0 * w1 + 0.01 * w1 * w1;
                best = best.max((1.0 - lambda) * mean - lambda * var);
            }
        }
        assert!((sol.objective - best).abs() < 1e-3, "fw {} vs grid {best}", sol.objective);
    }

    #[test]
    fn bounds_rows_are_respected_by_both_models() {
        let stats = stats_from(
            &[50, 50],
            &[vec![2.0, 0.2], vec![1.5, 0.1]],
            &[vec![0.3, 0.1], vec![0.2, 0.1]],
        );
        let cat = two_coupon_catalog();
        let budget = BudgetConfig::new(700.0, Some((0.10, 0.55))).unwrap();
        for allocation in [
            solve_ro(&stats, &cat, &budget, 0.5, 2.0).unwrap(),
            solve_mvo(&stats, &cat, &budget, 0.0).unwrap(),
        ] {
            for j in 0..2 {
                let count: f64 = allocation.w.iter().map(|row| row[j]).sum();
                assert!(count >= 0.10 * 100.0 - 1e-6, "coupon {j} count {count}");
                assert!(count <= 0.55 * 100.0 + 1e-6, "coupon {j} count {count}");
            }
        }
    }

    #[test]
    fn infeasible_bounds_are_reported() {
        let stats = stats_from(&[10], &[vec![1.0, 1.0]], &[vec![0.1, 0.1]]);
        let cat = two_coupon_catalog();
        // Budget 20 cannot lower-bound both coupons at 50% of 10 customers.
        let budget = BudgetConfig::new(20.0, Some((0.5, 1.0))).unwrap();
        assert!(matches!(
            solve_ro(&stats, &cat, &budget, 0.2, 1.0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn realize_full_cluster_assigns_everyone() {
        let stats = stats_from(&[8], &[vec![1.0]], &[vec![0.1]]);
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let w = FractionalAllocation {
            w: vec![vec![8.0]],
            model: ModelTag::Ro,
            objective: 8.0,
        };
        let plan = realize(&w, &stats, &cat, 3).unwrap();
        assert_eq!(plan.len(), 8);
        assert!(plan.assignments.values().all(|j| *j == 1));
    }

    #[test]
    fn realize_floors_vanishing_fractions() {
        let stats = stats_from(&[5, 5], &[vec![1.0], vec![1.0]], &[vec![0.1], vec![0.1]]);
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let w = FractionalAllocation {
            w: vec![vec![0.9], vec![0.99]],
            model: ModelTag::Mvo,
            objective: 0.0,
        };
        let plan = realize(&w, &stats, &cat, 3).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn realize_draws_disjoint_customers_at_scale() {
        // Pattern from the segmentation results: two coupons, 33,544 each,
        // drawn from a 67,090-customer cluster; counts exact and disjoint.
        let stats = stats_from(&[67_090], &[vec![1.0, 1.0]], &[vec![0.1, 0.1]]);
        let cat = two_coupon_catalog();
        let w = FractionalAllocation {
            w: vec![vec![33_544.0, 33_544.0]],
            model: ModelTag::Ro,
            objective: 0.0,
        };
        let plan = realize(&w, &stats, &cat, 11).unwrap();
        let counts = plan.coupon_counts(2);
        assert_eq!(counts, vec![33_544, 33_544]);
        assert_eq!(plan.len(), 67_088);
    }

    #[test]
    fn realize_is_deterministic_and_respects_seeds() {
        let stats = stats_from(&[20, 10], &[vec![1.0], vec![1.0]], &[vec![0.1], vec![0.1]]);
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let w = FractionalAllocation {
            w: vec![vec![7.0], vec![4.0]],
            model: ModelTag::Mvo,
            objective: 0.0,
        };
        let a = realize(&w, &stats, &cat, 5).unwrap();
        let b = realize(&w, &stats, &cat, 5).unwrap();
        let c = realize(&w, &stats, &cat, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 11);
    }

    #[test]
    fn random_allocation_respects_budget_edge_cases() {
        let cat = two_coupon_catalog();
        let ds = ExperimentDataset {
            rows: (0..30u64)
                .map(|i| crate::domain::CustomerRow {
                    customer_id: i,
                    features: vec![0.0],
                    arm: 0,
                    outcome: 0.0,
                })
                .collect(),
            arm_probability: 1.0 / 3.0,
        };
        assert!(random_allocate(&ds, &cat, 0.0, 1).unwrap().is_empty());

        let all = random_allocate(&ds, &cat, 30.0 * 10.0, 1).unwrap();
        assert_eq!(all.len(), 30);

        let a = random_allocate(&ds, &cat, 100.0, 9).unwrap();
        let b = random_allocate(&ds, &cat, 100.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.consumed_cost <= 100.0);
    }
}
