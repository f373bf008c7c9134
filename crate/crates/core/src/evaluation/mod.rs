//! Offline evaluation of allocation strategies.
//!
//! The workhorse is the transformed outcome: under complete randomization
//! with per-arm probability `p`, the term `((W - p) / (p (1 - p))) * GMV`
//! has expectation equal to the treatment effect, so summing it over a
//! plan's assignments scores the plan without a live experiment. On top of
//! that: per-coupon uplift curves with AUUC, budget sweeps comparing the
//! random/knapsack/mean-variance/robust strategies, and k-fold
//! cross-validation of the portfolio hyperparameters.

pub mod plots;

use std::collections::BTreeMap;
use std::path::Path;

use crate::allocation::{
    random_allocate, realize, solve_mck_greedy, solve_mvo, solve_ro, FractionalAllocation,
};
use crate::domain::{
    derive_seed, fmt_f64, AllocationPlan, BudgetConfig, CouponCatalog, ExperimentDataset,
};
use crate::segmentation::{assign_clusters, cluster_stats, fit_gmm, ClusterStats};
use crate::uplift::{estimate_cate, fit_slearner, fold_indices, BaseLearnerSpec, CateMatrix};
use crate::{Error, Result};

/// The transformed-outcome term for one `(customer, coupon)` pair.
///
/// `matched` is whether the experiment's randomized arm equals the coupon
/// under evaluation; `p` is the per-arm treatment probability.
pub fn transformed_outcome_term(matched: bool, gmv: f64, p: f64) -> f64 {
    let w = if matched { 1.0 } else { 0.0 };
    (w - p) / (p * (1.0 - p)) * gmv
}

/// Total transformed-outcome uplift of a plan plus the per-customer terms.
#[derive(Debug, Clone)]
pub struct UpliftGmv {
    pub total: f64,
    /// `(customer_id, term)` for every assigned customer, in id order.
    pub terms: Vec<(u64, f64)>,
}

/// Score a plan against the randomized experiment: each assigned customer
/// contributes the transformed-outcome term of their assigned coupon;
/// unassigned customers contribute nothing.
pub fn uplift_gmv(plan: &AllocationPlan, ds: &ExperimentDataset, p: f64) -> UpliftGmv {
    let by_id: BTreeMap<u64, (usize, f64)> =
        ds.rows.iter().map(|r| (r.customer_id, (r.arm, r.outcome))).collect();
    let mut terms = Vec::with_capacity(plan.assignments.len());
    let mut total = 0.0;
    for (&customer, &coupon) in &plan.assignments {
        let Some(&(arm, outcome)) = by_id.get(&customer) else { continue };
        let term = transformed_outcome_term(arm == coupon, outcome, p);
        total += term;
        terms.push((customer, term));
    }
    UpliftGmv { total, terms }
}

/// An uplift curve for one coupon: cumulative transformed outcome over
/// customers ranked by score, plus the area between the curve and the
/// random-targeting chord.
#[derive(Debug, Clone)]
pub struct UpliftCurve {
    pub coupon: usize,
    /// `points[t]` is the cumulative value over the top `t` customers;
    /// `points[0] = 0`.
    pub points: Vec<f64>,
    pub auuc: f64,
}

/// Rank customers by the score column (descending, ties by customer id)
/// and accumulate the transformed-outcome term of coupon `j` as if each
/// ranked customer were assigned `j`.
///
/// AUUC is the trapezoidal area between the curve and the straight line
/// from the origin to the curve's endpoint.
pub fn uplift_curve(
    scores: &CateMatrix,
    j: usize,
    ds: &ExperimentDataset,
    p: f64,
) -> Result<UpliftCurve> {
    let mut ranked: Vec<(f64, u64)> = Vec::with_capacity(ds.n_rows());
    for row in &ds.rows {
        let score_row = scores
            .row_of(row.customer_id)
            .ok_or_else(|| Error::Validation(format!("no score for customer {}", row.customer_id)))?;
        ranked.push((scores.get(score_row, j), row.customer_id));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let by_id: BTreeMap<u64, (usize, f64)> =
        ds.rows.iter().map(|r| (r.customer_id, (r.arm, r.outcome))).collect();
    let mut points = Vec::with_capacity(ds.n_rows() + 1);
    points.push(0.0);
    let mut running = 0.0;
    for &(_, customer) in &ranked {
        let (arm, outcome) = by_id[&customer];
        running += transformed_outcome_term(arm == j, outcome, p);
        points.push(running);
    }
    let auuc = auuc_of(&points);
    Ok(UpliftCurve { coupon: j, points, auuc })
}

/// Trapezoidal area of the curve minus the area under the chord from the
/// origin to its endpoint.
pub fn auuc_of(points: &[f64]) -> f64 {
    let n = points.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let mut area = 0.0;
    for t in 1..=n {
        area += 0.5 * (points[t - 1] + points[t]);
    }
    area - 0.5 * n as f64 * points[n]
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - mean) * (y - mean);
        var_a += (x - mean) * (x - mean);
        var_b += (y - mean) * (y - mean);
    }
    if var_a <= 0.0 || var_b <= 0.0 {
        return 0.0;
    }
    cov / (var_a.sqrt() * var_b.sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut at = 0;
    while at < order.len() {
        let mut end = at + 1;
        while end < order.len() && values[order[end]] == values[order[at]] {
            end += 1;
        }
        let avg = (at + 1 + end) as f64 / 2.0;
        for &i in &order[at..end] {
            ranks[i] = avg;
        }
        at = end;
    }
    ranks
}

/// An allocation strategy with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Random,
    Mck,
    Mvo { lambda: f64 },
    Ro { alpha: f64, beta: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Mck => "mck",
            Self::Mvo { .. } => "mvo",
            Self::Ro { .. } => "ro",
        }
    }
}

/// One `(strategy, budget)` cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub strategy: String,
    pub budget: f64,
    pub consumed_cost: f64,
    pub uplift_gmv: f64,
    /// Fraction of all customers assigned each coupon.
    pub proportions: Vec<f64>,
    /// The realized plan (absent when the strategy failed).
    pub plan: Option<AllocationPlan>,
    /// The fractional solution for cluster-level strategies.
    pub fractional: Option<FractionalAllocation>,
    pub error: Option<String>,
}

/// Sweep output: one point per strategy and budget, plus the per-coupon
/// uplift curves of the scoring matrix.
#[derive(Debug, Clone)]
pub struct UpliftReport {
    pub points: Vec<SweepPoint>,
    pub curves: Vec<UpliftCurve>,
}

impl UpliftReport {
    /// `report.csv`: successful points in long format.
    pub fn write_report_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["strategy", "budget", "consumed_cost", "uplift_gmv"])?;
        for point in self.points.iter().filter(|p| p.error.is_none()) {
            w.write_record(&[
                point.strategy.clone(),
                fmt_f64(point.budget),
                fmt_f64(point.consumed_cost),
                fmt_f64(point.uplift_gmv),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `proportions.csv`: per-coupon allocation shares per point.
    pub fn write_proportions_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["strategy", "budget", "coupon_id", "proportion"])?;
        for point in self.points.iter().filter(|p| p.error.is_none()) {
            for (j, prop) in point.proportions.iter().enumerate() {
                w.write_record(&[
                    point.strategy.clone(),
                    fmt_f64(point.budget),
                    (j + 1).to_string(),
                    fmt_f64(*prop),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `sweep_errors.csv`: failed points with their messages.
    pub fn write_errors_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["strategy", "budget", "error"])?;
        for point in self.points.iter().filter(|p| p.error.is_some()) {
            w.write_record(&[
                point.strategy.clone(),
                fmt_f64(point.budget),
                point.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `curves.csv`: long format `(coupon, t, cumulative)`.
    pub fn write_curves_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["coupon_id", "t", "cumulative_uplift"])?;
        for curve in &self.curves {
            for (t, value) in curve.points.iter().enumerate() {
                w.write_record(&[
                    curve.coupon.to_string(),
                    t.to_string(),
                    fmt_f64(*value),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_auuc_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["coupon_id", "auuc"])?;
        for curve in &self.curves {
            w.write_record(&[curve.coupon.to_string(), fmt_f64(curve.auuc)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run every strategy at every budget; failures are recorded per point and
/// the sweep continues. Deterministic under the seed: every random draw
/// derives from `(seed, strategy, budget index)`.
#[allow(clippy::too_many_arguments)]
pub fn budget_sweep(
    strategies: &[Strategy],
    stats: &ClusterStats,
    pihat: &CateMatrix,
    ds: &ExperimentDataset,
    cat: &CouponCatalog,
    budgets: &[f64],
    bounds: Option<(f64, f64)>,
    seed: u64,
) -> Result<UpliftReport> {
    if budgets.is_empty() {
        return Err(Error::Validation("budget grid must be non-empty".into()));
    }
    if budgets.windows(2).any(|pair| pair[1] < pair[0]) {
        return Err(Error::Validation("budget grid must be ascending".into()));
    }
    let p = ds.arm_probability;
    let n = ds.n_rows();
    let j_count = cat.n_coupons();
    let gamma_full = (stats.n_clusters() * stats.n_coupons()) as f64;

    let mut points = Vec::with_capacity(strategies.len() * budgets.len());
    for (b_idx, &budget) in budgets.iter().enumerate() {
        for strategy in strategies {
            let label = format!("sweep:{}:{}", strategy.name(), b_idx);
            let point_seed = derive_seed(seed, &label);
            let outcome: Result<(AllocationPlan, Option<FractionalAllocation>)> = (|| {
                match strategy {
                    Strategy::Random => {
                        Ok((random_allocate(ds, cat, budget, point_seed)?, None))
                    }
                    Strategy::Mck => {
                        Ok((solve_mck_greedy(pihat, cat, budget, bounds)?, None))
                    }
                    Strategy::Mvo { lambda } => {
                        let cfg = BudgetConfig::new(budget, bounds)?;
                        let w = solve_mvo(stats, cat, &cfg, *lambda)?;
                        Ok((realize(&w, stats, cat, point_seed)?, Some(w)))
                    }
                    Strategy::Ro { alpha, beta } => {
                        let cfg = BudgetConfig::new(budget, bounds)?;
                        let w = solve_ro(stats, cat, &cfg, *alpha, beta * gamma_full)?;
                        Ok((realize(&w, stats, cat, point_seed)?, Some(w)))
                    }
                }
            })();
            let point = match outcome {
                Ok((plan, fractional)) => {
                    let score = uplift_gmv(&plan, ds, p);
                    let counts = plan.coupon_counts(j_count);
                    SweepPoint {
                        strategy: strategy.name().to_string(),
                        budget,
                        consumed_cost: plan.consumed_cost,
                        uplift_gmv: score.total,
                        proportions: counts.iter().map(|c| *c as f64 / n as f64).collect(),
                        plan: Some(plan),
                        fractional,
                        error: None,
                    }
                }
                Err(err) => SweepPoint {
                    strategy: strategy.name().to_string(),
                    budget,
                    consumed_cost: 0.0,
                    uplift_gmv: 0.0,
                    proportions: vec![0.0; j_count],
                    plan: None,
                    fractional: None,
                    error: Some(err.to_string()),
                },
            };
            points.push(point);
        }
    }

    let mut curves = Vec::with_capacity(j_count);
    for j in 1..=j_count {
        curves.push(uplift_curve(pihat, j, ds, p)?);
    }
    Ok(UpliftReport { points, curves })
}

/// A hyperparameter candidate for cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CvCandidate {
    Mvo { lambda: f64 },
    Ro { alpha: f64, beta: f64 },
}

impl std::fmt::Display for CvCandidate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Mvo { lambda } => write!(f, "mvo(lambda={lambda})"),
            Self::Ro { alpha, beta } => write!(f, "ro(alpha={alpha}, beta={beta})"),
        }
    }
}

/// Fixed context shared by every CV configuration.
#[derive(Debug, Clone)]
pub struct CvSettings {
    pub k_clusters: usize,
    pub learner: BaseLearnerSpec,
    pub n_bootstrap: usize,
    /// Scoring budget as a fraction of `fold size x mean coupon cost` (the
    /// midpoint of the sweep grid).
    pub budget_fraction: f64,
    pub bounds: Option<(f64, f64)>,
    pub folds: usize,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub best: CvCandidate,
    /// Mean held-out score per candidate, in grid order.
    pub scores: Vec<(CvCandidate, f64)>,
}

/// 5-fold (by default) cross-validation of the portfolio hyperparameters:
/// refit the estimation/segmentation pipeline per fold, allocate on the
/// held-out fold at the reference budget, and score by transformed-outcome
/// uplift. Ties break toward robustness: smaller lambda, larger alpha then
/// beta.
pub fn cross_validate(
    grid: &[CvCandidate],
    train_ds: &ExperimentDataset,
    cat: &CouponCatalog,
    settings: &CvSettings,
    seed: u64,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::Validation("cv grid must be non-empty".into()));
    }
    let folds = fold_indices(train_ds.n_rows(), settings.folds, derive_seed(seed, "cv-folds"));
    let n_arms = cat.n_coupons() + 1;
    let mut sums = vec![0.0; grid.len()];

    for (f, held_idx) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(other, _)| *other != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let fit_ds = train_ds.subset(&train_idx);
        let held_ds = train_ds.subset(held_idx);
        for arm in 0..n_arms {
            if fit_ds.arm_count(arm) == 0 || held_ds.arm_count(arm) == 0 {
                return Err(Error::EmptyArm(arm));
            }
        }

        let model = fit_slearner(
            &fit_ds,
            cat,
            settings.learner.build(n_arms),
            derive_seed(seed, &format!("cv-fit:{f}")),
        )?;
        let cate = estimate_cate(&model, &held_ds)?;
        let gmm = fit_gmm(
            &cate,
            settings.k_clusters,
            derive_seed(seed, &format!("cv-gmm:{f}")),
            200,
            1e-7,
        )?;
        let assignment = assign_clusters(&gmm, &cate)?;
        let stats = cluster_stats(
            &cate,
            &assignment,
            settings.n_bootstrap,
            derive_seed(seed, &format!("cv-boot:{f}")),
        )?;

        let reference_budget =
            settings.budget_fraction * held_ds.n_rows() as f64 * cat.mean_cost();
        let cfg = BudgetConfig::new(reference_budget, settings.bounds)?;
        let gamma_full = (settings.k_clusters * cat.n_coupons()) as f64;
        for (c, candidate) in grid.iter().enumerate() {
            let w = match candidate {
                CvCandidate::Mvo { lambda } => solve_mvo(&stats, cat, &cfg, *lambda)?,
                CvCandidate::Ro { alpha, beta } => {
                    solve_ro(&stats, cat, &cfg, *alpha, beta * gamma_full)?
                }
            };
            let plan = realize(&w, &stats, cat, derive_seed(seed, &format!("cv-real:{f}:{c}")))?;
            sums[c] += uplift_gmv(&plan, &held_ds, held_ds.arm_probability).total;
        }
    }

    let scores: Vec<(CvCandidate, f64)> = grid
        .iter()
        .zip(&sums)
        .map(|(c, s)| (*c, s / settings.folds as f64))
        .collect();
    let mut best = 0;
    for c in 1..scores.len() {
        let (cand, score) = scores[c];
        let (incumbent, best_score) = scores[best];
        if score > best_score + 1e-12 {
            best = c;
        } else if (score - best_score).abs() <= 1e-12 && prefer_robust(&cand, &incumbent) {
            best = c;
        }
    }
    Ok(CvOutcome { best: scores[best].0, scores })
}

/// Tie-breaking: smaller lambda for the mean-variance model, larger alpha
/// then beta for the robust model.
fn prefer_robust(candidate: &CvCandidate, incumbent: &CvCandidate) -> bool {
    match (candidate, incumbent) {
        (CvCandidate::Mvo { lambda: a }, CvCandidate::Mvo { lambda: b }) => a < b,
        (CvCandidate::Ro { alpha: a1, beta: b1 }, CvCandidate::Ro { alpha: a2, beta: b2 }) => {
            (a1, b1) > (a2, b2)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::CustomerRow;

    fn dataset(rows: Vec<(usize, f64)>) -> ExperimentDataset {
        ExperimentDataset {
            rows: rows
                .into_iter()
                .enumerate()
                .map(|(i, (arm, outcome))| CustomerRow {
                    customer_id: i as u64,
                    features: vec![0.0],
                    arm,
                    outcome,
                })
                .collect(),
            arm_probability: 1.0 / 7.0,
        }
    }

    #[test]
    fn transformed_outcome_hand_values() {
        let p = 1.0 / 7.0;
        assert!((transformed_outcome_term(true, 1.0, p) - 7.0).abs() < 1e-12);
        assert!((transformed_outcome_term(false, 1.0, p) + 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_plan_scores_zero() {
        let ds = dataset(vec![(1, 5.0), (0, 2.0)]);
        let score = uplift_gmv(&AllocationPlan::empty(), &ds, 1.0 / 7.0);
        assert_eq!(score.total, 0.0);
        assert!(score.terms.is_empty());
    }

    #[test]
    fn uplift_gmv_matches_hand_computation() {
        let cat = CouponCatalog::standard_six();
        let ds = dataset(vec![(1, 1.0), (2, 1.0)]);
        // Assign coupon 1 to both: customer 0 matched, customer 1 not.
        let plan = AllocationPlan::new(
            BTreeMap::from([(0u64, 1usize), (1u64, 1usize)]),
            &cat,
        )
        .unwrap();
        let score = uplift_gmv(&plan, &ds, 1.0 / 7.0);
        assert!((score.total - (7.0 - 7.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn uplift_gmv_is_additive_over_disjoint_plans() {
        let cat = CouponCatalog::standard_six();
        let ds = dataset(vec![(1, 1.0), (2, 3.0), (3, 2.0), (0, 1.0)]);
        let p = 1.0 / 7.0;
        let a = AllocationPlan::new(BTreeMap::from([(0u64, 1usize)]), &cat).unwrap();
        let b = AllocationPlan::new(
            BTreeMap::from([(1u64, 2usize), (2u64, 1usize)]),
            &cat,
        )
        .unwrap();
        let mut merged = a.assignments.clone();
        merged.extend(b.assignments.clone());
        let both = AllocationPlan::new(merged, &cat).unwrap();
        let total = uplift_gmv(&both, &ds, p).total;
        assert!(
            (total - uplift_gmv(&a, &ds, p).total - uplift_gmv(&b, &ds, p).total).abs() < 1e-12
        );
    }

    #[test]
    fn flat_curve_for_zero_outcomes() {
        let ds = dataset(vec![(1, 0.0), (0, 0.0), (1, 0.0)]);
        let scores = CateMatrix::new(vec![0, 1, 2], vec![0.3, 0.2, 0.1], 1).unwrap();
        let curve = uplift_curve(&scores, 1, &ds, 1.0 / 7.0).unwrap();
        assert!(curve.points.iter().all(|v| *v == 0.0));
        assert_eq!(curve.auuc, 0.0);
    }

    #[test]
    fn curve_ranks_by_score_with_id_ties() {
        let ds = dataset(vec![(1, 1.0), (1, 2.0), (0, 3.0)]);
        let scores = CateMatrix::new(vec![0, 1, 2], vec![0.5, 0.5, 0.9], 1).unwrap();
        let curve = uplift_curve(&scores, 1, &ds, 1.0 / 7.0).unwrap();
        // Order: customer 2 (score 0.9), then 0, then 1 (tie by id).
        let t2 = transformed_outcome_term(false, 3.0, 1.0 / 7.0);
        let t0 = transformed_outcome_term(true, 1.0, 1.0 / 7.0);
        let t1 = transformed_outcome_term(true, 2.0, 1.0 / 7.0);
        assert!((curve.points[1] - t2).abs() < 1e-12);
        assert!((curve.points[2] - (t2 + t0)).abs() < 1e-12);
        assert!((curve.points[3] - (t2 + t0 + t1)).abs() < 1e-12);
    }

    #[test]
    fn auuc_of_straight_line_is_zero() {
        let points: Vec<f64> = (0..=10).map(|t| 2.0 * t as f64).collect();
        assert!(auuc_of(&points).abs() < 1e-12);
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let a: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v * 3.0 + 1.0).collect();
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &c) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_grid_must_be_ascending_and_non_empty() {
        let cat = CouponCatalog::standard_six();
        let ds = dataset(vec![(0, 1.0); 7]);
        let scores =
            CateMatrix::new((0..7).collect(), vec![0.1; 42], 6).unwrap();
        let stats = crate::segmentation::ClusterStats {
            sizes: vec![7],
            means: vec![vec![0.1; 6]],
            stderrs: vec![vec![0.0; 6]],
            covariance: nalgebra::DMatrix::zeros(6, 6),
            customer_ids: (0..7).collect(),
            labels: vec![0; 7],
        };
        let strategies = [Strategy::Random];
        assert!(budget_sweep(&strategies, &stats, &scores, &ds, &cat, &[], None, 0).is_err());
        assert!(budget_sweep(
            &strategies,
            &stats,
            &scores,
            &ds,
            &cat,
            &[10.0, 5.0],
            None,
            0
        )
        .is_err());
    }

    #[test]
    fn zero_budget_rows_report_zero() {
        let cat = CouponCatalog::standard_six();
        let ds = dataset(vec![(0, 1.0), (1, 2.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0), (6, 1.0)]);
        let scores = CateMatrix::new((0..7).collect(), vec![0.1; 42], 6).unwrap();
        let stats = crate::segmentation::ClusterStats {
            sizes: vec![7],
            means: vec![vec![0.1; 6]],
            stderrs: vec![vec![0.0; 6]],
            covariance: nalgebra::DMatrix::zeros(6, 6),
            customer_ids: (0..7).collect(),
            labels: vec![0; 7],
        };
        let strategies = [
            Strategy::Random,
            Strategy::Mck,
            Strategy::Mvo { lambda: 0.0 },
            Strategy::Ro { alpha: 0.5, beta: 0.8 },
        ];
        let report =
            budget_sweep(&strategies, &stats, &scores, &ds, &cat, &[0.0, 60.0], None, 7).unwrap();
        for point in report.points.iter().filter(|p| p.budget == 0.0) {
            assert_eq!(point.error, None, "{}: {:?}", point.strategy, point.error);
            assert_eq!(point.consumed_cost, 0.0);
            assert_eq!(point.uplift_gmv, 0.0);
        }
    }

    #[test]
    fn cv_single_candidate_returned_unchanged() {
        // Build a small but arm-complete synthetic training set.
        let gt = crate::synthgen::GroundTruthModel::default_six_coupon();
        let cat = CouponCatalog::standard_six();
        let (ds, _) = crate::synthgen::generate(&gt, 700, &cat, 1.0 / 7.0, 21).unwrap();
        let settings = CvSettings {
            k_clusters: 3,
            learner: BaseLearnerSpec::Ridge { lambda: 1e-6 },
            n_bootstrap: 20,
            budget_fraction: 1.0,
            bounds: None,
            folds: 5,
        };
        let grid = [CvCandidate::Ro { alpha: 0.5, beta: 0.8 }];
        let outcome = cross_validate(&grid, &ds, &cat, &settings, 3).unwrap();
        assert_eq!(outcome.best, grid[0]);
    }

    #[test]
    fn cv_tie_breaks_toward_robustness() {
        let a = CvCandidate::Ro { alpha: 0.5, beta: 0.4 };
        let b = CvCandidate::Ro { alpha: 0.5, beta: 0.8 };
        assert!(prefer_robust(&b, &a));
        assert!(!prefer_robust(&a, &b));
        let c = CvCandidate::Mvo { lambda: 0.0 };
        let d = CvCandidate::Mvo { lambda: 0.01 };
        assert!(prefer_robust(&c, &d));
        assert!(!prefer_robust(&d, &c));
    }
}
