//! Synthetic randomized coupon experiments with known ground-truth treatment
//! effects.
//!
//! The generator stands in for production experiment data and doubles as the
//! oracle for estimator and allocation tests: alongside each dataset it
//! returns the exact per-customer effect of every coupon.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{CouponCatalog, CustomerRow, ExperimentDataset};
use crate::uplift::CateMatrix;
use crate::{Error, Result};

/// A real-valued function of a feature vector.
pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A latent feature segment: an axis-aligned Gaussian component.
#[derive(Debug, Clone)]
pub struct Segment {
    pub center: Vec<f64>,
    /// Per-dimension standard deviation.
    pub scale: Vec<f64>,
    /// Mixing weight; weights must sum to 1.
    pub weight: f64,
}

/// Ground truth behind a synthetic experiment: the control-outcome surface,
/// the true effect of every coupon, the outcome noise level, and the latent
/// segments features are drawn from.
#[derive(Clone)]
pub struct GroundTruthModel {
    baseline: ScalarFn,
    effects: Vec<ScalarFn>,
    pub noise_scale: f64,
    pub feature_dim: usize,
    pub segments: Vec<Segment>,
}

impl GroundTruthModel {
    pub fn new(
        baseline: ScalarFn,
        effects: Vec<ScalarFn>,
        noise_scale: f64,
        feature_dim: usize,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if effects.is_empty() {
            return Err(Error::Validation("ground truth needs at least one coupon effect".into()));
        }
        if noise_scale < 0.0 || !noise_scale.is_finite() {
            return Err(Error::Validation("noise scale must be nonnegative".into()));
        }
        if segments.is_empty() {
            return Err(Error::Validation("ground truth needs at least one segment".into()));
        }
        let weight_sum: f64 = segments.iter().map(|s| s.weight).sum();
        if (weight_sum - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "segment weights must sum to 1, got {weight_sum}"
            )));
        }
        for seg in &segments {
            if seg.center.len() != feature_dim || seg.scale.len() != feature_dim {
                return Err(Error::Validation("segment dimension mismatch".into()));
            }
            if seg.weight < 0.0 || seg.scale.iter().any(|s| *s < 0.0) {
                return Err(Error::Validation(
                    "segment weights and scales must be nonnegative".into(),
                ));
            }
        }
        Ok(Self { baseline, effects, noise_scale, feature_dim, segments })
    }

    /// Piecewise-constant ground truth: each customer belongs to the segment
    /// with the nearest center, and baseline/effect levels are constant per
    /// segment. This gives the downstream mixture segmentation recoverable
    /// structure.
    pub fn piecewise(
        segments: Vec<Segment>,
        baseline_levels: Vec<f64>,
        effect_levels: Vec<Vec<f64>>,
        noise_scale: f64,
        feature_dim: usize,
    ) -> Result<Self> {
        let n_segments = segments.len();
        if baseline_levels.len() != n_segments || effect_levels.len() != n_segments {
            return Err(Error::Validation(
                "one baseline/effect level row per segment required".into(),
            ));
        }
        let n_coupons = effect_levels.first().map_or(0, Vec::len);
        if n_coupons == 0 || effect_levels.iter().any(|row| row.len() != n_coupons) {
            return Err(Error::Validation("effect level rows must share one width".into()));
        }

        let centers: Arc<Vec<Vec<f64>>> =
            Arc::new(segments.iter().map(|s| s.center.clone()).collect());
        let baseline = {
            let centers = Arc::clone(&centers);
            let levels = baseline_levels;
            Arc::new(move |x: &[f64]| levels[nearest_center(&centers, x)]) as ScalarFn
        };
        let effects = (0..n_coupons)
            .map(|j| {
                let centers = Arc::clone(&centers);
                let levels: Vec<f64> = effect_levels.iter().map(|row| row[j]).collect();
                Arc::new(move |x: &[f64]| levels[nearest_center(&centers, x)]) as ScalarFn
            })
            .collect();
        Self::new(baseline, effects, noise_scale, feature_dim, segments)
    }

    /// Default synthetic population used by the pipeline: five latent
    /// segments over five features, large segments with low uplift and small
    /// segments with high uplift, matched to the six standard coupons.
    pub fn default_six_coupon() -> Self {
        let dim = 5;
        let seg = |center: [f64; 5], weight: f64| Segment {
            center: center.to_vec(),
            scale: vec![0.6; dim],
            weight,
        };
        let segments = vec![
            seg([0.0, 0.0, 0.0, 0.0, 0.0], 0.45),
            seg([3.0, 0.0, 0.0, 0.0, 0.0], 0.30),
            seg([0.0, 3.0, 0.0, 0.0, 0.0], 0.15),
            seg([3.0, 3.0, 0.0, 0.0, 0.0], 0.07),
            seg([1.5, 1.5, 3.0, 0.0, 0.0], 0.03),
        ];
        let baseline_levels = vec![4.0, 5.0, 5.5, 6.0, 7.0];
        let effect_levels = vec![
            vec![0.20, 0.10, 0.50, 0.50, 0.55, 0.45],
            vec![0.30, 0.15, 0.65, 0.60, 0.70, 0.60],
            vec![0.50, 0.25, 1.10, 1.05, 1.15, 1.00],
            vec![0.80, 0.40, 1.50, 1.45, 1.50, 1.40],
            vec![1.20, 0.80, 2.00, 2.00, 1.95, 1.90],
        ];
        Self::piecewise(segments, baseline_levels, effect_levels, 1.0, dim)
            .expect("static configuration is valid")
    }

    pub fn n_coupons(&self) -> usize {
        self.effects.len()
    }

    pub fn baseline_at(&self, x: &[f64]) -> f64 {
        (self.baseline)(x)
    }

    /// True effect of coupon `j` (1-based) at `x`; the control effect is 0
    /// by construction.
    pub fn effect_at(&self, j: usize, x: &[f64]) -> Result<f64> {
        if j == 0 {
            return Ok(0.0);
        }
        let f = self.effects.get(j - 1).ok_or(Error::UnknownCoupon(j))?;
        Ok(f(x))
    }

    /// Latent segment of a feature vector (nearest center).
    pub fn segment_of(&self, x: &[f64]) -> usize {
        let centers: Vec<Vec<f64>> = self.segments.iter().map(|s| s.center.clone()).collect();
        nearest_center(&centers, x)
    }
}

fn nearest_center(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (k, center) in centers.iter().enumerate() {
        let dist: f64 = center.iter().zip(x).map(|(c, v)| (c - v) * (c - v)).sum();
        if dist < best_dist {
            best_dist = dist;
            best = k;
        }
    }
    best
}

/// Generate a complete randomized experiment of `n_customers`.
///
/// Each coupon arm is drawn i.i.d. with probability `p`; the control keeps
/// the remaining `1 - p |J|` mass (equal to `p` in the equal-probability
/// design `p = 1 / (|J| + 1)`). Outcomes are
/// `baseline(x) + effect_arm(x) + noise`, clamped at zero so GMV stays
/// nonnegative. Returns the dataset plus the exact effect matrix for oracle
/// use. Bit-identical for a fixed seed.
pub fn generate(
    gt: &GroundTruthModel,
    n_customers: usize,
    cat: &CouponCatalog,
    p: f64,
    seed: u64,
) -> Result<(ExperimentDataset, CateMatrix)> {
    let n_coupons = cat.n_coupons();
    if gt.n_coupons() != n_coupons {
        return Err(Error::Validation(format!(
            "ground truth has {} effects but the catalog has {} coupons",
            gt.n_coupons(),
            n_coupons
        )));
    }
    if n_customers == 0 {
        return Err(Error::Validation("n_customers must be at least 1".into()));
    }
    if !(p > 0.0) || p * (n_coupons as f64 + 1.0) > 1.0 + 1e-12 {
        return Err(Error::Validation(format!(
            "arm probability p = {p} is infeasible for {n_coupons} coupons"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_customers);
    let mut truth = Vec::with_capacity(n_customers * n_coupons);
    let mut ids = Vec::with_capacity(n_customers);

    for customer_id in 0..n_customers as u64 {
        let segment = draw_segment(&gt.segments, &mut rng);
        let seg = &gt.segments[segment];
        let mut features = Vec::with_capacity(gt.feature_dim);
        for d in 0..gt.feature_dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(seg.center[d] + seg.scale[d] * z);
        }

        let u: f64 = rng.random();
        let arm = if u < p * n_coupons as f64 { 1 + (u / p) as usize } else { 0 };

        let effect = gt.effect_at(arm, &features)?;
        let noise: f64 = if gt.noise_scale > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            gt.noise_scale * z
        } else {
            0.0
        };
        let outcome = (gt.baseline_at(&features) + effect + noise).max(0.0);

        for j in 1..=n_coupons {
            truth.push(gt.effect_at(j, &features)?);
        }
        ids.push(customer_id);
        rows.push(CustomerRow { customer_id, features, arm, outcome });
    }

    let dataset = ExperimentDataset { rows, arm_probability: p };
    let cate = CateMatrix::new(ids, truth, n_coupons)?;
    Ok((dataset, cate))
}

fn draw_segment(segments: &[Segment], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, seg) in segments.iter().enumerate() {
        acc += seg.weight;
        if u < acc {
            return k;
        }
    }
    segments.len() - 1
}

/// Population average of the true effect of coupon `j` over the dataset's
/// customers.
pub fn true_ate(gt: &GroundTruthModel, ds: &ExperimentDataset, j: usize) -> Result<f64> {
    if j == 0 || j > gt.n_coupons() {
        return Err(Error::UnknownCoupon(j));
    }
    if ds.rows.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for row in &ds.rows {
        total += gt.effect_at(j, &row.features)?;
    }
    Ok(total / ds.rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_dataset;

    fn constant_model(levels: Vec<f64>, noise: f64) -> GroundTruthModel {
        let baseline: ScalarFn = Arc::new(|_| 5.0);
        let effects = levels
            .into_iter()
            .map(|v| Arc::new(move |_: &[f64]| v) as ScalarFn)
            .collect();
        let segments = vec![Segment { center: vec![0.0; 3], scale: vec![1.0; 3], weight: 1.0 }];
        GroundTruthModel::new(baseline, effects, noise, 3, segments).unwrap()
    }

    #[test]
    fn zero_effect_zero_noise_outcomes_equal_baseline() {
        let gt = constant_model(vec![0.0; 6], 0.0);
        let cat = CouponCatalog::standard_six();
        let (ds, _) = generate(&gt, 500, &cat, 1.0 / 7.0, 7).unwrap();
        for row in &ds.rows {
            assert_eq!(row.outcome, 5.0);
        }
    }

    #[test]
    fn treated_outcome_minus_baseline_recovers_effect_exactly() {
        let gt = constant_model(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.0);
        let cat = CouponCatalog::standard_six();
        let (ds, truth) = generate(&gt, 400, &cat, 1.0 / 7.0, 11).unwrap();
        for (i, row) in ds.rows.iter().enumerate() {
            if row.arm > 0 {
                let effect = row.outcome - 5.0;
                assert_eq!(effect, truth.get(i, row.arm));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let gt = GroundTruthModel::default_six_coupon();
        let cat = CouponCatalog::standard_six();
        let (a, ta) = generate(&gt, 300, &cat, 1.0 / 7.0, 99).unwrap();
        let (b, tb) = generate(&gt, 300, &cat, 1.0 / 7.0, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.values(), tb.values());
    }

    #[test]
    fn arm_counts_concentrate_under_binomial() {
        // With 7 equal arms each count is Binomial(n, 1/7); all counts must
        // stay within 5 sigma of n/7.
        let gt = GroundTruthModel::default_six_coupon();
        let cat = CouponCatalog::standard_six();
        let n = 70_000;
        let p = 1.0 / 7.0;
        let (ds, _) = generate(&gt, n, &cat, p, 1234).unwrap();
        let sigma = ((n as f64) * p * (1.0 - p)).sqrt();
        for arm in 0..=6 {
            let count = ds.arm_count(arm) as f64;
            let expected = n as f64 * p;
            assert!(
                (count - expected).abs() < 5.0 * sigma,
                "arm {arm}: count {count} vs expected {expected} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn arm_assignment_independent_of_features() {
        // Split on a feature threshold; arm frequencies must agree within
        // binomial tolerance on both sides.
        let gt = GroundTruthModel::default_six_coupon();
        let cat = CouponCatalog::standard_six();
        let (ds, _) = generate(&gt, 40_000, &cat, 1.0 / 7.0, 5).unwrap();
        let median = {
            let mut f0: Vec<f64> = ds.rows.iter().map(|r| r.features[0]).collect();
            f0.sort_by(f64::total_cmp);
            f0[f0.len() / 2]
        };
        for arm in 0..=6 {
            let (mut low, mut low_n, mut high, mut high_n) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for row in &ds.rows {
                if row.features[0] < median {
                    low_n += 1.0;
                    if row.arm == arm {
                        low += 1.0;
                    }
                } else {
                    high_n += 1.0;
                    if row.arm == arm {
                        high += 1.0;
                    }
                }
            }
            let p = 1.0 / 7.0;
            let tol = 5.0 * (p * (1.0 - p) * (1.0 / low_n + 1.0 / high_n)).sqrt();
            assert!(
                (low / low_n - high / high_n).abs() < tol,
                "arm {arm} frequency differs across the split"
            );
        }
    }

    #[test]
    fn infeasible_probability_rejected() {
        let gt = constant_model(vec![0.0; 6], 0.0);
        let cat = CouponCatalog::standard_six();
        assert!(generate(&gt, 10, &cat, 0.2, 1).is_err());
    }

    #[test]
    fn generated_dataset_is_valid() {
        let gt = GroundTruthModel::default_six_coupon();
        let cat = CouponCatalog::standard_six();
        let (ds, _) = generate(&gt, 2_000, &cat, 1.0 / 7.0, 3).unwrap();
        assert!(validate_dataset(&ds, &cat).is_empty());
    }

    #[test]
    fn true_ate_of_constant_effect_is_the_constant() {
        let gt = constant_model(vec![2.5, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0);
        let cat = CouponCatalog::standard_six();
        let (ds, _) = generate(&gt, 100, &cat, 1.0 / 7.0, 2).unwrap();
        assert_eq!(true_ate(&gt, &ds, 1).unwrap(), 2.5);
        assert_eq!(true_ate(&gt, &ds, 2).unwrap(), 0.0);
    }

    #[test]
    fn true_ate_matches_analytic_mean_of_first_feature() {
        // tau_1(x) = x[0] with features centered at 0.5: the population mean
        // is 0.5; the Monte-Carlo mean over a large draw must approach it.
        let baseline: ScalarFn = Arc::new(|_| 5.0);
        let effects: Vec<ScalarFn> = vec![Arc::new(|x: &[f64]| x[0])];
        let segments = vec![Segment { center: vec![0.5], scale: vec![0.3], weight: 1.0 }];
        let gt = GroundTruthModel::new(baseline, effects, 0.0, 1, segments).unwrap();
        let cat = CouponCatalog::new(vec![("one".into(), 1.0)]).unwrap();
        let (ds, _) = generate(&gt, 200_000, &cat, 0.5, 17).unwrap();
        let ate = true_ate(&gt, &ds, 1).unwrap();
        // 5 sigma Monte-Carlo tolerance: sd = 0.3 / sqrt(n).
        let tol = 5.0 * 0.3 / (200_000f64).sqrt();
        assert!((ate - 0.5).abs() < tol, "ate {ate}");
    }

    #[test]
    fn unknown_coupon_rejected() {
        let gt = constant_model(vec![0.0; 6], 0.0);
        let cat = CouponCatalog::standard_six();
        let (ds, _) = generate(&gt, 10, &cat, 1.0 / 7.0, 1).unwrap();
        assert!(true_ate(&gt, &ds, 9).is_err());
        assert!(true_ate(&gt, &ds, 0).is_err());
    }
}
