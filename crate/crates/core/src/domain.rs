//! Shared domain types, validation, and deterministic RNG seeding.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; the operations are pure functions.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::{Error, Result};

/// Reserved arm index meaning "no coupon".
pub const CONTROL_ARM: usize = 0;

/// A coupon type with its unit cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupon {
    /// Dense index in `1..=n_coupons`; 0 is reserved for the control arm.
    pub id: usize,
    pub label: String,
    pub unit_cost: f64,
}

/// The set of coupons available for allocation, in id order.
///
/// The control arm (id 0) has cost 0 and is never allocated, so it is not
/// stored as a coupon.
#[derive(Debug, Clone, PartialEq)]
pub struct CouponCatalog {
    coupons: Vec<Coupon>,
}

impl CouponCatalog {
    /// Build a catalog from `(label, unit_cost)` pairs; ids are assigned
    /// densely starting at 1.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Validation("catalog must contain at least one coupon".into()));
        }
        for (label, cost) in &entries {
            if !cost.is_finite() || *cost <= 0.0 {
                return Err(Error::Validation(format!(
                    "coupon {label:?} has non-positive unit cost {cost}"
                )));
            }
        }
        let coupons = entries
            .into_iter()
            .enumerate()
            .map(|(i, (label, unit_cost))| Coupon { id: i + 1, label, unit_cost })
            .collect();
        Ok(Self { coupons })
    }

    /// The six coupon types used throughout the experiments, with their costs.
    pub fn standard_six() -> Self {
        Self::new(vec![
            ("5% discount".into(), 5.0),
            ("5% cashback".into(), 5.0),
            ("10% discount".into(), 10.0),
            ("10% cashback".into(), 10.0),
            ("15% discount".into(), 15.0),
            ("300 yen discount".into(), 13.0),
        ])
        .expect("static catalog is valid")
    }

    pub fn n_coupons(&self) -> usize {
        self.coupons.len()
    }

    pub fn coupons(&self) -> &[Coupon] {
        &self.coupons
    }

    /// Look up a coupon by id (1-based).
    pub fn coupon(&self, id: usize) -> Result<&Coupon> {
        if id == CONTROL_ARM || id > self.coupons.len() {
            return Err(Error::UnknownCoupon(id));
        }
        Ok(&self.coupons[id - 1])
    }

    pub fn cost(&self, id: usize) -> Result<f64> {
        self.coupon(id).map(|c| c.unit_cost)
    }

    /// Coupon id whose label matches exactly.
    pub fn id_by_label(&self, label: &str) -> Option<usize> {
        self.coupons.iter().find(|c| c.label == label).map(|c| c.id)
    }

    pub fn mean_cost(&self) -> f64 {
        let total: f64 = self.coupons.iter().map(|c| c.unit_cost).sum();
        total / self.coupons.len() as f64
    }

    pub fn min_cost(&self) -> f64 {
        self.coupons.iter().map(|c| c.unit_cost).fold(f64::INFINITY, f64::min)
    }

    /// True when every unit cost is integral (required by the exact knapsack).
    pub fn integer_costs(&self) -> bool {
        self.coupons.iter().all(|c| c.unit_cost.fract() == 0.0)
    }

    /// Read a `coupon_id,label,unit_cost` CSV. Ids must be dense `1..=n`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut rows: Vec<(usize, String, f64)> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let id: usize = parse_field(record.get(0), "coupon_id")?;
            let label = record
                .get(1)
                .ok_or_else(|| Error::Validation("catalog row missing label".into()))?
                .to_string();
            let cost: f64 = parse_field(record.get(2), "unit_cost")?;
            rows.push((id, label, cost));
        }
        rows.sort_by_key(|r| r.0);
        for (expect, row) in rows.iter().enumerate() {
            if row.0 != expect + 1 {
                return Err(Error::Validation(format!(
                    "catalog coupon ids must be dense 1..=n, found id {}",
                    row.0
                )));
            }
        }
        Self::new(rows.into_iter().map(|(_, label, cost)| (label, cost)).collect())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["coupon_id", "label", "unit_cost"])?;
        for c in &self.coupons {
            writer.write_record(&[c.id.to_string(), c.label.clone(), fmt_f64(c.unit_cost)])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// One customer of a randomized coupon experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRow {
    pub customer_id: u64,
    pub features: Vec<f64>,
    /// Assigned arm: 0 = control, `1..=n_coupons` = coupon.
    pub arm: usize,
    /// Observed outcome (GMV over the measurement window).
    pub outcome: f64,
}

/// A randomized experiment: feature rows, assigned arms, observed outcomes,
/// and the known per-arm assignment probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    pub rows: Vec<CustomerRow>,
    /// Per-arm assignment probability under complete randomization.
    pub arm_probability: f64,
}

impl ExperimentDataset {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Feature dimension of the first row (0 for an empty dataset).
    pub fn feature_dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    /// Rows whose arm equals `arm`.
    pub fn arm_count(&self, arm: usize) -> usize {
        self.rows.iter().filter(|r| r.arm == arm).count()
    }

    /// Split into disjoint subsets holding the listed row indices.
    pub fn subset(&self, indices: &[usize]) -> ExperimentDataset {
        ExperimentDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            arm_probability: self.arm_probability,
        }
    }

    /// Read the `customer_id,f0..f{d-1},arm,outcome` CSV format.
    pub fn read_csv(path: &Path, arm_probability: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let n_cols = headers.len();
        if n_cols < 3 {
            return Err(Error::Validation(format!(
                "dataset {} must have customer_id, features, arm, outcome columns",
                path.display()
            )));
        }
        let d = n_cols - 3;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let customer_id: u64 = parse_field(record.get(0), "customer_id")?;
            let mut features = Vec::with_capacity(d);
            for f in 0..d {
                features.push(parse_field(record.get(1 + f), "feature")?);
            }
            let arm: usize = parse_field(record.get(1 + d), "arm")?;
            let outcome: f64 = parse_field(record.get(2 + d), "outcome")?;
            rows.push(CustomerRow { customer_id, features, arm, outcome });
        }
        Ok(Self { rows, arm_probability })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let d = self.feature_dim();
        let mut header = vec!["customer_id".to_string()];
        header.extend((0..d).map(|f| format!("f{f}")));
        header.push("arm".into());
        header.push("outcome".into());
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.customer_id.to_string()];
            record.extend(row.features.iter().map(|v| fmt_f64(*v)));
            record.push(row.arm.to_string());
            record.push(fmt_f64(row.outcome));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Total budget plus optional per-coupon proportion bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetConfig {
    pub total_budget: f64,
    /// `(L, U)`: each coupon's allocated proportion must lie in `[L, U]`.
    pub proportion_bounds: Option<(f64, f64)>,
}

impl BudgetConfig {
    pub fn new(total_budget: f64, proportion_bounds: Option<(f64, f64)>) -> Result<Self> {
        if !total_budget.is_finite() || total_budget < 0.0 {
            return Err(Error::Validation(format!("budget must be nonnegative, got {total_budget}")));
        }
        if let Some((lo, hi)) = proportion_bounds {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(Error::Validation(format!(
                    "proportion bounds must satisfy 0 <= L <= U <= 1, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self { total_budget, proportion_bounds })
    }

    /// Lower bounds are jointly satisfiable only when `L * n_coupons <= 1`.
    pub fn check_feasible(&self, n_coupons: usize) -> Result<()> {
        if let Some((lo, _)) = self.proportion_bounds {
            if lo * n_coupons as f64 > 1.0 + 1e-12 {
                return Err(Error::Infeasible(format!(
                    "lower proportion bound {lo} over {n_coupons} coupons exceeds the population"
                )));
            }
        }
        Ok(())
    }
}

/// A customer-level coupon assignment. Customers absent from the map receive
/// no coupon; map semantics enforce at most one coupon per customer.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub assignments: BTreeMap<u64, usize>,
    pub consumed_cost: f64,
}

impl AllocationPlan {
    /// Build a plan and compute its cost against the catalog.
    pub fn new(assignments: BTreeMap<u64, usize>, cat: &CouponCatalog) -> Result<Self> {
        let mut plan = Self { assignments, consumed_cost: 0.0 };
        plan.consumed_cost = plan_cost(&plan, cat)?;
        Ok(plan)
    }

    pub fn empty() -> Self {
        Self { assignments: BTreeMap::new(), consumed_cost: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    /// Number of customers assigned each coupon id, indexed `0..n_coupons`
    /// by `id - 1`.
    pub fn coupon_counts(&self, n_coupons: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n_coupons];
        for &j in self.assignments.values() {
            if j >= 1 && j <= n_coupons {
                counts[j - 1] += 1;
            }
        }
        counts
    }

    /// Read a `customer_id,coupon_id` CSV.
    pub fn read_csv(path: &Path, cat: &CouponCatalog) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut assignments = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let customer_id: u64 = parse_field(record.get(0), "customer_id")?;
            let coupon_id: usize = parse_field(record.get(1), "coupon_id")?;
            assignments.insert(customer_id, coupon_id);
        }
        Self::new(assignments, cat)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["customer_id", "coupon_id"])?;
        for (customer, coupon) in &self.assignments {
            writer.write_record(&[customer.to_string(), coupon.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// A dataset-invariant violation found by [`validate_dataset`]. Violations
/// are data, not faults: collecting them never fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Offending row index, when the rule is row-scoped.
    pub row: Option<usize>,
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(row) => write!(f, "row {}: {} ({})", row, self.rule, self.detail),
            None => write!(f, "{} ({})", self.rule, self.detail),
        }
    }
}

/// Check every dataset invariant against the catalog; the result is empty
/// iff the dataset is well-formed. Idempotent and side-effect free.
pub fn validate_dataset(ds: &ExperimentDataset, cat: &CouponCatalog) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n_arms = cat.n_coupons() + 1;

    let p = ds.arm_probability;
    if !(p > 0.0 && p < 1.0) {
        violations.push(Violation {
            row: None,
            rule: "arm probability out of range",
            detail: format!("p = {p} must lie in (0, 1)"),
        });
    } else if p * n_arms as f64 > 1.0 + 1e-12 {
        violations.push(Violation {
            row: None,
            rule: "arm probability infeasible",
            detail: format!("p * (|J| + 1) = {} exceeds 1", p * n_arms as f64),
        });
    }

    let d = ds.feature_dim();
    let mut seen = std::collections::BTreeSet::new();
    for (i, row) in ds.rows.iter().enumerate() {
        if row.features.len() != d {
            violations.push(Violation {
                row: Some(i),
                rule: "ragged features",
                detail: format!("dimension {} != {}", row.features.len(), d),
            });
        }
        if row.arm >= n_arms {
            violations.push(Violation {
                row: Some(i),
                rule: "arm out of range",
                detail: format!("arm {} with {} coupons", row.arm, cat.n_coupons()),
            });
        }
        if !row.outcome.is_finite() || row.outcome < 0.0 {
            violations.push(Violation {
                row: Some(i),
                rule: "negative or non-finite outcome",
                detail: format!("outcome {}", row.outcome),
            });
        }
        if row.features.iter().any(|v| !v.is_finite()) {
            violations.push(Violation {
                row: Some(i),
                rule: "non-finite feature",
                detail: "features must be finite".into(),
            });
        }
        if !seen.insert(row.customer_id) {
            violations.push(Violation {
                row: Some(i),
                rule: "duplicate customer id",
                detail: format!("customer {}", row.customer_id),
            });
        }
    }
    violations
}

/// Total cost of a plan: the sum of assigned coupons' unit costs.
pub fn plan_cost(plan: &AllocationPlan, cat: &CouponCatalog) -> Result<f64> {
    let mut total = 0.0;
    for &coupon in plan.assignments.values() {
        total += cat.cost(coupon)?;
    }
    Ok(total)
}

/// Derive a substream seed from the master seed and a stage label.
///
/// Uses FNV-1a over the label followed by two splitmix64 rounds, so every
/// stage of a run draws from an independent, platform-stable stream of the
/// single configured seed.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut h = FNV_OFFSET;
    for byte in label.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(master ^ h))
}

/// A seeded, platform-stable RNG for the given stage of a run.
pub fn stage_rng(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Format a float for CSV output (shortest round-trip representation).
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Validation(format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Validation(format!("cannot parse {name} from {raw:?}")))
}
