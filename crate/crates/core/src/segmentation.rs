//! Customer segmentation on estimated uplift vectors.
//!
//! A Gaussian mixture model is fit with EM (k-means++ seeding, three
//! restarts, covariance ridge each M-step), customers are hard-assigned to
//! their maximum-responsibility component, and per-cluster statistics feed
//! the portfolio optimizers: sizes `N_k`, mean effects, standard errors of
//! those means, and a bootstrap covariance of the whole mean vector.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::{fmt_f64, ExperimentDataset};
use crate::uplift::CateMatrix;
use crate::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// One mixture component.
#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// A fitted Gaussian mixture with its per-iteration log-likelihood trace.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    /// Log-likelihood after each E-step of the winning restart;
    /// non-decreasing by construction.
    pub log_likelihood: Vec<f64>,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }
}

/// Hard cluster labels aligned with the rows of the effect matrix they were
/// computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
}

/// Per-cluster statistics for the portfolio optimizers.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    /// `N_k`, customers per cluster.
    pub sizes: Vec<usize>,
    /// Mean estimated effect per cluster and coupon (`K x J`).
    pub means: Vec<Vec<f64>>,
    /// Standard error of each mean (`K x J`).
    pub stderrs: Vec<Vec<f64>>,
    /// Bootstrap covariance of the flattened mean vector (`KJ x KJ`),
    /// indexed by `k * J + (j - 1)`.
    pub covariance: DMatrix<f64>,
    /// Customer ids in effect-matrix row order, with their labels.
    pub customer_ids: Vec<u64>,
    pub labels: Vec<usize>,
}

impl ClusterStats {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_coupons(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn population(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Flat index of `(k, j)` into the covariance matrix; `j` is 1-based.
    pub fn flat_index(&self, k: usize, j: usize) -> usize {
        k * self.n_coupons() + (j - 1)
    }

    /// Row indices (into `customer_ids`) of cluster `k`'s members.
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, label)| **label == k)
            .map(|(row, _)| row)
            .collect()
    }

    pub fn cluster_of(&self, customer_id: u64) -> Option<usize> {
        self.customer_ids
            .iter()
            .position(|id| *id == customer_id)
            .map(|row| self.labels[row])
    }

    /// Write `clusters.csv`, `means.csv`, `stderrs.csv`, and `cov.csv`
    /// under `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        let j_count = self.n_coupons();

        let mut w = csv::Writer::from_path(dir.join("clusters.csv"))?;
        w.write_record(["customer_id", "k"])?;
        for (id, label) in self.customer_ids.iter().zip(&self.labels) {
            w.write_record(&[id.to_string(), label.to_string()])?;
        }
        w.flush()?;

        for (name, table) in [("means.csv", &self.means), ("stderrs.csv", &self.stderrs)] {
            let mut w = csv::Writer::from_path(dir.join(name))?;
            let prefix = if name == "means.csv" { "pibar" } else { "delta" };
            let mut header = vec!["k".to_string(), "size".to_string()];
            header.extend((1..=j_count).map(|j| format!("{prefix}_{j}")));
            w.write_record(&header)?;
            for (k, row) in table.iter().enumerate() {
                let mut record = vec![k.to_string(), self.sizes[k].to_string()];
                record.extend(row.iter().map(|v| fmt_f64(*v)));
                w.write_record(&record)?;
            }
            w.flush()?;
        }

        let mut w = csv::Writer::from_path(dir.join("cov.csv"))?;
        let labels: Vec<String> = (0..self.n_clusters())
            .flat_map(|k| (1..=j_count).map(move |j| format!("{k}:{j}")))
            .collect();
        let mut header = vec!["label".to_string()];
        header.extend(labels.iter().cloned());
        w.write_record(&header)?;
        for (a, label) in labels.iter().enumerate() {
            let mut record = vec![label.clone()];
            record.extend((0..labels.len()).map(|b| fmt_f64(self.covariance[(a, b)])));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(dir: &Path) -> Result<Self> {
        let mut customer_ids = Vec::new();
        let mut labels = Vec::new();
        let mut reader = csv::Reader::from_path(dir.join("clusters.csv"))?;
        for record in reader.records() {
            let record = record?;
            customer_ids.push(parse(record.get(0), "customer_id")?);
            labels.push(parse(record.get(1), "k")?);
        }

        let read_table = |name: &str| -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
            let mut reader = csv::Reader::from_path(dir.join(name))?;
            let width = reader.headers()?.len() - 2;
            let mut sizes = Vec::new();
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record?;
                sizes.push(parse(record.get(1), "size")?);
                let mut row = Vec::with_capacity(width);
                for c in 0..width {
                    row.push(parse(record.get(2 + c), "value")?);
                }
                rows.push(row);
            }
            Ok((sizes, rows))
        };
        let (sizes, means) = read_table("means.csv")?;
        let (_, stderrs) = read_table("stderrs.csv")?;

        let mut reader = csv::Reader::from_path(dir.join("cov.csv"))?;
        let dim = reader.headers()?.len() - 1;
        let mut covariance = DMatrix::zeros(dim, dim);
        for (a, record) in reader.records().enumerate() {
            let record = record?;
            for b in 0..dim {
                covariance[(a, b)] = parse(record.get(1 + b), "cov")?;
            }
        }
        Ok(Self { sizes, means, stderrs, covariance, customer_ids, labels })
    }
}

fn parse<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    field
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Validation(format!("bad {name} in cluster csv")))
}

/// Fit a `k`-component Gaussian mixture to the rows of the effect matrix.
///
/// Three k-means++-seeded restarts; the best final log-likelihood wins.
/// Each restart runs EM until the relative log-likelihood change drops
/// below `tol` or `max_iter` iterations; a monotone safeguard stops (and
/// rolls back) on any numerical decrease, so the recorded trace never
/// decreases.
pub fn fit_gmm(
    cate: &CateMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<GmmModel> {
    let n = cate.n_rows();
    if k == 0 {
        return Err(Error::Validation("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds the {n} customers")));
    }
    let dim = cate.n_coupons();
    let data: Vec<DVector<f64>> =
        (0..n).map(|i| DVector::from_column_slice(cate.row(i))).collect();

    let mut best: Option<GmmModel> = None;
    for restart in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restart as u64));
        let model = fit_single(&data, dim, k, &mut rng, max_iter, tol)?;
        let ll = *model.log_likelihood.last().expect("trace never empty");
        if best
            .as_ref()
            .map_or(true, |b| ll > *b.log_likelihood.last().expect("trace never empty"))
        {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_single(
    data: &[DVector<f64>],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
    max_iter: usize,
    tol: f64,
) -> Result<GmmModel> {
    let mut components = init_components(data, dim, k, rng);
    let mut trace: Vec<f64> = Vec::new();
    let mut previous: Option<(Vec<GmmComponent>, f64)> = None;

    for iter in 0..=max_iter {
        let (ll, resp) = e_step(data, &components)?;
        if let Some((prev_components, prev_ll)) = &previous {
            if ll < *prev_ll - 1e-12 {
                components = prev_components.clone();
                break;
            }
        }
        trace.push(ll);
        let converged = previous
            .as_ref()
            .map_or(false, |(_, prev_ll)| (ll - prev_ll).abs() < tol * (1.0 + ll.abs()));
        if converged || iter == max_iter {
            break;
        }
        previous = Some((components.clone(), ll));
        components = m_step(data, dim, k, &resp);
    }
    Ok(GmmModel { components, log_likelihood: trace })
}

/// k-means++ seeding followed by a hard-assignment moment initialization.
fn init_components(
    data: &[DVector<f64>],
    dim: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<GmmComponent> {
    let n = data.len();
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut dist2: Vec<f64> =
        data.iter().map(|x| (x - &data[centers[0]]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let target: f64 = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in dist2.iter().enumerate() {
                acc += d;
                if target < acc {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centers.push(chosen);
        for (i, x) in data.iter().enumerate() {
            dist2[i] = dist2[i].min((x - &data[chosen]).norm_squared());
        }
    }

    let labels: Vec<usize> = data
        .iter()
        .map(|x| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, &center) in centers.iter().enumerate() {
                let d = (x - &data[center]).norm_squared();
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect();

    let global_cov = moment_cov(data, dim, None, &[]);
    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let members: Vec<usize> =
            labels.iter().enumerate().filter(|(_, l)| **l == c).map(|(i, _)| i).collect();
        if members.is_empty() {
            components.push(GmmComponent {
                weight: 1.0 / n as f64,
                mean: data[centers[c]].clone(),
                cov: global_cov.clone(),
            });
            continue;
        }
        let mut mean = DVector::zeros(dim);
        for &i in &members {
            mean += &data[i];
        }
        mean /= members.len() as f64;
        let cov = if members.len() < 2 {
            global_cov.clone()
        } else {
            moment_cov(data, dim, Some(&mean), &members)
        };
        components.push(GmmComponent { weight: members.len() as f64 / n as f64, mean, cov });
    }
    let weight_sum: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= weight_sum;
    }
    components
}

/// Sample covariance (over all rows, or over `members` around `mean`),
/// ridged so it is always positive definite.
fn moment_cov(
    data: &[DVector<f64>],
    dim: usize,
    mean: Option<&DVector<f64>>,
    members: &[usize],
) -> DMatrix<f64> {
    let all: Vec<usize>;
    let idx: &[usize] = if members.is_empty() {
        all = (0..data.len()).collect();
        &all
    } else {
        members
    };
    let mu = match mean {
        Some(m) => m.clone(),
        None => {
            let mut m = DVector::zeros(dim);
            for &i in idx {
                m += &data[i];
            }
            m / idx.len() as f64
        }
    };
    let mut cov = DMatrix::zeros(dim, dim);
    for &i in idx {
        let d = &data[i] - &mu;
        cov += &d * d.transpose();
    }
    cov /= idx.len() as f64;
    ridge(&mut cov);
    cov
}

/// Add `1e-6 x mean diagonal` (with an absolute floor) to the diagonal.
fn ridge(cov: &mut DMatrix<f64>) {
    let dim = cov.nrows();
    let mean_diag = (0..dim).map(|i| cov[(i, i)]).sum::<f64>() / dim as f64;
    let eps = 1e-6 * mean_diag + 1e-12;
    for i in 0..dim {
        cov[(i, i)] += eps;
    }
}

struct LogDensity {
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl LogDensity {
    fn new(component: &GmmComponent) -> Result<Self> {
        let dim = component.mean.len();
        let mut cov = component.cov.clone();
        let mut chol = Cholesky::new(cov.clone());
        let mut boost = 1e-10 * (cov.trace() / dim as f64 + 1.0);
        while chol.is_none() && boost < 1e6 {
            for i in 0..dim {
                cov[(i, i)] += boost;
            }
            chol = Cholesky::new(cov.clone());
            boost *= 10.0;
        }
        let chol = chol.ok_or_else(|| Error::Validation("component covariance is singular".into()))?;
        let logdet: f64 = 2.0 * (0..dim).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        Ok(Self { chol, log_norm: -0.5 * (dim as f64 * LN_2PI + logdet) })
    }

    fn log_pdf(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let diff = x - mean;
        let solved = self.chol.solve(&diff);
        self.log_norm - 0.5 * diff.dot(&solved)
    }
}

/// Returns the total log-likelihood and the `n x k` responsibilities.
fn e_step(data: &[DVector<f64>], components: &[GmmComponent]) -> Result<(f64, Vec<Vec<f64>>)> {
    let k = components.len();
    let densities: Vec<LogDensity> =
        components.iter().map(LogDensity::new).collect::<Result<_>>()?;
    let mut resp = vec![vec![0.0; k]; data.len()];
    let mut total_ll = 0.0;
    for (i, x) in data.iter().enumerate() {
        let mut logs = vec![0.0; k];
        for (c, component) in components.iter().enumerate() {
            logs[c] = component.weight.max(1e-300).ln() + densities[c].log_pdf(x, &component.mean);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        total_ll += lse;
        for c in 0..k {
            resp[i][c] = (logs[c] - lse).exp();
        }
    }
    Ok((total_ll, resp))
}

fn m_step(data: &[DVector<f64>], dim: usize, k: usize, resp: &[Vec<f64>]) -> Vec<GmmComponent> {
    let n = data.len();
    let mut components = Vec::with_capacity(k);
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum::<f64>().max(1e-12);
        let mut mean = DVector::zeros(dim);
        for (i, x) in data.iter().enumerate() {
            mean += x * resp[i][c];
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(dim, dim);
        for (i, x) in data.iter().enumerate() {
            let d = x - &mean;
            cov += (&d * d.transpose()) * resp[i][c];
        }
        cov /= nk;
        ridge(&mut cov);
        components.push(GmmComponent { weight: nk / n as f64, mean, cov });
    }
    components
}

/// Hard-assign each effect-matrix row to its maximum-responsibility
/// component; exact ties break toward the lowest component index.
pub fn assign_clusters(model: &GmmModel, cate: &CateMatrix) -> Result<Assignment> {
    if model.dim() != cate.n_coupons() {
        return Err(Error::Validation(format!(
            "model dimension {} does not match the {}-coupon effect matrix",
            model.dim(),
            cate.n_coupons()
        )));
    }
    let densities: Vec<LogDensity> =
        model.components.iter().map(LogDensity::new).collect::<Result<_>>()?;
    let mut labels = Vec::with_capacity(cate.n_rows());
    for i in 0..cate.n_rows() {
        let x = DVector::from_column_slice(cate.row(i));
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (c, component) in model.components.iter().enumerate() {
            let score =
                component.weight.max(1e-300).ln() + densities[c].log_pdf(&x, &component.mean);
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        labels.push(best);
    }
    Ok(Assignment { labels, n_clusters: model.n_components() })
}

/// Per-cluster means, standard errors, and the bootstrap covariance of the
/// flattened mean vector.
///
/// The bootstrap resamples the full customer set with replacement
/// (`n_bootstrap` replicates, assignment held fixed); a cluster emptied by
/// resampling contributes its original mean for that replicate.
pub fn cluster_stats(
    cate: &CateMatrix,
    assignment: &Assignment,
    n_bootstrap: usize,
    seed: u64,
) -> Result<ClusterStats> {
    let n = cate.n_rows();
    if assignment.labels.len() != n {
        return Err(Error::Validation("assignment does not cover every customer".into()));
    }
    if n_bootstrap < 2 {
        return Err(Error::Validation("n_bootstrap must be at least 2".into()));
    }
    let k_count = assignment.n_clusters;
    let j_count = cate.n_coupons();

    let mut sizes = vec![0usize; k_count];
    for &label in &assignment.labels {
        if label >= k_count {
            return Err(Error::Validation(format!("label {label} out of range")));
        }
        sizes[label] += 1;
    }
    if let Some(empty) = sizes.iter().position(|s| *s == 0) {
        return Err(Error::Validation(format!("cluster {empty} has no members")));
    }

    let mut sums = vec![vec![0.0; j_count]; k_count];
    for (i, &label) in assignment.labels.iter().enumerate() {
        for j in 1..=j_count {
            sums[label][j - 1] += cate.get(i, j);
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&sizes)
        .map(|(row, &nk)| row.iter().map(|s| s / nk as f64).collect())
        .collect();

    let mut stderrs = vec![vec![0.0; j_count]; k_count];
    for (i, &label) in assignment.labels.iter().enumerate() {
        for j in 1..=j_count {
            let d = cate.get(i, j) - means[label][j - 1];
            stderrs[label][j - 1] += d * d;
        }
    }
    for k in 0..k_count {
        let nk = sizes[k] as f64;
        for j in 0..j_count {
            stderrs[k][j] = if sizes[k] < 2 {
                0.0
            } else {
                (stderrs[k][j] / (nk - 1.0)).sqrt() / nk.sqrt()
            };
        }
    }

    // Bootstrap covariance of the flattened K*J mean vector.
    let flat = k_count * j_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replicates = DMatrix::zeros(n_bootstrap, flat);
    let mut rep_sums = vec![0.0; flat];
    let mut rep_counts = vec![0usize; k_count];
    for r in 0..n_bootstrap {
        rep_sums.fill(0.0);
        rep_counts.fill(0);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            let label = assignment.labels[i];
            rep_counts[label] += 1;
            for j in 0..j_count {
                rep_sums[label * j_count + j] += cate.row(i)[j];
            }
        }
        for k in 0..k_count {
            for j in 0..j_count {
                replicates[(r, k * j_count + j)] = if rep_counts[k] == 0 {
                    means[k][j]
                } else {
                    rep_sums[k * j_count + j] / rep_counts[k] as f64
                };
            }
        }
    }
    let mut rep_mean = vec![0.0; flat];
    for r in 0..n_bootstrap {
        for a in 0..flat {
            rep_mean[a] += replicates[(r, a)];
        }
    }
    for m in rep_mean.iter_mut() {
        *m /= n_bootstrap as f64;
    }
    let mut covariance = DMatrix::zeros(flat, flat);
    for r in 0..n_bootstrap {
        for a in 0..flat {
            let da = replicates[(r, a)] - rep_mean[a];
            for b in a..flat {
                covariance[(a, b)] += da * (replicates[(r, b)] - rep_mean[b]);
            }
        }
    }
    for a in 0..flat {
        for b in a..flat {
            let v = covariance[(a, b)] / (n_bootstrap as f64 - 1.0);
            covariance[(a, b)] = v;
            covariance[(b, a)] = v;
        }
    }

    Ok(ClusterStats {
        sizes,
        means,
        stderrs,
        covariance,
        customer_ids: cate.customer_ids().to_vec(),
        labels: assignment.labels.clone(),
    })
}

/// One cluster-by-coupon cell of the segmentation report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportCell {
    pub mean: f64,
    pub stderr: f64,
}

/// Average observed uplift per cluster and coupon, in the layout of the
/// segmentation results table: one row per cluster (descending size), one
/// `mean (± stderr)` cell per coupon.
#[derive(Debug, Clone)]
pub struct SegmentReport {
    /// `(cluster, size, cells)` rows.
    pub rows: Vec<(usize, usize, Vec<ReportCell>)>,
}

impl std::fmt::Display for SegmentReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<4} {:>9}  {}", "No.", "Size", "Average uplift value (± standard error)")?;
        for (idx, (_, size, cells)) in self.rows.iter().enumerate() {
            write!(f, "{:<4} {:>9} ", idx + 1, size)?;
            for cell in cells {
                write!(f, " {:.2} (± {:.2})", cell.mean, cell.stderr)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Build the per-cluster average uplift table from an observed-outcome
/// metric `(matched, outcome) -> value` (for the paper-style table this is
/// the transformed-outcome term at the dataset's arm probability).
pub fn table2_report<F>(stats: &ClusterStats, ds: &ExperimentDataset, metric: F) -> SegmentReport
where
    F: Fn(bool, f64) -> f64,
{
    let j_count = stats.n_coupons();
    let cluster_by_id: BTreeMap<u64, usize> = stats
        .customer_ids
        .iter()
        .zip(&stats.labels)
        .map(|(id, label)| (*id, *label))
        .collect();

    // Accumulate metric values per (cluster, coupon).
    let mut acc: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); j_count]; stats.n_clusters()];
    for row in &ds.rows {
        let Some(&k) = cluster_by_id.get(&row.customer_id) else { continue };
        for j in 1..=j_count {
            acc[k][j - 1].push(metric(row.arm == j, row.outcome));
        }
    }

    let mut rows: Vec<(usize, usize, Vec<ReportCell>)> = (0..stats.n_clusters())
        .map(|k| {
            let cells = (0..j_count)
                .map(|j| {
                    let values = &acc[k][j];
                    if values.is_empty() {
                        return ReportCell { mean: 0.0, stderr: 0.0 };
                    }
                    let n = values.len() as f64;
                    let mean = values.iter().sum::<f64>() / n;
                    let stderr = if values.len() < 2 {
                        0.0
                    } else {
                        let var =
                            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                        (var / n).sqrt()
                    };
                    ReportCell { mean, stderr }
                })
                .collect();
            (k, stats.sizes[k], cells)
        })
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    SegmentReport { rows }
}
