//! Ridge regression base learner.
//!
//! In interaction mode the trailing `n_arms` columns of each input row are
//! treated as a one-hot arm encoding and the model fits a separate
//! intercept-plus-slope block per arm (features-by-arm interactions). Since
//! exactly one arm indicator is active per row, the Gram matrix is block
//! diagonal and each arm's coefficients solve independently.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::BaseRegressor;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RidgeRegressor {
    lambda: f64,
    /// Number of trailing one-hot columns; 0 disables interaction mode.
    n_arms: usize,
    /// Per-arm `[intercept, slopes...]` blocks (interaction mode), or a
    /// single block (plain mode).
    coefficients: Vec<Vec<f64>>,
}

impl RidgeRegressor {
    /// Plain ridge on `[1, x]`.
    pub fn new(lambda: f64) -> Self {
        Self { lambda, n_arms: 0, coefficients: Vec::new() }
    }

    /// Ridge on features-by-arm interactions; the last `n_arms` input
    /// columns must be a one-hot encoding.
    pub fn with_interactions(lambda: f64, n_arms: usize) -> Self {
        Self { lambda, n_arms, coefficients: Vec::new() }
    }

    fn solve_block(rows: &[&[f64]], targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
        let d = rows.first().map_or(0, |r| r.len()) + 1;
        let mut gram = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        let mut padded = vec![0.0; d];
        for (row, &y) in rows.iter().zip(targets) {
            padded[0] = 1.0;
            padded[1..].copy_from_slice(row);
            for a in 0..d {
                rhs[a] += padded[a] * y;
                for b in a..d {
                    gram[(a, b)] += padded[a] * padded[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
            gram[(a, a)] += lambda;
        }
        let chol = Cholesky::new(gram)
            .ok_or_else(|| Error::Validation("ridge normal equations are singular".into()))?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }
}

impl BaseRegressor for RidgeRegressor {
    fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) -> Result<()> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Validation("ridge needs matching non-empty x and y".into()));
        }
        let width = x[0].len();
        if self.n_arms == 0 {
            let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            self.coefficients = vec![Self::solve_block(&rows, y, self.lambda)?];
            return Ok(());
        }

        if width < self.n_arms {
            return Err(Error::Validation("rows narrower than the arm encoding".into()));
        }
        let d = width - self.n_arms;
        let mut blocks = Vec::with_capacity(self.n_arms);
        for arm in 0..self.n_arms {
            let mut rows: Vec<&[f64]> = Vec::new();
            let mut targets = Vec::new();
            for (row, &yi) in x.iter().zip(y) {
                if row[d + arm] == 1.0 {
                    rows.push(&row[..d]);
                    targets.push(yi);
                }
            }
            if rows.is_empty() {
                // No data for this arm: ridge shrinks its block to zero.
                blocks.push(vec![0.0; d + 1]);
            } else {
                blocks.push(Self::solve_block(&rows, &targets, self.lambda)?);
            }
        }
        self.coefficients = blocks;
        Ok(())
    }

    fn predict_one(&self, x: &[f64]) -> f64 {
        assert!(!self.coefficients.is_empty(), "ridge predict before fit");
        let block = if self.n_arms == 0 {
            &self.coefficients[0]
        } else {
            let d = x.len() - self.n_arms;
            let arm = x[d..]
                .iter()
                .position(|v| *v == 1.0)
                .expect("interaction mode rows must carry a one-hot arm");
            &self.coefficients[arm]
        };
        let d = block.len() - 1;
        block[0] + block[1..].iter().zip(&x[..d]).map(|(c, v)| c * v).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let mut model = RidgeRegressor::new(1e-10);
        model.fit(&x, &y).unwrap();
        for (row, target) in x.iter().zip(&y) {
            assert!((model.predict_one(row) - target).abs() < 1e-6);
        }
    }

    #[test]
    fn interaction_mode_fits_per_arm_relations() {
        // Two arms with different slopes; one-hot in the last two columns.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let v = i as f64 / 3.0;
            if i % 2 == 0 {
                x.push(vec![v, 1.0, 0.0]);
                y.push(1.0 + 2.0 * v);
            } else {
                x.push(vec![v, 0.0, 1.0]);
                y.push(-1.0 - 0.5 * v);
            }
        }
        let mut model = RidgeRegressor::with_interactions(1e-10, 2);
        model.fit(&x, &y).unwrap();
        assert!((model.predict_one(&[2.0, 1.0, 0.0]) - 5.0).abs() < 1e-6);
        assert!((model.predict_one(&[2.0, 0.0, 1.0]) + 2.0).abs() < 1e-6);
    }
}
