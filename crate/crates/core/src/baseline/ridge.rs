//! Weighted ridge regression with an unpenalized intercept.
//!
//! Minimizes `sum s_i (y_i - x_i.b - c)^2 + lambda |b|^2`. Features and
//! targets are centred on their weighted means, which removes the intercept
//! from the problem, and the coefficients are the least-squares solution of
//! the stacked system `[sqrt(S) Xc; sqrt(lambda) I] b = [sqrt(S) yc; 0]`,
//! solved through a QR factorization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RidgeError {
    #[error("X has {rows} rows but {targets} targets{weights}")]
    DimensionMismatch {
        rows: usize,
        targets: usize,
        weights: String,
    },
    #[error("lambda must be finite and non-negative, got {0}")]
    BadLambda(f64),
    #[error("sample weights must be finite, non-negative and not all zero")]
    BadWeights,
    #[error("no training rows")]
    NoRows,
    #[error("design matrix is rank deficient and lambda is zero")]
    SingularSystem,
    #[error("non-finite value in design or targets")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RidgeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let b = DVector::from_column_slice(&self.coefficients);
        (x * b).iter().map(|v| v + self.intercept).collect()
    }
}

pub fn fit_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    sample_weights: Option<&[f64]>,
    lambda: f64,
) -> Result<RidgeModel, RidgeError> {
    let (n, p) = x.shape();
    if n != y.len() || sample_weights.is_some_and(|w| w.len() != n) {
        return Err(RidgeError::DimensionMismatch {
            rows: n,
            targets: y.len(),
            weights: sample_weights
                .map(|w| format!(" and {} weights", w.len()))
                .unwrap_or_default(),
        });
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(RidgeError::BadLambda(lambda));
    }
    if n == 0 {
        return Err(RidgeError::NoRows);
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RidgeError::NonFinite);
    }
    let s: Vec<f64> = match sample_weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let total: f64 = s.iter().sum();
    if s.iter().any(|&v| !(v.is_finite() && v >= 0.0)) || total <= 0.0 {
        return Err(RidgeError::BadWeights);
    }

    let y_mean = s.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total;
    let x_mean: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| s[i] * x[(i, j)]).sum::<f64>() / total)
        .collect();
    if p == 0 {
        return Ok(RidgeModel {
            coefficients: Vec::new(),
            intercept: y_mean,
            lambda,
        });
    }

    let root_l = lambda.sqrt();
    let a = DMatrix::from_fn(n + p, p, |i, j| {
        if i < n {
            s[i].sqrt() * (x[(i, j)] - x_mean[j])
        } else if i - n == j {
            root_l
        } else {
            0.0
        }
    });
    let rhs = DVector::from_fn(n + p, |i, _| {
        if i < n {
            s[i].sqrt() * (y[i] - y_mean)
        } else {
            0.0
        }
    });

    let qr = a.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = diag_max * (n + p) as f64 * f64::EPSILON;
    if diag_max == 0.0 || r.diagonal().iter().any(|v| v.abs() <= tol) {
        return Err(RidgeError::SingularSystem);
    }
    let qtb = qr.q().transpose() * rhs;
    let beta = r
        .solve_upper_triangular(&qtb)
        .ok_or(RidgeError::SingularSystem)?;
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(RidgeModel {
        coefficients: beta.iter().copied().collect(),
        intercept,
        lambda,
    })
}

/// Weighted objective value of a model on training data.
pub fn objective(
    model: &RidgeModel,
    x: &DMatrix<f64>,
    y: &[f64],
    sample_weights: Option<&[f64]>,
) -> f64 {
    let pred = model.predict(x);
    let loss: f64 = pred
        .iter()
        .zip(y)
        .enumerate()
        .map(|(i, (p, t))| sample_weights.map_or(1.0, |w| w[i]) * (t - p).powi(2))
        .sum();
    loss + model.lambda * model.coefficients.iter().map(|b| b * b).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;
    use proptest::prelude::*;

    fn random_system(rng: &mut DetRng, n: usize, p: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let x = DMatrix::from_fn(n, p, |_, _| rng.unit() * 4.0 - 2.0);
        let y = (0..n).map(|_| rng.unit() * 10.0 - 5.0).collect();
        let w = (0..n).map(|_| 0.05 + 0.95 * rng.unit()).collect();
        (x, y, w)
    }

    /// Independent route: pseudo-inverse of the normal equations of the
    /// intercept-augmented design, penalizing all but the intercept.
    fn oracle(x: &DMatrix<f64>, y: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
        let (n, p) = x.shape();
        let z = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(w));
        let mut m = z.transpose() * &s * &z;
        for j in 1..=p {
            m[(j, j)] += lambda;
        }
        let theta =
            m.pseudo_inverse(1e-12).unwrap() * z.transpose() * &s * DVector::from_column_slice(y);
        (&z * theta).iter().copied().collect()
    }

    #[test]
    fn matches_pseudo_inverse_oracle() {
        let mut rng = DetRng::new(17);
        for lambda in [0.0, 0.3, 5.0] {
            let (x, y, w) = random_system(&mut rng, 50, 20);
            let model = fit_ridge(&x, &y, Some(&w), lambda).unwrap();
            for (a, b) in model.predict(&x).iter().zip(oracle(&x, &y, &w, lambda)) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn interpolates_linear_data() {
        let mut rng = DetRng::new(2);
        let (x, _, _) = random_system(&mut rng, 30, 5);
        let truth = [1.5, -2.0, 0.25, 3.0, 0.0];
        let y: Vec<f64> = (0..30)
            .map(|i| 0.7 + (0..5).map(|j| x[(i, j)] * truth[j]).sum::<f64>())
            .collect();
        let m = fit_ridge(&x, &y, None, 0.0).unwrap();
        let rmse = (m
            .predict(&x)
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 30.0)
            .sqrt();
        assert!(rmse < 1e-8);
    }

    #[test]
    fn huge_lambda_predicts_weighted_mean() {
        let mut rng = DetRng::new(4);
        let (x, y, w) = random_system(&mut rng, 40, 6);
        let mean = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        let m = fit_ridge(&x, &y, Some(&w), 1e9).unwrap();
        assert!(m.predict(&x).iter().all(|p| (p - mean).abs() < 1e-3));
    }

    #[test]
    fn errors() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert_eq!(
            fit_ridge(&x, &[1.0, 2.0, 3.0], None, 0.0),
            Err(RidgeError::SingularSystem)
        );
        assert!(fit_ridge(&x, &[1.0, 2.0, 3.0], None, 0.1).is_ok());
        assert!(matches!(
            fit_ridge(&x, &[1.0], None, 0.1),
            Err(RidgeError::DimensionMismatch { .. })
        ));
        assert_eq!(
            fit_ridge(&x, &[1.0, 2.0, 3.0], None, -1.0),
            Err(RidgeError::BadLambda(-1.0))
        );
        assert_eq!(
            fit_ridge(&x, &[1.0, 2.0, 3.0], Some(&[0.0, 0.0, 0.0]), 1.0),
            Err(RidgeError::BadWeights)
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn objective_not_worse_than_zero_model(seed in any::<u64>(), lambda in 0.001f64..100.0) {
            let mut rng = DetRng::new(seed);
            let (x, y, w) = random_system(&mut rng, 25, 8);
            let m = fit_ridge(&x, &y, Some(&w), lambda).unwrap();
            let mean = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
            let zero = RidgeModel { coefficients: vec![0.0; 8], intercept: mean, lambda };
            prop_assert!(objective(&m, &x, &y, Some(&w)) <= objective(&zero, &x, &y, Some(&w)) + 1e-9);
        }

        #[test]
        fn scaling_weights_and_lambda_together(seed in any::<u64>(), lambda in 0.01f64..10.0, c in 0.1f64..10.0) {
            let mut rng = DetRng::new(seed);
            let (x, y, w) = random_system(&mut rng, 25, 8);
            let a = fit_ridge(&x, &y, Some(&w), lambda).unwrap();
            let w2: Vec<f64> = w.iter().map(|v| v * c).collect();
            let b = fit_ridge(&x, &y, Some(&w2), lambda * c).unwrap();
            for (p, q) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!((p - q).abs() < 1e-8);
            }
            prop_assert!((a.intercept - b.intercept).abs() < 1e-8);
        }
    }
}
