//! Binary L2-regularized logistic regression fitted by damped Newton
//! iterations: a convex problem, solved deterministically to a gradient
//! tolerance, which keeps retraining reproducible without any RNG.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::FeatureMatrix;
use crate::error::{Error, Result};

/// Weights + intercept of one binary logistic model.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticBinary {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticBinary {
    pub fn predict_prob(&self, row: &[f64]) -> f64 {
        let z: f64 = self
            .weights
            .iter()
            .zip(row)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + self.intercept;
        sigmoid(z)
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-500.0, 500.0);
    1.0 / (1.0 + (-z).exp())
}

/// log(1 + exp(-m)) without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m >= 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Sample-weighted objective: sum_j s_j log(1 + exp(-t_j z_j)) + |w|^2/(2C),
/// intercept unpenalized.
fn objective(
    x: &FeatureMatrix,
    y: &[bool],
    sw: &[f64],
    c_reg: f64,
    weights: &DVector<f64>,
) -> f64 {
    let f = x.cols();
    let mut loss = 0.0;
    for j in 0..x.rows() {
        let row = x.row(j);
        let mut z = weights[f];
        for (w, v) in weights.iter().take(f).zip(row) {
            z += w * v;
        }
        let t = if y[j] { 1.0 } else { -1.0 };
        loss += sw[j] * log1p_exp_neg(t * z);
    }
    let penalty: f64 = weights.iter().take(f).map(|w| w * w).sum::<f64>() / (2.0 * c_reg);
    loss + penalty
}

/// Fit with Newton steps (step-halving line search) until the objective
/// gradient's infinity norm drops below `tol` or `max_iter` is hit.
pub(crate) fn fit_binary_logistic(
    x: &FeatureMatrix,
    y: &[bool],
    sw: &[f64],
    c_reg: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LogisticBinary> {
    let n = x.rows();
    let f = x.cols();
    if y.len() != n || sw.len() != n {
        return Err(Error::parameter("label/weight length mismatch"));
    }
    // theta = [w_0 .. w_{F-1}, b]
    let mut theta = DVector::<f64>::zeros(f + 1);
    let mut current = objective(x, y, sw, c_reg, &theta);

    for _ in 0..max_iter {
        // residuals and curvature per sample
        let mut grad = DVector::<f64>::zeros(f + 1);
        let mut hess = DMatrix::<f64>::zeros(f + 1, f + 1);
        for j in 0..n {
            let row = x.row(j);
            let mut z = theta[f];
            for (w, v) in theta.iter().take(f).zip(row) {
                z += w * v;
            }
            let p = sigmoid(z);
            let target = if y[j] { 1.0 } else { 0.0 };
            let r = sw[j] * (p - target);
            let curv = (sw[j] * p * (1.0 - p)).max(1e-12);
            for (a, v) in row.iter().enumerate() {
                grad[a] += r * v;
                for (b, u) in row.iter().enumerate().skip(a) {
                    hess[(a, b)] += curv * v * u;
                }
                hess[(a, f)] += curv * v;
            }
            grad[f] += r;
            hess[(f, f)] += curv;
        }
        for a in 0..f {
            grad[a] += theta[a] / c_reg;
            hess[(a, a)] += 1.0 / c_reg;
        }
        // mirror the upper triangle
        for a in 0..=f {
            for b in a + 1..=f {
                hess[(b, a)] = hess[(a, b)];
            }
        }

        if grad.amax() <= tol {
            break;
        }

        let step = match Cholesky::new(hess.clone()) {
            Some(ch) => ch.solve(&grad),
            None => {
                let jitter = 1e-9 * (1.0 + hess.trace() / (f + 1) as f64);
                let mut padded = hess;
                for a in 0..=f {
                    padded[(a, a)] += jitter;
                }
                Cholesky::new(padded)
                    .ok_or_else(|| Error::degenerate("singular logistic Hessian"))?
                    .solve(&grad)
            }
        };

        // damped Newton: halve until the objective stops increasing
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &theta - alpha * &step;
            let value = objective(x, y, sw, c_reg, &candidate);
            if value <= current {
                theta = candidate;
                current = value;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break; // numerically converged
        }
    }

    Ok(LogisticBinary {
        weights: theta.iter().take(f).cloned().collect(),
        intercept: theta[f],
    })
}

// ===========================================================================
// Tests
// ===========================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn separable() -> (FeatureMatrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = rng_for(4, "sep", 0);
        for i in 0..60 {
            let positive = i % 2 == 0;
            let cx = if positive { 2.0 } else { -2.0 };
            rows.push(vec![
                cx + rng.random_range(-0.9..0.9),
                rng.random_range(-1.0..1.0),
            ]);
            y.push(positive);
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_data_trains_to_full_accuracy() {
        let (x, y) = separable();
        let sw = vec![1.0; y.len()];
        let m = fit_binary_logistic(&x, &y, &sw, 1.0, 10_000, 1e-6).unwrap();
        for (j, want) in y.iter().enumerate() {
            assert_eq!(m.predict_prob(x.row(j)) >= 0.5, *want);
        }
    }

    #[test]
    fn objective_beats_zero_weights() {
        let (x, y) = separable();
        let sw = vec![1.0; y.len()];
        let m = fit_binary_logistic(&x, &y, &sw, 0.01, 10_000, 1e-6).unwrap();
        let f = x.cols();
        let mut theta = DVector::<f64>::zeros(f + 1);
        let at_zero = objective(&x, &y, &sw, 0.01, &theta);
        for (i, w) in m.weights.iter().enumerate() {
            theta[i] = *w;
        }
        theta[f] = m.intercept;
        let at_fit = objective(&x, &y, &sw, 0.01, &theta);
        assert!(at_fit <= at_zero, "fit {at_fit} vs zero {at_zero}");
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, y) = separable();
        let sw = vec![1.0; y.len()];
        let loose = fit_binary_logistic(&x, &y, &sw, 0.01, 10_000, 1e-6).unwrap();
        let tight = fit_binary_logistic(&x, &y, &sw, 0.0001, 10_000, 1e-6).unwrap();
        assert!(
            tight.weight_norm() < loose.weight_norm(),
            "{} !< {}",
            tight.weight_norm(),
            loose.weight_norm()
        );
    }

    #[test]
    fn weight_scaling_with_inverse_c_is_invariant() {
        let (x, y) = separable();
        let sw: Vec<f64> = y.iter().map(|p| if *p { 1.4 } else { 0.8 }).collect();
        let lambda = 3.7;
        let scaled: Vec<f64> = sw.iter().map(|w| w * lambda).collect();
        let a = fit_binary_logistic(&x, &y, &sw, 0.05, 10_000, 1e-10).unwrap();
        let b = fit_binary_logistic(&x, &y, &scaled, 0.05 / lambda, 10_000, 1e-10).unwrap();
        for j in 0..x.rows() {
            let pa = a.predict_prob(x.row(j));
            let pb = b.predict_prob(x.row(j));
            assert!((pa - pb).abs() < 1e-6, "sample {j}: {pa} vs {pb}");
        }
    }
}
