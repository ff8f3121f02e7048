//! Lawson–Hanson non-negative least squares.

use nalgebra::{DMatrix, DVector};

/// Minimize `‖A·w − b‖²` subject to `w ≥ 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = a.ncols();
    let mut w = DVector::<f64>::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * a.amax().max(1.0) * b.amax().max(1.0) * a.nrows() as f64;
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let grad = a.transpose() * (b - a * &w);
        let candidate = (0..k)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub = a.select_columns(&idx);
            let z_sub = sub
                .clone()
                .svd(true, true)
                .solve(b, 1e-12)
                .expect("SVD computed with U and V");
            let mut z = DVector::<f64>::zeros(k);
            for (p, &j) in idx.iter().enumerate() {
                z[j] = z_sub[p];
            }
            if idx.iter().all(|&j| z[j] > 0.0) {
                w = z;
                break;
            }
            // Step back toward the feasible region and release the bound variables.
            let mut alpha = f64::INFINITY;
            for &j in &idx {
                if z[j] <= 0.0 {
                    alpha = alpha.min(w[j] / (w[j] - z[j]));
                }
            }
            for j in 0..k {
                w[j] += alpha * (z[j] - w[j]);
                if passive[j] && w[j] <= 1e-15 {
                    passive[j] = false;
                    w[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    w
}
