//! Generalized linear models fitted by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-10;
/// Relative residual norm below which a column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GaussianIdentity,
    BinomialLogit,
}

impl Family {
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => expit(eta),
        }
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmFit {
    pub family: Family,
    /// Intercept (when the design has one) first, in design column order.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Set for logistic fits that hit the iteration cap or fitted 0/1 probabilities.
    pub separation: bool,
    pub design_schema: Vec<String>,
}

impl GlmFit {
    pub fn linear_predictor(&self, design: &DMatrix<f64>) -> Result<DVector<f64>> {
        if design.ncols() != self.coefficients.len() {
            return Err(Error::Domain(format!(
                "design has {} columns, model expects {} ({})",
                design.ncols(),
                self.coefficients.len(),
                self.design_schema.join(", ")
            )));
        }
        Ok(design * DVector::from_column_slice(&self.coefficients))
    }

    pub fn predict(&self, design: &DMatrix<f64>) -> Result<Vec<f64>> {
        let eta = self.linear_predictor(design)?;
        Ok(eta.iter().map(|&e| self.family.inverse_link(e)).collect())
    }
}

/// Names of the columns that are linear combinations of earlier columns.
pub fn collinear_columns(design: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for j in 0..design.ncols() {
        let col = design.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            out.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
            continue;
        }
        let mut v = col / norm;
        // Two passes of modified Gram–Schmidt for stability.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let rest = v.norm();
        if rest < COLLINEAR_TOL {
            out.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
        } else {
            basis.push(v / rest);
        }
    }
    out
}

fn weighted_solve(
    design: &DMatrix<f64>,
    weights: &[f64],
    z: &[f64],
    names: &[String],
) -> Result<DVector<f64>> {
    let p = design.ncols();
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwz = DVector::<f64>::zeros(p);
    for (i, row) in design.row_iter().enumerate() {
        let w = weights[i];
        for a in 0..p {
            let xa = row[a] * w;
            xtwz[a] += xa * z[i];
            for b in 0..=a {
                xtwx[(a, b)] += xa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(b, a)] = xtwx[(a, b)];
        }
    }
    let chol = xtwx.cholesky().ok_or_else(|| Error::RankDeficient {
        columns: {
            let c = collinear_columns(design, names);
            if c.is_empty() {
                vec!["<weighted cross-product not positive definite>".into()]
            } else {
                c
            }
        },
    })?;
    Ok(chol.solve(&xtwz))
}

/// Fit a GLM. Gaussian/identity solves the normal equations once; binomial/logit
/// iterates until the relative coefficient change drops below 1e-10 or 100
/// iterations pass.
pub fn fit_glm(
    design: &DMatrix<f64>,
    response: &[f64],
    family: Family,
    names: Vec<String>,
) -> Result<GlmFit> {
    let n = design.nrows();
    if response.len() != n {
        return Err(Error::Domain(format!(
            "design has {n} rows, response has {}",
            response.len()
        )));
    }
    if names.len() != design.ncols() {
        return Err(Error::Domain("one name per design column required".into()));
    }
    if n == 0 || design.ncols() == 0 {
        return Err(Error::Domain("empty design".into()));
    }
    if family == Family::BinomialLogit && response.iter().any(|&y| !(0.0..=1.0).contains(&y)) {
        return Err(Error::Domain("binomial response must lie in [0, 1]".into()));
    }
    let collinear = collinear_columns(design, &names);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear });
    }

    match family {
        Family::GaussianIdentity => {
            let beta = weighted_solve(design, &vec![1.0; n], response, &names)?;
            Ok(GlmFit {
                family,
                coefficients: beta.iter().copied().collect(),
                converged: true,
                iterations: 1,
                separation: false,
                design_schema: names,
            })
        }
        Family::BinomialLogit => {
            let mut mu: Vec<f64> = response.iter().map(|&y| (y + 0.5) / 2.0).collect();
            let mut eta: Vec<f64> = mu.iter().map(|&m| logit(m)).collect();
            let mut beta: Option<DVector<f64>> = None;
            let mut converged = false;
            let mut iterations = 0;
            let mut w = vec![0.0; n];
            let mut z = vec![0.0; n];
            for it in 1..=MAX_ITER {
                iterations = it;
                for i in 0..n {
                    let v = (mu[i] * (1.0 - mu[i])).max(1e-12);
                    w[i] = v;
                    z[i] = eta[i] + (response[i] - mu[i]) / v;
                }
                let next = weighted_solve(design, &w, &z, &names)?;
                let e = design * &next;
                for i in 0..n {
                    eta[i] = e[i];
                    mu[i] = expit(e[i]);
                }
                if let Some(prev) = &beta {
                    let change = (&next - prev).amax();
                    if change <= REL_TOL * (1.0 + next.amax()) {
                        beta = Some(next);
                        converged = true;
                        break;
                    }
                }
                beta = Some(next);
            }
            let extreme = mu.iter().any(|&m| !(1e-10..=1.0 - 1e-10).contains(&m));
            let separation = !converged || extreme;
            if separation {
                log::warn!("logistic fit shows separation (converged = {converged})");
            }
            Ok(GlmFit {
                family,
                coefficients: beta
                    .expect("at least one iteration")
                    .iter()
                    .copied()
                    .collect(),
                converged,
                iterations,
                separation,
                design_schema: names,
            })
        }
    }
}
