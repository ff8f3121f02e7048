//! Cross-validated convex stacking of base learners.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::folds::FoldPlan;
use super::glm::Family;
use super::library::{Features, FittedLearner, LearnerSpec};
use super::nnls::nnls;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleModel {
    pub family: Family,
    pub base_fits: Vec<FittedLearner>,
    /// On the probability simplex, one per retained learner.
    pub weights: Vec<f64>,
    /// Cross-validated mean squared error per retained learner.
    pub cv_risks: Vec<f64>,
    /// Cross-validated mean squared error of the weighted ensemble.
    pub ensemble_cv_risk: f64,
    pub folds: FoldPlan,
    /// Learners dropped from the library and why.
    pub dropped: Vec<(LearnerSpec, String)>,
}

impl EnsembleModel {
    pub fn learners(&self) -> Vec<LearnerSpec> {
        self.base_fits.iter().map(|f| f.spec).collect()
    }

    pub fn predict(&self, features: &Features) -> Result<Vec<f64>> {
        let mut out = vec![0.0; features.nrows()];
        for (fit, &w) in self.base_fits.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(fit.predict(features)?) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// (learner name, weight) pairs for reporting.
    pub fn weight_table(&self) -> Vec<(String, f64)> {
        self.base_fits
            .iter()
            .zip(&self.weights)
            .map(|(f, &w)| (f.spec.name().to_string(), w))
            .collect()
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64
}

/// Out-of-fold predictions for one learner.
fn cross_validate(
    spec: LearnerSpec,
    features: &Features,
    y: &[f64],
    folds: &FoldPlan,
    family: Family,
) -> Result<Vec<f64>> {
    let mut oof = vec![0.0; y.len()];
    for v in 0..folds.folds {
        let (train, valid) = folds.split(v);
        let train_y: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let fit = spec.fit(&features.select_rows(&train), &train_y, family)?;
        let pred = fit.predict(&features.select_rows(&valid))?;
        for (&i, p) in valid.iter().zip(pred) {
            oof[i] = p;
        }
    }
    Ok(oof)
}

/// Fit a super learner.
///
/// Each learner's out-of-fold predictions are stacked with non-negative least
/// squares and the weights normalized to the simplex. If normalization leaves
/// the stack with a higher cross-validated risk than the best single learner
/// (or NNLS returns all zeros), the best learner gets weight 1.
pub fn fit_super_learner(
    features: &Features,
    y: &[f64],
    library: &[LearnerSpec],
    folds: &FoldPlan,
    family: Family,
) -> Result<EnsembleModel> {
    if library.is_empty() {
        return Err(Error::Domain("learner library is empty".into()));
    }
    if folds.folds < 2 {
        return Err(Error::Domain("super learner needs at least 2 folds".into()));
    }
    if folds.len() != y.len() || features.nrows() != y.len() {
        return Err(Error::Domain(
            "fold plan, features and response differ in length".into(),
        ));
    }

    let results: Vec<Result<(Vec<f64>, FittedLearner)>> = library
        .par_iter()
        .map(|&spec| {
            let oof = cross_validate(spec, features, y, folds, family)?;
            let full = spec.fit(features, y, family)?;
            Ok((oof, full))
        })
        .collect();

    let mut dropped = Vec::new();
    let mut oof_cols = Vec::new();
    let mut base_fits = Vec::new();
    for (&spec, r) in library.iter().zip(results) {
        match r {
            Ok((oof, fit)) => {
                oof_cols.push(oof);
                base_fits.push(fit);
            }
            Err(e) => {
                log::warn!("learner {spec} dropped: {e}");
                dropped.push((spec, e.to_string()));
            }
        }
    }
    if base_fits.is_empty() {
        return Err(Error::Estimation(format!(
            "every learner failed: {}",
            dropped
                .iter()
                .map(|(s, e)| format!("{s}: {e}"))
                .collect::<Vec<_>>()
                .join("; ")
        )));
    }

    let cv_risks: Vec<f64> = oof_cols.iter().map(|p| mse(p, y)).collect();
    let k = base_fits.len();
    let best = (0..k)
        .min_by(|&a, &b| cv_risks[a].total_cmp(&cv_risks[b]))
        .expect("nonempty");
    let mut unit = vec![0.0; k];
    unit[best] = 1.0;

    let z = DMatrix::from_fn(y.len(), k, |i, j| oof_cols[j][i]);
    let stack_risk = |w: &[f64]| {
        let pred = &z * DVector::from_column_slice(w);
        mse(pred.as_slice(), y)
    };

    let weights = if k == 1 {
        unit
    } else {
        let raw = nnls(&z, &DVector::from_column_slice(y));
        let total = raw.sum();
        if total > 0.0 {
            let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
            if stack_risk(&w) <= cv_risks[best] {
                w
            } else {
                unit
            }
        } else {
            unit
        }
    };
    let ensemble_cv_risk = stack_risk(&weights);

    Ok(EnsembleModel {
        family,
        base_fits,
        weights,
        cv_risks,
        ensemble_cv_risk,
        folds: folds.clone(),
        dropped,
    })
}
