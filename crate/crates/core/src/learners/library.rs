//! Base learners: GLMs over different expansions of the raw features.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use super::glm::{fit_glm, Family, GlmFit};
use crate::error::{Error, Result};

/// Raw feature matrix shared by every learner in a library.
#[derive(Debug, Clone)]
pub struct Features {
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    /// Column holding the 0/1 treatment indicator, if any.
    pub treatment: Option<usize>,
}

impl Features {
    pub fn new(x: DMatrix<f64>, names: Vec<String>, treatment: Option<usize>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::Domain("one name per feature column required".into()));
        }
        if let Some(t) = treatment {
            if t >= x.ncols() {
                return Err(Error::Domain("treatment column out of range".into()));
            }
        }
        Ok(Features {
            x,
            names,
            treatment,
        })
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Features {
        Features {
            x: self.x.select_rows(rows),
            names: self.names.clone(),
            treatment: self.treatment,
        }
    }

    /// Copy with the treatment column set to `value` for every row.
    pub fn with_treatment(&self, value: f64) -> Features {
        let mut out = self.clone();
        if let Some(t) = self.treatment {
            out.x.column_mut(t).fill(value);
        }
        out
    }

    fn is_binary(&self, j: usize) -> bool {
        self.x.column(j).iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSpec {
    /// Intercept only.
    Mean,
    /// Main effects of every feature.
    Glm,
    /// Main effects plus treatment × covariate products.
    GlmInteract,
    /// Main effects plus squares of the non-binary covariates.
    GlmSquares,
    /// Intercept and treatment indicator only; ignores covariates.
    GlmTreatment,
}

impl LearnerSpec {
    pub const ALL: [LearnerSpec; 5] = [
        LearnerSpec::Mean,
        LearnerSpec::Glm,
        LearnerSpec::GlmInteract,
        LearnerSpec::GlmSquares,
        LearnerSpec::GlmTreatment,
    ];

    pub fn default_library() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::Mean,
            LearnerSpec::Glm,
            LearnerSpec::GlmInteract,
            LearnerSpec::GlmSquares,
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnerSpec::Mean => "mean",
            LearnerSpec::Glm => "glm",
            LearnerSpec::GlmInteract => "glm_interact",
            LearnerSpec::GlmSquares => "glm_sq",
            LearnerSpec::GlmTreatment => "glm_trt",
        }
    }

    /// Parse a comma-separated list such as `mean,glm,glm_sq`.
    pub fn parse_list(s: &str) -> Result<Vec<LearnerSpec>> {
        let list = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if list.is_empty() {
            return Err(Error::Domain("learner library is empty".into()));
        }
        Ok(list)
    }

    /// Fit this learner on `features`.
    pub fn fit(self, features: &Features, y: &[f64], family: Family) -> Result<FittedLearner> {
        let expansion = Expansion::plan(self, features);
        let (design, names) = expansion.design(features);
        let glm = fit_glm(&design, y, family, names)?;
        Ok(FittedLearner {
            spec: self,
            expansion,
            glm,
        })
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LearnerSpec::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown learner `{s}` (expected one of: {})",
                    LearnerSpec::ALL.map(LearnerSpec::name).join(", ")
                ))
            })
    }
}

/// Feature map fixed on the training rows: which raw columns are used,
/// their centering/scaling, and which get squared or interacted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expansion {
    columns: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    squared: Vec<usize>,
    interact: bool,
    treatment: Option<usize>,
    n_features: usize,
}

impl Expansion {
    fn plan(spec: LearnerSpec, f: &Features) -> Expansion {
        let p = f.x.ncols();
        let n = f.nrows().max(1) as f64;
        // Covariates that vary on the training rows; constant ones carry no information.
        let covariates: Vec<usize> = (0..p)
            .filter(|&j| Some(j) != f.treatment)
            .filter(|&j| {
                let c = f.x.column(j);
                c.iter().any(|&v| v != c[0])
            })
            .collect();
        let treatment = f.treatment.filter(|&t| {
            let c = f.x.column(t);
            c.iter().any(|&v| v != c[0])
        });
        let columns: Vec<usize> = match spec {
            LearnerSpec::Mean => vec![],
            LearnerSpec::GlmTreatment => treatment.into_iter().collect(),
            _ => treatment
                .into_iter()
                .chain(covariates.iter().copied())
                .collect(),
        };
        let mut center = Vec::with_capacity(columns.len());
        let mut scale = Vec::with_capacity(columns.len());
        for &j in &columns {
            if Some(j) == treatment {
                center.push(0.0);
                scale.push(1.0);
            } else {
                let c = f.x.column(j);
                let m = c.sum() / n;
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                center.push(m);
                scale.push(if sd > 0.0 { sd } else { 1.0 });
            }
        }
        let squared = if spec == LearnerSpec::GlmSquares {
            covariates
                .iter()
                .copied()
                .filter(|&j| !f.is_binary(j))
                .collect()
        } else {
            vec![]
        };
        Expansion {
            columns,
            center,
            scale,
            squared,
            interact: spec == LearnerSpec::GlmInteract && treatment.is_some(),
            treatment,
            n_features: p,
        }
    }

    fn design(&self, f: &Features) -> (DMatrix<f64>, Vec<String>) {
        let n = f.nrows();
        let mut names = vec!["(intercept)".to_string()];
        let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
        let standardized = |k: usize| -> Vec<f64> {
            let j = self.columns[k];
            f.x.column(j)
                .iter()
                .map(|&v| (v - self.center[k]) / self.scale[k])
                .collect()
        };
        for (k, &j) in self.columns.iter().enumerate() {
            names.push(f.names[j].clone());
            cols.push(standardized(k));
        }
        for &j in &self.squared {
            let k = self
                .columns
                .iter()
                .position(|&c| c == j)
                .expect("squared column is used");
            names.push(format!("{}^2", f.names[j]));
            cols.push(standardized(k).into_iter().map(|v| v * v).collect());
        }
        if self.interact {
            let t = self
                .treatment
                .expect("interaction needs a treatment column");
            for (k, &j) in self.columns.iter().enumerate() {
                if j == t {
                    continue;
                }
                names.push(format!("{}:{}", f.names[t], f.names[j]));
                let z = standardized(k);
                cols.push(f.x.column(t).iter().zip(z).map(|(a, v)| a * v).collect());
            }
        }
        let design = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
        (design, names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedLearner {
    pub spec: LearnerSpec,
    pub expansion: Expansion,
    pub glm: GlmFit,
}

impl FittedLearner {
    pub fn predict(&self, features: &Features) -> Result<Vec<f64>> {
        if features.x.ncols() != self.expansion.n_features {
            return Err(Error::Domain(format!(
                "features have {} columns, learner was fitted on {}",
                features.x.ncols(),
                self.expansion.n_features
            )));
        }
        let (design, _) = self.expansion.design(features);
        self.glm.predict(&design)
    }
}
