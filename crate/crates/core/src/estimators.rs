//! Treatment-effect estimators on a pseudo-observation dataset.
//!
//! Every estimator treats the pseudo-values as independent outcomes and returns
//! an [`EstimateReport`] with a Wald 95% interval and a two-sided normal
//! p-value. AIPTW and TMLE are the usual average-treatment-effect estimators
//! with the pseudo-value standing in for the outcome.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::learners::{
    expit, fit_glm, fit_super_learner, logit, EnsembleModel, Family, Features, FoldPlan,
    LearnerSpec,
};
use crate::pseudo::{jackknife_mean, jackknife_variance, PseudoDataset};

const Z_975: f64 = 1.96;
/// Bounds for the initial outcome fit on the [0, 1] scale.
const Q_CLIP: (f64, f64) = (0.005, 0.995);
const FLUCTUATION_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unadjusted,
    Gee,
    Aiptw,
    Tmle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Unadjusted, Method::Gee, Method::Aiptw, Method::Tmle];

    pub fn name(self) -> &'static str {
        match self {
            Method::Unadjusted => "unadjusted",
            Method::Gee => "gee",
            Method::Aiptw => "aiptw",
            Method::Tmle => "tmle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method `{s}`")))
    }
}

/// How the propensity and outcome nuisances are fitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisanceConfig {
    /// Library for the outcome regression Q̄(A, X).
    pub q_library: Vec<LearnerSpec>,
    /// Library for the propensity score g(X).
    pub g_library: Vec<LearnerSpec>,
    pub folds: usize,
    /// Propensity truncation bounds.
    pub g_bounds: (f64, f64),
    pub seed: u64,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            q_library: LearnerSpec::default_library(),
            g_library: LearnerSpec::default_library(),
            folds: 10,
            g_bounds: (0.025, 0.975),
            seed: 1,
        }
    }
}

impl NuisanceConfig {
    /// Main-effects GLMs for both nuisances.
    pub fn glm() -> Self {
        NuisanceConfig {
            q_library: vec![LearnerSpec::Glm],
            g_library: vec![LearnerSpec::Glm],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.g_bounds;
        if !(lo > 0.0 && lo < 0.5 && hi > 0.5 && hi < 1.0) {
            return Err(Error::Domain(format!(
                "g bounds must lie in (0, 0.5) x (0.5, 1), got ({lo}, {hi})"
            )));
        }
        if self.folds < 2 {
            return Err(Error::Domain("need at least 2 folds".into()));
        }
        if self.q_library.is_empty() || self.g_library.is_empty() {
            return Err(Error::Domain("learner library is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnerWeight {
    pub learner: String,
    pub weight: f64,
    pub cv_risk: f64,
}

fn weight_table(model: &EnsembleModel) -> Vec<LearnerWeight> {
    model
        .base_fits
        .iter()
        .zip(&model.weights)
        .zip(&model.cv_risks)
        .map(|((f, &weight), &cv_risk)| LearnerWeight {
            learner: f.spec.name().to_string(),
            weight,
            cv_risk,
        })
        .collect()
}

/// Settings echoed into every adjusted report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub q_learners: Vec<String>,
    pub g_learners: Vec<String>,
    pub folds: usize,
    pub g_bounds: (f64, f64),
    pub seed: u64,
}

impl From<&NuisanceConfig> for ConfigEcho {
    fn from(c: &NuisanceConfig) -> Self {
        ConfigEcho {
            q_learners: c.q_library.iter().map(|l| l.name().to_string()).collect(),
            g_learners: c.g_library.iter().map(|l| l.name().to_string()).collect(),
            folds: c.folds,
            g_bounds: c.g_bounds,
            seed: c.seed,
        }
    }
}

/// Estimator-specific details. Fields that do not apply are `null` in JSON.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub g_min: Option<f64>,
    pub g_max: Option<f64>,
    pub g_truncated: Option<usize>,
    pub epsilon: Option<f64>,
    /// Mean of H(A,X)·(P_scaled − Q̄*(A,X)) after the fluctuation.
    pub score_mean: Option<f64>,
    pub scaling_bounds: Option<(f64, f64)>,
    pub q_weights: Option<Vec<LearnerWeight>>,
    pub g_weights: Option<Vec<LearnerWeight>>,
    pub config: Option<ConfigEcho>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub tau: f64,
    pub estimate: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n0: usize,
    pub diagnostics: Diagnostics,
}

/// Two-sided normal tail probability of `estimate / se`.
pub fn two_sided_p(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        erfc((estimate / se).abs() / std::f64::consts::SQRT_2)
    } else if estimate == 0.0 {
        1.0
    } else {
        0.0
    }
}

impl EstimateReport {
    pub fn new(
        method: Method,
        po: &PseudoDataset,
        estimate: f64,
        se: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        EstimateReport {
            method,
            tau: po.tau,
            estimate,
            se,
            ci_low: estimate - Z_975 * se,
            ci_high: estimate + Z_975 * se,
            p_value: two_sided_p(estimate, se),
            n1: po.n1(),
            n0: po.n0(),
            diagnostics,
        }
    }
}

fn check_arms(po: &PseudoDataset) -> Result<()> {
    let (n1, n0) = (po.n1(), po.n0());
    if n1 == 0 || n0 == 0 {
        return Err(Error::Estimation(format!(
            "both arms must be present (n1 = {n1}, n0 = {n0})"
        )));
    }
    Ok(())
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Difference of per-arm jackknife means; variance is the sum of the per-arm
/// jackknife variances.
pub fn estimate_unadjusted(po: &PseudoDataset) -> Result<EstimateReport> {
    check_arms(po)?;
    let p1 = po.arm_pseudo_values(1);
    let p0 = po.arm_pseudo_values(0);
    if p1.len() < 2 || p0.len() < 2 {
        return Err(Error::Estimation(
            "each arm needs at least 2 subjects".into(),
        ));
    }
    let estimate = jackknife_mean(&p1) - jackknife_mean(&p0);
    let se = (jackknife_variance(&p1) + jackknife_variance(&p0)).sqrt();
    Ok(EstimateReport::new(
        Method::Unadjusted,
        po,
        estimate,
        se,
        Diagnostics::default(),
    ))
}

fn gee_design(po: &PseudoDataset) -> (DMatrix<f64>, Vec<String>) {
    let p = po.covariate_names.len();
    let design = DMatrix::from_fn(po.len(), p + 2, |i, j| match j {
        0 => 1.0,
        1 => f64::from(po.rows[i].arm),
        _ => po.rows[i].covariates[j - 2],
    });
    let mut names = vec!["(intercept)".to_string(), "arm".to_string()];
    names.extend(po.covariate_names.iter().cloned());
    (design, names)
}

/// Linear regression of P on (1, A, X); the arm coefficient with a
/// heteroskedasticity-robust sandwich variance (independence working model).
pub fn estimate_gee(po: &PseudoDataset) -> Result<EstimateReport> {
    check_arms(po)?;
    let (x, names) = gee_design(po);
    let y = po.pseudo_values();
    let fit = fit_glm(&x, &y, Family::GaussianIdentity, names)?;
    let beta = DVector::from_column_slice(&fit.coefficients);
    let resid = DVector::from_column_slice(&y) - &x * &beta;

    let bread = (x.transpose() * &x)
        .try_inverse()
        .ok_or_else(|| Error::Estimation("X'X not invertible".into()))?;
    let mut meat = DMatrix::<f64>::zeros(x.ncols(), x.ncols());
    for (i, row) in x.row_iter().enumerate() {
        let r = row.transpose();
        meat += (&r * r.transpose()) * (resid[i] * resid[i]);
    }
    let cov = &bread * meat * &bread;
    let se = cov[(1, 1)].max(0.0).sqrt();
    Ok(EstimateReport::new(
        Method::Gee,
        po,
        beta[1],
        se,
        Diagnostics::default(),
    ))
}

/// Fitted nuisances: truncated propensities and outcome predictions under both arms.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub g: Vec<f64>,
    pub g_truncated: usize,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
    pub q_model: EnsembleModel,
    pub g_model: EnsembleModel,
    pub warnings: Vec<String>,
}

fn outcome_features(po: &PseudoDataset) -> Result<Features> {
    let p = po.covariate_names.len();
    let x = DMatrix::from_fn(po.len(), p + 1, |i, j| {
        if j == 0 {
            f64::from(po.rows[i].arm)
        } else {
            po.rows[i].covariates[j - 1]
        }
    });
    let mut names = vec!["arm".to_string()];
    names.extend(po.covariate_names.iter().cloned());
    Features::new(x, names, Some(0))
}

fn propensity_features(po: &PseudoDataset) -> Result<Features> {
    let p = po.covariate_names.len();
    let x = DMatrix::from_fn(po.len(), p, |i, j| po.rows[i].covariates[j]);
    Features::new(x, po.covariate_names.clone(), None)
}

/// Fit g(X) = P(A = 1 | X) and Q̄(A, X) = E(y | A, X) with super learners
/// sharing one arm-stratified fold plan.
pub fn fit_nuisance(po: &PseudoDataset, y: &[f64], config: &NuisanceConfig) -> Result<NuisanceFit> {
    config.validate()?;
    let arms: Vec<u8> = po.rows.iter().map(|r| r.arm).collect();
    let plan = FoldPlan::stratified(&arms, config.folds, config.seed)?;

    let a: Vec<f64> = arms.iter().map(|&a| f64::from(a)).collect();
    let g_features = propensity_features(po)?;
    let g_model = fit_super_learner(
        &g_features,
        &a,
        &config.g_library,
        &plan,
        Family::BinomialLogit,
    )?;
    let g_raw = g_model.predict(&g_features)?;

    let q_features = outcome_features(po)?;
    let q_model = fit_super_learner(
        &q_features,
        y,
        &config.q_library,
        &plan,
        Family::GaussianIdentity,
    )?;
    let q1 = q_model.predict(&q_features.with_treatment(1.0))?;
    let q0 = q_model.predict(&q_features.with_treatment(0.0))?;

    let (lo, hi) = config.g_bounds;
    let mut warnings = Vec::new();
    let below = g_raw.iter().filter(|&&g| g < lo).count();
    let above = g_raw.iter().filter(|&&g| g > hi).count();
    if below == g_raw.len() || above == g_raw.len() {
        warnings.push(format!(
            "every propensity score truncated at {}",
            if below == g_raw.len() { lo } else { hi }
        ));
    }
    for (spec, why) in q_model.dropped.iter().chain(&g_model.dropped) {
        warnings.push(format!("learner {spec} dropped: {why}"));
    }
    let g = g_raw.iter().map(|&g| g.clamp(lo, hi)).collect();
    Ok(NuisanceFit {
        g,
        g_truncated: below + above,
        q1,
        q0,
        q_model,
        g_model,
        warnings,
    })
}

fn nuisance_diagnostics(fit: &NuisanceFit, config: &NuisanceConfig) -> Diagnostics {
    Diagnostics {
        g_min: fit.g.iter().copied().reduce(f64::min),
        g_max: fit.g.iter().copied().reduce(f64::max),
        g_truncated: Some(fit.g_truncated),
        q_weights: Some(weight_table(&fit.q_model)),
        g_weights: Some(weight_table(&fit.g_model)),
        config: Some(config.into()),
        warnings: fit.warnings.clone(),
        ..Default::default()
    }
}

/// AIPTW point estimate and influence-function standard error from given
/// nuisance values.
pub fn aiptw_from_nuisance(
    arms: &[u8],
    y: &[f64],
    g: &[f64],
    q1: &[f64],
    q0: &[f64],
) -> (f64, f64) {
    let phi: Vec<f64> = (0..y.len())
        .map(|i| {
            let a = f64::from(arms[i]);
            a / g[i] * (y[i] - q1[i]) + q1[i] - ((1.0 - a) / (1.0 - g[i]) * (y[i] - q0[i]) + q0[i])
        })
        .collect();
    let n = phi.len() as f64;
    let psi = phi.iter().sum::<f64>() / n;
    (psi, sample_sd(&phi) / n.sqrt())
}

pub fn estimate_aiptw(po: &PseudoDataset, config: &NuisanceConfig) -> Result<EstimateReport> {
    check_arms(po)?;
    let y = po.pseudo_values();
    let fit = fit_nuisance(po, &y, config)?;
    let arms: Vec<u8> = po.rows.iter().map(|r| r.arm).collect();
    let (psi, se) = aiptw_from_nuisance(&arms, &y, &fit.g, &fit.q1, &fit.q0);
    Ok(EstimateReport::new(
        Method::Aiptw,
        po,
        psi,
        se,
        nuisance_diagnostics(&fit, config),
    ))
}

/// Result of the targeting step on the [0, 1] scale, mapped back to days.
#[derive(Debug, Clone, PartialEq)]
pub struct TmleFit {
    pub estimate: f64,
    pub se: f64,
    pub epsilon: f64,
    pub score_mean: f64,
    pub q1_star: Vec<f64>,
    pub q0_star: Vec<f64>,
}

fn clever_covariate(a: u8, g: f64) -> f64 {
    if a == 1 {
        1.0 / g
    } else {
        -1.0 / (1.0 - g)
    }
}

/// Solve Σ hᵢ·(yᵢ − expit(oᵢ + ε·hᵢ)) = 0 for ε by safeguarded Newton.
/// The left side is strictly decreasing in ε.
pub fn solve_fluctuation(y: &[f64], offset: &[f64], h: &[f64]) -> Result<f64> {
    let n = y.len() as f64;
    let score = |eps: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for i in 0..y.len() {
            let p = expit(offset[i] + eps * h[i]);
            f += h[i] * (y[i] - p);
            df -= h[i] * h[i] * p * (1.0 - p);
        }
        (f, df)
    };
    let tol = 1e-13;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut eps = 0.0;
    for _ in 0..FLUCTUATION_MAX_ITER {
        let (f, df) = score(eps);
        if (f / n).abs() < tol {
            return Ok(eps);
        }
        if f > 0.0 {
            lo = eps;
        } else {
            hi = eps;
        }
        let mut next = if df < 0.0 { eps - f / df } else { f64::NAN };
        if !(next.is_finite() && next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + (lo.abs() + 1.0),
                (false, true) => hi - (hi.abs() + 1.0),
                (false, false) => unreachable!("one bound is always set"),
            };
        }
        if lo.is_finite() && hi.is_finite() && (hi - lo) < 1e-15 * (1.0 + eps.abs()) {
            return Ok(next);
        }
        eps = next;
    }
    let (f, _) = score(eps);
    if (f / n).abs() < 1e-9 {
        return Ok(eps);
    }
    Err(Error::Estimation(format!(
        "TMLE fluctuation did not converge: epsilon = {eps}, mean score = {}",
        f / n
    )))
}

/// Targeting step given nuisances: `q1`/`q0` are initial outcome predictions on
/// the [0, 1] scale (clipped here), `g` truncated propensities, and `bounds` the
/// affine map between days and the [0, 1] scale.
pub fn tmle_from_nuisance(
    arms: &[u8],
    y: &[f64],
    g: &[f64],
    q1: &[f64],
    q0: &[f64],
    bounds: (f64, f64),
) -> Result<TmleFit> {
    let (lo, hi) = bounds;
    let range = hi - lo;
    let n = y.len();
    let y_scaled: Vec<f64> = y.iter().map(|v| (v - lo) / range).collect();
    let clip = |q: f64| q.clamp(Q_CLIP.0, Q_CLIP.1);
    let q1: Vec<f64> = q1.iter().map(|&q| clip(q)).collect();
    let q0: Vec<f64> = q0.iter().map(|&q| clip(q)).collect();

    let h: Vec<f64> = (0..n).map(|i| clever_covariate(arms[i], g[i])).collect();
    let offset: Vec<f64> = (0..n)
        .map(|i| logit(if arms[i] == 1 { q1[i] } else { q0[i] }))
        .collect();
    let epsilon = solve_fluctuation(&y_scaled, &offset, &h)?;

    let q1_star: Vec<f64> = (0..n)
        .map(|i| expit(logit(q1[i]) + epsilon / g[i]))
        .collect();
    let q0_star: Vec<f64> = (0..n)
        .map(|i| expit(logit(q0[i]) - epsilon / (1.0 - g[i])))
        .collect();
    let qa_star = |i: usize| if arms[i] == 1 { q1_star[i] } else { q0_star[i] };
    let score_mean = (0..n)
        .map(|i| h[i] * (y_scaled[i] - qa_star(i)))
        .sum::<f64>()
        / n as f64;

    let psi_scaled = (0..n).map(|i| q1_star[i] - q0_star[i]).sum::<f64>() / n as f64;
    let estimate = range * psi_scaled;
    let to_days = |q: f64| lo + range * q;
    let eif: Vec<f64> = (0..n)
        .map(|i| {
            h[i] * (y[i] - to_days(qa_star(i))) + to_days(q1_star[i])
                - to_days(q0_star[i])
                - estimate
        })
        .collect();
    let se = sample_sd(&eif) / (n as f64).sqrt();
    Ok(TmleFit {
        estimate,
        se,
        epsilon,
        score_mean,
        q1_star,
        q0_star,
    })
}

/// TMLE: pseudo-values rescaled to [0, 1] by their observed range, super-learner
/// initial fits, one logistic fluctuation along the clever covariate, and an
/// efficient-influence-function standard error on the original scale.
pub fn estimate_tmle(po: &PseudoDataset, config: &NuisanceConfig) -> Result<EstimateReport> {
    check_arms(po)?;
    let y = po.pseudo_values();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        // Constant outcome: no contrast to estimate.
        let diagnostics = Diagnostics {
            config: Some(config.into()),
            warnings: vec!["pseudo-values are constant".into()],
            ..Default::default()
        };
        return Ok(EstimateReport::new(Method::Tmle, po, 0.0, 0.0, diagnostics));
    }
    let y_scaled: Vec<f64> = y.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let fit = fit_nuisance(po, &y_scaled, config)?;
    let arms: Vec<u8> = po.rows.iter().map(|r| r.arm).collect();
    let t = tmle_from_nuisance(&arms, &y, &fit.g, &fit.q1, &fit.q0, (lo, hi))?;
    let mut diagnostics = nuisance_diagnostics(&fit, config);
    diagnostics.epsilon = Some(t.epsilon);
    diagnostics.score_mean = Some(t.score_mean);
    diagnostics.scaling_bounds = Some((lo, hi));
    Ok(EstimateReport::new(
        Method::Tmle,
        po,
        t.estimate,
        t.se,
        diagnostics,
    ))
}

/// Run `method` on `po`. The nuisance configuration is ignored by the
/// unadjusted and GEE estimators.
pub fn estimate(
    po: &PseudoDataset,
    method: Method,
    config: &NuisanceConfig,
) -> Result<EstimateReport> {
    match method {
        Method::Unadjusted => estimate_unadjusted(po),
        Method::Gee => estimate_gee(po),
        Method::Aiptw => estimate_aiptw(po, config),
        Method::Tmle => estimate_tmle(po, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn po(arms: &[u8], p: &[f64], x: Vec<Vec<f64>>, names: &[&str]) -> PseudoDataset {
        PseudoDataset::from_parts(
            arms,
            p,
            x,
            names.iter().map(|s| s.to_string()).collect(),
            10.0,
        )
    }

    fn assert_report_invariants(r: &EstimateReport) {
        assert_eq!(r.ci_low, r.estimate - 1.96 * r.se);
        assert_eq!(r.ci_high, r.estimate + 1.96 * r.se);
        assert_eq!(r.p_value, two_sided_p(r.estimate, r.se));
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn unadjusted_hand_example() {
        let d = po(&[1, 1, 0, 0], &[2.0, 4.0, 1.0, 1.0], vec![vec![]; 4], &[]);
        let r = estimate_unadjusted(&d).unwrap();
        assert_eq!(r.estimate, 2.0);
        assert!((r.se - 1.0).abs() < 1e-15);
        assert_report_invariants(&r);

        let c = po(&[1, 1, 0, 0], &[3.0; 4], vec![vec![]; 4], &[]);
        let r = estimate_unadjusted(&c).unwrap();
        assert_eq!((r.estimate, r.se, r.p_value), (0.0, 0.0, 1.0));
    }

    #[test]
    fn p_value_matches_normal_tail() {
        // 2·(1 − Φ(1.96)) = 0.04999579...
        assert!((two_sided_p(1.96, 1.0) - 0.049_995_790_296_440_9).abs() < 1e-10);
        assert_eq!(two_sided_p(0.0, 2.0), 1.0);
        assert_eq!(two_sided_p(1.0, 0.0), 0.0);
    }

    #[test]
    fn gee_without_covariates_is_difference_in_means() {
        let arms = [1, 1, 1, 0, 0, 0, 0];
        let p = [5.0, 7.0, 6.5, 1.0, 2.0, 4.0, 3.5];
        let d = po(&arms, &p, vec![vec![]; 7], &[]);
        let g = estimate_gee(&d).unwrap();
        let u = estimate_unadjusted(&d).unwrap();
        assert!((g.estimate - u.estimate).abs() < 1e-12);
        assert_report_invariants(&g);
    }

    #[test]
    fn gee_exact_linear_fit() {
        let x: Vec<f64> = vec![0.1, 0.5, 0.9, 1.3, 0.2, 0.7, 1.1, 0.4];
        let arms = [1, 1, 1, 1, 0, 0, 0, 0];
        let p: Vec<f64> = (0..8)
            .map(|i| 3.0 + 5.0 * f64::from(arms[i]) - 2.0 * x[i])
            .collect();
        let d = po(&arms, &p, x.iter().map(|&v| vec![v]).collect(), &["x"]);
        let r = estimate_gee(&d).unwrap();
        assert!((r.estimate - 5.0).abs() < 1e-10);
        assert!(r.se < 1e-10);
    }

    #[test]
    fn gee_rank_deficiency_errors() {
        let arms = [1, 1, 0, 0];
        let x = vec![vec![1.0], vec![1.0], vec![0.0], vec![0.0]];
        let d = po(&arms, &[1.0, 2.0, 3.0, 4.0], x, &["copy_of_arm"]);
        assert!(matches!(estimate_gee(&d), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn aiptw_with_zero_outcome_model_is_horvitz_thompson() {
        let arms = [1, 0, 1, 0, 1, 1];
        let y = [3.0, 1.0, 4.0, 2.0, 5.0, 2.5];
        let g = [0.6; 6];
        let zeros = [0.0; 6];
        let (psi, _) = aiptw_from_nuisance(&arms, &y, &g, &zeros, &zeros);
        let n = 6.0;
        let ht = arms
            .iter()
            .zip(&y)
            .map(|(&a, &v)| if a == 1 { v / 0.6 } else { -v / 0.4 })
            .sum::<f64>()
            / n;
        assert!((psi - ht).abs() < 1e-12);
    }

    #[test]
    fn aiptw_with_perfect_outcome_model_ignores_propensity() {
        let arms = [1, 0, 1, 0, 1, 0];
        let x = [0.1, 0.2, 0.5, 0.7, 0.9, 0.3];
        let q1: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v + 1.5).collect();
        let q0: Vec<f64> = x.iter().map(|v| 2.0 + 3.0 * v).collect();
        let y: Vec<f64> = (0..6)
            .map(|i| if arms[i] == 1 { q1[i] } else { q0[i] })
            .collect();
        let g = [0.2, 0.9, 0.33, 0.5, 0.7, 0.1];
        let (psi, se) = aiptw_from_nuisance(&arms, &y, &g, &q1, &q0);
        assert!((psi - 1.5).abs() < 1e-12);
        assert!(se < 1e-12);
    }

    #[test]
    fn fluctuation_is_zero_at_fixed_point() {
        // Group-mean outcome model with a constant propensity already solves the score equation.
        let arms = [1, 1, 1, 0, 0, 0, 0, 1];
        let y = [0.2, 0.6, 1.0, 0.0, 0.3, 0.5, 0.4, 0.8];
        let m1 = (0.2 + 0.6 + 1.0 + 0.8) / 4.0;
        let m0 = (0.0 + 0.3 + 0.5 + 0.4) / 4.0;
        let t = tmle_from_nuisance(&arms, &y, &[0.5; 8], &[m1; 8], &[m0; 8], (0.0, 1.0)).unwrap();
        assert!(t.epsilon.abs() < 1e-12);
        assert!((t.estimate - (m1 - m0)).abs() < 1e-12);
    }

    #[test]
    fn fluctuation_solves_score_equation() {
        let arms = [1, 0, 1, 0, 1, 0, 1, 1, 0, 0];
        let y = [0.9, 0.1, 0.7, 0.3, 1.0, 0.0, 0.4, 0.8, 0.6, 0.2];
        let g = [0.3, 0.6, 0.5, 0.2, 0.7, 0.4, 0.55, 0.35, 0.65, 0.45];
        let t = tmle_from_nuisance(&arms, &y, &g, &[0.4; 10], &[0.6; 10], (0.0, 1.0)).unwrap();
        assert!(t.score_mean.abs() < 1e-10, "{}", t.score_mean);
        assert!(t.epsilon != 0.0);
    }

    #[test]
    fn report_round_trips_through_json_field_names() {
        let d = po(&[1, 1, 0, 0], &[2.0, 4.0, 1.0, 1.0], vec![vec![]; 4], &[]);
        let r = estimate_unadjusted(&d).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expect = vec![
            "method",
            "tau",
            "estimate",
            "se",
            "ci_low",
            "ci_high",
            "p_value",
            "n1",
            "n0",
            "diagnostics",
        ];
        expect.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expect);
        assert_eq!(v["method"], "unadjusted");
    }
}
