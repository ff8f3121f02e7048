//! Synthetic two-arm survival data with known true RMST contrasts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dataset::{Schema, StudyData, SurvivalRecord};
use crate::error::{Error, Result};
use crate::learners::{expit, LearnerSpec};

/// Draws used when the covariate integral has no quadrature path.
const MC_DRAWS: usize = 1_000_000;
const QUAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CovariateLaw {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
}

impl CovariateLaw {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
            CovariateLaw::Normal { mean, sd } => Normal::new(mean, sd).expect("sd > 0").sample(rng),
            CovariateLaw::Bernoulli { p } => f64::from(rng.random::<f64>() < p),
        }
    }
}

/// Treatment assignment probability g₀(X).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TreatmentMechanism {
    Constant(f64),
    Logistic { intercept: f64, coefs: Vec<f64> },
}

impl TreatmentMechanism {
    pub fn probability(&self, x: &[f64]) -> f64 {
        match self {
            TreatmentMechanism::Constant(p) => *p,
            TreatmentMechanism::Logistic { intercept, coefs } => {
                expit(intercept + coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EventShape {
    Exponential,
    /// S(t) = exp(−(λt)^shape).
    Weibull {
        shape: f64,
    },
}

/// Event-time law with rate `base_rate · exp(coefs·x + treatment_log_ratio·a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventLaw {
    pub shape: EventShape,
    pub base_rate: f64,
    pub coefs: Vec<f64>,
    pub treatment_log_ratio: f64,
}

impl EventLaw {
    pub fn rate(&self, x: &[f64], arm: u8) -> f64 {
        self.base_rate
            * (self.coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
                + self.treatment_log_ratio * f64::from(arm))
            .exp()
    }

    /// E(T ∧ τ | X = x, A = arm).
    pub fn conditional_rmst(&self, x: &[f64], arm: u8, tau: f64) -> f64 {
        let rate = self.rate(x, arm);
        match self.shape {
            EventShape::Exponential => exponential_rmst(rate, tau),
            EventShape::Weibull { shape } => adaptive_simpson(
                &|t: f64| (-(rate * t).powf(shape)).exp(),
                0.0,
                tau,
                QUAD_TOL,
            ),
        }
    }

    pub fn sample<R: Rng>(&self, x: &[f64], arm: u8, rng: &mut R) -> f64 {
        let rate = self.rate(x, arm);
        let e = -(1.0 - rng.random::<f64>()).ln();
        match self.shape {
            EventShape::Exponential => e / rate,
            EventShape::Weibull { shape } => e.powf(1.0 / shape) / rate,
        }
    }
}

/// Exponential censoring with rate `rate · exp(coefs·x + arm_coef·a)`; rate 0 disables censoring.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensoringLaw {
    pub rate: f64,
    pub coefs: Vec<f64>,
    pub arm_coef: f64,
}

impl CensoringLaw {
    pub fn none() -> Self {
        CensoringLaw {
            rate: 0.0,
            coefs: vec![],
            arm_coef: 0.0,
        }
    }

    pub fn rate(&self, x: &[f64], arm: u8) -> f64 {
        self.rate
            * (self.coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
                + self.arm_coef * f64::from(arm))
            .exp()
    }
}

/// Nuisance libraries an analyst would use for this scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalystModels {
    pub q_library: Vec<LearnerSpec>,
    pub g_library: Vec<LearnerSpec>,
}

impl Default for AnalystModels {
    fn default() -> Self {
        AnalystModels {
            q_library: LearnerSpec::default_library(),
            g_library: LearnerSpec::default_library(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimScenario {
    pub name: String,
    pub covariates: Vec<CovariateLaw>,
    pub treatment: TreatmentMechanism,
    pub event: EventLaw,
    pub censoring: CensoringLaw,
    pub tau: f64,
    pub seed: u64,
    pub analyst: AnalystModels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthMethod {
    ClosedForm,
    NumericIntegration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRecord {
    pub theta_true: f64,
    pub mu1_true: f64,
    pub mu0_true: f64,
    pub method: TruthMethod,
}

pub fn exponential_rmst(rate: f64, tau: f64) -> f64 {
    if rate == 0.0 {
        tau
    } else {
        -(-rate * tau).exp_m1() / rate
    }
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        (a, b): (f64, f64),
        (fa, fm, fb): (f64, f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            left + right + diff / 15.0
        } else {
            recurse(f, (a, m), (fa, flm, fm), left, tol / 2.0, depth - 1)
                + recurse(f, (m, b), (fm, frm, fb), right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, (a, b), (fa, fm, fb), whole, tol, 48)
}

impl SimScenario {
    /// Built-in scenarios: `S0` (null RCT), `S1` (confounded), `S1-misQ`
    /// (S1, outcome model without the confounder), `S1-misG` (S1, intercept-only propensity).
    pub fn named(name: &str) -> Result<SimScenario> {
        let confounded_event = EventLaw {
            shape: EventShape::Exponential,
            base_rate: 0.08,
            coefs: vec![0.8],
            treatment_log_ratio: -0.4,
        };
        let censoring = CensoringLaw {
            rate: 0.03,
            coefs: vec![0.0],
            arm_coef: 0.0,
        };
        let s1 = SimScenario {
            name: "S1".into(),
            covariates: vec![CovariateLaw::Uniform { lo: 0.0, hi: 1.0 }],
            treatment: TreatmentMechanism::Logistic {
                intercept: -0.5,
                coefs: vec![1.5],
            },
            event: confounded_event.clone(),
            censoring: censoring.clone(),
            tau: 12.0,
            seed: 1,
            analyst: AnalystModels::default(),
        };
        match name {
            "S0" => Ok(SimScenario {
                name: "S0".into(),
                treatment: TreatmentMechanism::Constant(0.5),
                event: EventLaw {
                    treatment_log_ratio: 0.0,
                    ..confounded_event
                },
                ..s1
            }),
            "S1" => Ok(s1),
            "S1-misQ" => Ok(SimScenario {
                name: "S1-misQ".into(),
                analyst: AnalystModels {
                    q_library: vec![LearnerSpec::GlmTreatment],
                    g_library: vec![LearnerSpec::Glm],
                },
                ..s1
            }),
            "S1-misG" => Ok(SimScenario {
                name: "S1-misG".into(),
                analyst: AnalystModels {
                    q_library: LearnerSpec::default_library(),
                    g_library: vec![LearnerSpec::Mean],
                },
                ..s1
            }),
            other => Err(Error::Domain(format!(
                "unknown scenario `{other}` (expected S0, S1, S1-misQ, S1-misG)"
            ))),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0;
        if !positive(self.tau) || !positive(self.event.base_rate) || self.censoring.rate < 0.0 {
            return Err(Error::Domain("rates and tau must be positive".into()));
        }
        if let EventShape::Weibull { shape } = self.event.shape {
            if !positive(shape) {
                return Err(Error::Domain("Weibull shape must be positive".into()));
            }
        }
        if let TreatmentMechanism::Constant(p) = self.treatment {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain("treatment probability outside [0, 1]".into()));
            }
        }
        Ok(())
    }

    fn continuous_dims(&self) -> usize {
        self.covariates
            .iter()
            .filter(|c| !matches!(c, CovariateLaw::Bernoulli { .. }))
            .count()
    }

    /// E_X f(X). Exact recursion (enumeration of binary covariates, adaptive
    /// quadrature over at most one continuous covariate), else seeded Monte Carlo.
    pub fn marginalize(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        if self.continuous_dims() <= 1 {
            let mut x = vec![0.0; self.covariates.len()];
            self.integrate_from(0, &mut x, f)
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
            let mut acc = 0.0;
            let mut x = vec![0.0; self.covariates.len()];
            for _ in 0..MC_DRAWS {
                for (v, law) in x.iter_mut().zip(&self.covariates) {
                    *v = law.sample(&mut rng);
                }
                acc += f(&x);
            }
            acc / MC_DRAWS as f64
        }
    }

    fn integrate_from(&self, dim: usize, x: &mut Vec<f64>, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        if dim == self.covariates.len() {
            return f(x);
        }
        match self.covariates[dim] {
            CovariateLaw::Bernoulli { p } => {
                x[dim] = 1.0;
                let one = self.integrate_from(dim + 1, x, f);
                x[dim] = 0.0;
                let zero = self.integrate_from(dim + 1, x, f);
                p * one + (1.0 - p) * zero
            }
            CovariateLaw::Uniform { lo, hi } => {
                let inner = |v: f64| {
                    let mut xx = x.clone();
                    xx[dim] = v;
                    self.integrate_from(dim + 1, &mut xx, f)
                };
                adaptive_simpson(&inner, lo, hi, QUAD_TOL) / (hi - lo)
            }
            CovariateLaw::Normal { mean, sd } => {
                let inner = |z: f64| {
                    let mut xx = x.clone();
                    xx[dim] = mean + sd * z;
                    let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                    phi * self.integrate_from(dim + 1, &mut xx, f)
                };
                adaptive_simpson(&inner, -10.0, 10.0, QUAD_TOL)
            }
        }
    }

    /// μ_a = E(T^a ∧ τ), marginal over the covariate law.
    pub fn true_rmst(&self, arm: u8) -> (f64, TruthMethod) {
        let closed = self.covariates.is_empty() && self.event.shape == EventShape::Exponential;
        let mu = self.marginalize(&|x| self.event.conditional_rmst(x, arm, self.tau));
        let method = if closed {
            TruthMethod::ClosedForm
        } else {
            TruthMethod::NumericIntegration
        };
        (mu, method)
    }

    pub fn truth(&self) -> TruthRecord {
        let (mu1, method) = self.true_rmst(1);
        let (mu0, _) = self.true_rmst(0);
        TruthRecord {
            theta_true: mu1 - mu0,
            mu1_true: mu1,
            mu0_true: mu0,
            method,
        }
    }

    /// P(C < T) for exponential events and exponential censoring, marginal over X and A.
    pub fn censoring_probability(&self) -> Option<f64> {
        if self.event.shape != EventShape::Exponential {
            return None;
        }
        Some(self.marginalize(&|x| {
            let g = self.treatment.probability(x);
            let frac = |arm: u8| {
                let c = self.censoring.rate(x, arm);
                let l = self.event.rate(x, arm);
                c / (c + l)
            };
            g * frac(1) + (1.0 - g) * frac(0)
        }))
    }

    pub fn covariate_names(&self) -> Vec<String> {
        (1..=self.covariates.len())
            .map(|j| format!("x{j}"))
            .collect()
    }

    /// Draw `n` subjects; deterministic given the scenario seed.
    pub fn generate_records(&self, n: usize) -> Vec<SurvivalRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|i| {
                let x: Vec<f64> = self.covariates.iter().map(|c| c.sample(&mut rng)).collect();
                let arm = u8::from(rng.random::<f64>() < self.treatment.probability(&x));
                let t = self.event.sample(&x, arm, &mut rng);
                let c_rate = self.censoring.rate(&x, arm);
                let c = if c_rate > 0.0 {
                    -(1.0 - rng.random::<f64>()).ln() / c_rate
                } else {
                    f64::INFINITY
                };
                SurvivalRecord {
                    id: (i + 1).to_string(),
                    arm,
                    time: t.min(c),
                    event: t <= c,
                    covariates: x,
                }
            })
            .collect()
    }

    pub fn generate(&self, n: usize) -> Result<StudyData> {
        self.validate()?;
        if n < 4 {
            return Err(Error::Domain(format!("need n >= 4, got {n}")));
        }
        let records = self.generate_records(n);
        let n1 = records.iter().filter(|r| r.arm == 1).count();
        if n1 < 2 || n - n1 < 2 {
            log::warn!(
                "scenario {} produced a degenerate arm split (n1 = {n1}, n0 = {})",
                self.name,
                n - n1
            );
        }
        StudyData::new(records, Schema::numeric(&self.covariate_names()))
    }

    /// Replicate `index` uses seed `seed + index`.
    pub fn replicate(&self, index: u64) -> SimScenario {
        self.clone().with_seed(self.seed.wrapping_add(index))
    }
}
