//! Jackknife pseudo-observations for the restricted mean survival time.
//!
//! The generic construction is [`jackknife_pseudo`]: for a functional `m` and a
//! sample of size `n`, the i-th pseudo-value is `n·m(all) − (n−1)·m(all but i)`.
//! [`rmst_pseudo_naive`] applies it literally to Kaplan–Meier RMST (O(n²));
//! [`rmst_pseudo_fast`] produces the same values in O(n log n) from risk-set
//! prefix/suffix quantities and is what the pipeline uses. The naive path is
//! kept as the reference the fast path is tested against.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{split_by_arm, StudyData, SurvivalRecord};
use crate::error::{Error, Result};
use crate::survival::{kaplan_meier, rmst};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Main,
    CopyReference,
}

/// One subject with its pseudo-observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoRow {
    pub id: String,
    pub covariates: Vec<f64>,
    pub arm: u8,
    pub pseudo: f64,
    pub event: bool,
    pub time: f64,
}

/// The merged table of pseudo-observations every estimator consumes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PseudoDataset {
    pub rows: Vec<PseudoRow>,
    pub covariate_names: Vec<String>,
    pub tau: f64,
    pub provenance: Provenance,
}

impl PseudoDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n1(&self) -> usize {
        self.rows.iter().filter(|r| r.arm == 1).count()
    }

    pub fn n0(&self) -> usize {
        self.rows.iter().filter(|r| r.arm == 0).count()
    }

    pub fn pseudo_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.pseudo).collect()
    }

    pub fn arm_pseudo_values(&self, arm: u8) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| r.pseudo)
            .collect()
    }

    /// Build a dataset directly from pseudo-values (used by tests and synthetic checks).
    pub fn from_parts(
        arms: &[u8],
        pseudo: &[f64],
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
        tau: f64,
    ) -> Self {
        let rows = arms
            .iter()
            .zip(pseudo)
            .zip(covariates)
            .enumerate()
            .map(|(i, ((&arm, &p), x))| PseudoRow {
                id: (i + 1).to_string(),
                covariates: x,
                arm,
                pseudo: p,
                event: true,
                time: 1.0,
            })
            .collect();
        PseudoDataset {
            rows,
            covariate_names,
            tau,
            provenance: Provenance::Main,
        }
    }
}

/// Tukey pseudo-values `n·m(sample) − (n−1)·m(sample without i)`.
///
/// Each value is computed independently, so the parallel evaluation is
/// bit-identical to a sequential one.
pub fn jackknife_pseudo<T, F>(sample: &[T], functional: F) -> Result<Vec<f64>>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    let n = sample.len();
    if n < 2 {
        return Err(Error::Domain(format!("jackknife needs n >= 2, got {n}")));
    }
    let full = functional(sample)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut loo = Vec::with_capacity(n - 1);
            loo.extend_from_slice(&sample[..i]);
            loo.extend_from_slice(&sample[i + 1..]);
            let m = functional(&loo).map_err(|e| match e {
                e @ Error::TauSupport { .. } => {
                    e.with_tau_context(format!("leave-one-out index {i}"))
                }
                e => Error::Estimation(format!("leave-one-out index {i}: {e}")),
            })?;
            Ok(n as f64 * full - (n - 1) as f64 * m)
        })
        .collect()
}

/// Reference RMST pseudo-values: a full Kaplan–Meier refit per left-out subject.
pub fn rmst_pseudo_naive(times: &[f64], events: &[bool], tau: f64) -> Result<Vec<f64>> {
    if times.len() != events.len() {
        return Err(Error::Domain("times and events differ in length".into()));
    }
    let sample: Vec<(f64, bool)> = times.iter().copied().zip(events.iter().copied()).collect();
    jackknife_pseudo(&sample, |s: &[(f64, bool)]| {
        let (t, e): (Vec<f64>, Vec<bool>) = s.iter().copied().unzip();
        Ok(rmst(&kaplan_meier(&t, &e)?, tau)?.value)
    })
}

/// RMST pseudo-values in O(n log n).
///
/// With distinct times `t_k`, risk sets `r_k`, event counts `d_k` and interval
/// widths `w_k` (clipped at τ), removing a subject observed at `t_j` only
/// shrinks the risk sets at or before `t_j`. The leave-one-out area is then a
/// prefix sum over `k < j` of `w_k·Π(1 − d_m/(r_m − 1))`, times a suffix term
/// `T_j = w_j + h_{j+1}·T_{j+1}` with `h_m = 1 − d_m/r_m`.
pub fn rmst_pseudo_fast(times: &[f64], events: &[bool], tau: f64) -> Result<Vec<f64>> {
    let n = times.len();
    if n != events.len() {
        return Err(Error::Domain("times and events differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Domain(format!("jackknife needs n >= 2, got {n}")));
    }
    let curve = kaplan_meier(times, events)?;
    let full = rmst(&curve, tau)?.value;

    let k_len = curve.times.len();
    let t = &curve.times;
    let r = &curve.at_risk;
    let d = &curve.events;
    let count: Vec<usize> = (0..k_len)
        .map(|k| r[k] - if k + 1 < k_len { r[k + 1] } else { 0 })
        .collect();

    let w_pre = t[0].min(tau);
    let w: Vec<f64> = (0..k_len)
        .map(|k| {
            let hi = if k + 1 < k_len {
                t[k + 1].min(tau)
            } else {
                tau
            };
            (hi - t[k].min(tau)).max(0.0)
        })
        .collect();

    // prefix[j] = w_pre + Σ_{k<j} w_k·B_k, b_before[j] = B_{j−1}, zero_before[j] = any B factor zero.
    let mut prefix = vec![0.0; k_len];
    let mut b_before = vec![0.0; k_len];
    let mut zero_before = vec![false; k_len];
    let (mut acc, mut b, mut zero) = (w_pre, 1.0, false);
    for k in 0..k_len {
        prefix[k] = acc;
        b_before[k] = b;
        zero_before[k] = zero;
        if r[k] > 1 {
            b *= 1.0 - d[k] as f64 / (r[k] - 1) as f64;
            zero |= d[k] + 1 == r[k];
        }
        acc += w[k] * b;
    }

    // suffix[j] = T_j; zero_after[j] = some h_m = 0 for m > j.
    let mut suffix = vec![0.0; k_len];
    let mut zero_after = vec![false; k_len];
    let mut next = 0.0;
    let mut z = false;
    for k in (0..k_len).rev() {
        suffix[k] = w[k] + next;
        zero_after[k] = z;
        let h = 1.0 - d[k] as f64 / r[k] as f64;
        next = h * suffix[k];
        z |= d[k] == r[k];
    }

    let last = k_len - 1;
    let max_time = t[last];
    let max_time_without_last = if count[last] == 1 && k_len > 1 {
        t[last - 1]
    } else {
        max_time
    };

    (0..n)
        .into_par_iter()
        .map(|i| {
            let j = t.partition_point(|&x| x < times[i]);
            let delta = usize::from(events[i]);
            let (f, f_zero) = if r[j] > 1 {
                let dj = d[j] - delta;
                (1.0 - dj as f64 / (r[j] - 1) as f64, dj + 1 == r[j])
            } else {
                (1.0, false)
            };
            let reaches_zero = zero_before[j] || f_zero || zero_after[j];
            let other_max = if j == last {
                max_time_without_last
            } else {
                max_time
            };
            let max_tau = if reaches_zero {
                f64::INFINITY
            } else {
                other_max
            };
            if tau > max_tau {
                return Err(Error::TauSupport {
                    tau,
                    max_tau,
                    context: Some(format!("leave-one-out index {i}")),
                });
            }
            let loo = prefix[j] + b_before[j] * f * suffix[j];
            Ok(n as f64 * full - (n - 1) as f64 * loo)
        })
        .collect()
}

fn arm_pseudo(records: &[&SurvivalRecord], arm_label: &str, tau: f64) -> Result<Vec<f64>> {
    let times: Vec<f64> = records.iter().map(|r| r.time).collect();
    let events: Vec<bool> = records.iter().map(|r| r.event).collect();
    rmst_pseudo_fast(&times, &events, tau).map_err(|e| match e {
        Error::TauSupport {
            tau,
            max_tau,
            context,
        } => {
            let subject = context
                .as_deref()
                .and_then(|c| c.strip_prefix("leave-one-out index "))
                .and_then(|i| i.parse::<usize>().ok())
                .map(|i| format!(", subject `{}` left out", records[i].id))
                .unwrap_or_default();
            Error::TauSupport {
                tau,
                max_tau,
                context: Some(format!("{arm_label}{subject}")),
            }
        }
        e => e,
    })
}

/// Pseudo-values computed separately within each arm, merged in input order.
pub fn rmst_pseudo_per_arm(data: &StudyData, tau: f64) -> Result<PseudoDataset> {
    let (treated, control) = split_by_arm(data);
    let p1 = arm_pseudo(&treated.records, "arm 1", tau)?;
    let p0 = arm_pseudo(&control.records, "arm 0", tau)?;
    let mut pseudo = vec![0.0; data.len()];
    for (pos, p) in treated.positions.iter().zip(p1) {
        pseudo[*pos] = p;
    }
    for (pos, p) in control.positions.iter().zip(p0) {
        pseudo[*pos] = p;
    }
    Ok(assemble(data, pseudo, tau, Provenance::Main))
}

pub(crate) fn assemble(
    data: &StudyData,
    pseudo: Vec<f64>,
    tau: f64,
    provenance: Provenance,
) -> PseudoDataset {
    let rows = data
        .records()
        .iter()
        .zip(pseudo)
        .map(|(r, p)| PseudoRow {
            id: r.id.clone(),
            covariates: r.covariates.clone(),
            arm: r.arm,
            pseudo: p,
            event: r.event,
            time: r.time,
        })
        .collect();
    PseudoDataset {
        rows,
        covariate_names: data.schema().encoded_names.clone(),
        tau,
        provenance,
    }
}

/// Pseudo-values over a single pooled cohort (one KM curve for all records).
pub fn rmst_pseudo_pooled(records: &[&SurvivalRecord], tau: f64) -> Result<Vec<f64>> {
    arm_pseudo(records, "pooled cohort", tau)
}

pub fn jackknife_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// `Σ(v_i − mean)² / (n(n−1))`, the jackknife variance of the mean.
pub fn jackknife_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = jackknife_mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n * (n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_of_mean_returns_observations() {
        let p = jackknife_pseudo(&[1.0, 2.0, 3.0], |s: &[f64]| {
            Ok(s.iter().sum::<f64>() / s.len() as f64)
        })
        .unwrap();
        for (a, b) in p.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let c = jackknife_pseudo(&[1.0, 2.0, 3.0], |_| Ok(4.5)).unwrap();
        assert_eq!(c, vec![4.5; 3]);
    }

    #[test]
    fn rmst_jackknife_without_censoring() {
        let naive = rmst_pseudo_naive(&[1.0, 2.0, 3.0], &[true; 3], 3.0).unwrap();
        let fast = rmst_pseudo_fast(&[1.0, 2.0, 3.0], &[true; 3], 3.0).unwrap();
        for i in 0..3 {
            assert!((naive[i] - (i + 1) as f64).abs() < 1e-12);
            assert!((fast[i] - (i + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_instance_matches_naive() {
        for (times, events, tau) in [
            ([2.0, 5.0], [true, false], 2.0),
            ([2.0, 5.0], [false, true], 1.5),
            ([3.0, 3.0], [true, false], 3.0),
            ([3.0, 3.0], [true, true], 7.0),
        ] {
            let naive = rmst_pseudo_naive(&times, &events, tau).unwrap();
            let fast = rmst_pseudo_fast(&times, &events, tau).unwrap();
            assert_eq!(naive.len(), fast.len());
            for (a, b) in naive.iter().zip(&fast) {
                assert!(
                    (a - b).abs() < 1e-12,
                    "{times:?} {events:?}: {naive:?} vs {fast:?}"
                );
            }
        }
    }

    #[test]
    fn support_violation_is_reported_with_index() {
        // Removing the lone subject at 10 leaves a censored max of 4 < tau.
        let times = [1.0, 4.0, 10.0];
        let events = [true, false, false];
        for result in [
            rmst_pseudo_fast(&times, &events, 6.0),
            rmst_pseudo_naive(&times, &events, 6.0),
        ] {
            match result.unwrap_err() {
                Error::TauSupport {
                    max_tau, context, ..
                } => {
                    assert_eq!(max_tau, 4.0);
                    assert_eq!(context.as_deref(), Some("leave-one-out index 2"));
                }
                e => panic!("{e:?}"),
            }
        }
    }

    #[test]
    fn jackknife_moments() {
        assert_eq!(jackknife_mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((jackknife_variance(&[1.0, 2.0, 3.0]) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jackknife_variance(&[4.0; 5]), 0.0);
        let (a, b) = (2.5f64, -1.0f64);
        assert!((jackknife_variance(&[a, b]) - (a - b).powi(2) / 4.0).abs() < 1e-15);
    }
}
