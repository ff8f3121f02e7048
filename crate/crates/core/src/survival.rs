//! Kaplan–Meier curves and restricted mean survival time.

use std::io::Write;

use serde::Serialize;

use crate::dataset::{split_by_arm, StudyData};
use crate::error::{Error, Result};

/// A product-limit survival curve, right-continuous and piecewise constant.
///
/// `survival[k]` is the value of the curve on `[times[k], times[k + 1])`; the
/// curve equals 1 before `times[0]` and stays at its last value after the
/// final time point. Events at a time are processed before censorings at the
/// same time, so subjects censored at `t` are still at risk for events at `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSurvival {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl StepSurvival {
    /// Largest observed time (event or censoring) of the generating sample.
    pub fn max_time(&self) -> f64 {
        *self.times.last().expect("curve is never empty")
    }

    /// Largest τ for which the area is determined by the data: unbounded once
    /// the curve has reached zero, otherwise the largest observed time.
    pub fn max_tau(&self) -> f64 {
        if *self.survival.last().expect("curve is never empty") == 0.0 {
            f64::INFINITY
        } else {
            self.max_time()
        }
    }

    /// Ŝ(t), right-continuous.
    pub fn survival_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            1.0
        } else {
            self.survival[k - 1]
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "survival"])?;
        for (t, s) in self.times.iter().zip(&self.survival) {
            w.write_record([t.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Area under a survival curve on `[0, tau]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmstValue {
    pub value: f64,
    pub tau: f64,
}

pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<StepSurvival> {
    if times.is_empty() {
        return Err(Error::Domain(
            "Kaplan-Meier needs at least one observation".into(),
        ));
    }
    if times.len() != events.len() {
        return Err(Error::Domain(format!(
            "times and events differ in length ({} vs {})",
            times.len(),
            events.len()
        )));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::Domain(format!(
            "times must be positive and finite, got {t}"
        )));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut curve = StepSurvival {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut remaining = times.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut d = 0usize;
        let mut j = i;
        while j < order.len() && times[order[j]] == t {
            d += usize::from(events[order[j]]);
            j += 1;
        }
        if d > 0 {
            s *= 1.0 - d as f64 / remaining as f64;
        }
        curve.times.push(t);
        curve.survival.push(s);
        curve.at_risk.push(remaining);
        curve.events.push(d);
        remaining -= j - i;
        i = j;
    }
    Ok(curve)
}

/// Exact area of the step curve on `[0, tau]`.
///
/// `tau` may not exceed the largest observed time of the sample unless the
/// curve has already dropped to zero.
pub fn rmst(curve: &StepSurvival, tau: f64) -> Result<RmstValue> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let max_tau = curve.max_tau();
    if tau > max_tau {
        return Err(Error::TauSupport {
            tau,
            max_tau,
            context: None,
        });
    }
    let mut area = 0.0;
    let mut prev = 0.0;
    let mut s = 1.0;
    for (&t, &sk) in curve.times.iter().zip(&curve.survival) {
        if t >= tau {
            break;
        }
        area += s * (t - prev);
        prev = t;
        s = sk;
    }
    area += s * (tau - prev);
    Ok(RmstValue { value: area, tau })
}

/// Unadjusted plug-in RMST difference, treated minus control.
pub fn rmst_difference_plugin(data: &StudyData, tau: f64) -> Result<f64> {
    let (treated, control) = split_by_arm(data);
    let mu1 = rmst(&kaplan_meier(&treated.times(), &treated.events())?, tau)
        .map_err(|e| e.with_tau_context("arm 1"))?;
    let mu0 = rmst(&kaplan_meier(&control.times(), &control.events())?, tau)
        .map_err(|e| e.with_tau_context("arm 0"))?;
    Ok(mu1.value - mu0.value)
}
