//! Copy-reference sensitivity analysis for the censoring-at-random assumption.
//!
//! Censored treated subjects are assumed to follow the control arm's event
//! pattern after censoring. Their pseudo-values are recomputed from one pooled
//! Kaplan–Meier curve over {censored treated} ∪ {all controls}; every other
//! pseudo-value keeps its per-arm value.

use serde::Serialize;

use crate::dataset::{StudyData, SurvivalRecord};
use crate::error::Result;
use crate::estimators::{estimate, EstimateReport, Method, NuisanceConfig};
use crate::pseudo::{assemble, rmst_pseudo_per_arm, rmst_pseudo_pooled, Provenance, PseudoDataset};

/// The pooled cohort of censored treated subjects and all control subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct TentativeCohort {
    /// Censored treated records first, then controls, each in input order.
    pub records: Vec<SurvivalRecord>,
    /// Position of each record in the originating [`StudyData`].
    pub positions: Vec<usize>,
    pub treated_censored: usize,
}

impl TentativeCohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn build_tentative_dataset(data: &StudyData) -> TentativeCohort {
    let recs = data.records();
    let treated_censored: Vec<usize> = (0..recs.len())
        .filter(|&i| recs[i].arm == 1 && !recs[i].event)
        .collect();
    let controls = (0..recs.len()).filter(|&i| recs[i].arm == 0);
    let positions: Vec<usize> = treated_censored.iter().copied().chain(controls).collect();
    TentativeCohort {
        records: positions.iter().map(|&i| recs[i].clone()).collect(),
        treated_censored: treated_censored.len(),
        positions,
    }
}

/// Pseudo-values of the tentative cohort, one per member, computed as a single arm.
pub fn tentative_pseudo(cohort: &TentativeCohort, tau: f64) -> Result<Vec<f64>> {
    let refs: Vec<&SurvivalRecord> = cohort.records.iter().collect();
    rmst_pseudo_pooled(&refs, tau)
}

/// Main pseudo-values with censored treated subjects replaced by their
/// tentative-cohort values.
pub fn cr_pseudo(data: &StudyData, tau: f64) -> Result<PseudoDataset> {
    let main = rmst_pseudo_per_arm(data, tau)?;
    cr_from_main(data, &main, tau)
}

fn cr_from_main(data: &StudyData, main: &PseudoDataset, tau: f64) -> Result<PseudoDataset> {
    let cohort = build_tentative_dataset(data);
    let mut pseudo = main.pseudo_values();
    if cohort.treated_censored > 0 {
        let tentative = tentative_pseudo(&cohort, tau)?;
        for (k, &pos) in cohort.positions[..cohort.treated_censored]
            .iter()
            .enumerate()
        {
            pseudo[pos] = tentative[k];
        }
    }
    Ok(assemble(data, pseudo, tau, Provenance::CopyReference))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrResult {
    pub main_report: EstimateReport,
    pub cr_report: EstimateReport,
    pub replaced_count: usize,
    pub tentative_dataset_size: usize,
}

impl CrResult {
    pub fn delta(&self) -> f64 {
        self.cr_report.estimate - self.main_report.estimate
    }
}

/// Run `method` on the main and copy-reference pseudo-datasets with the same
/// configuration and seed.
pub fn run_cr_analysis(
    data: &StudyData,
    tau: f64,
    method: Method,
    config: &NuisanceConfig,
) -> Result<CrResult> {
    let main = rmst_pseudo_per_arm(data, tau)?;
    let cr = cr_from_main(data, &main, tau)?;
    let cohort_size = build_tentative_dataset(data);
    let (main_report, cr_report) = rayon::join(
        || estimate(&main, method, config),
        || estimate(&cr, method, config),
    );
    Ok(CrResult {
        main_report: main_report?,
        cr_report: cr_report?,
        replaced_count: cohort_size.treated_censored,
        tentative_dataset_size: cohort_size.len(),
    })
}
