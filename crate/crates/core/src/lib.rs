//! Restricted mean survival time (RMST) differences from right-censored
//! two-arm data.
//!
//! The pipeline is: [`dataset`] loads a study, [`pseudo`] turns each subject's
//! censored outcome into a jackknife pseudo-observation of the per-arm
//! Kaplan–Meier RMST, and [`estimators`] runs an unadjusted, GEE, AIPTW or TMLE
//! analysis on those pseudo-values. [`sensitivity`] repeats an analysis under a
//! copy-reference assumption for censored treated subjects, and [`simgen`]
//! generates data with known truth for checking all of the above.
//!
//! ```
//! use rmst_core::prelude::*;
//!
//! let data = SimScenario::named("S1").unwrap().generate(300).unwrap();
//! let po = rmst_pseudo_per_arm(&data, 12.0).unwrap();
//! let report = estimate(&po, Method::Gee, &NuisanceConfig::default()).unwrap();
//! assert!(report.se > 0.0);
//! ```

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod pseudo;
pub mod sensitivity;
pub mod simgen;
pub mod survival;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::dataset::{
        load_csv, read_csv, split_by_arm, write_csv, Schema, SchemaHint, StudyData, SurvivalRecord,
    };
    pub use crate::error::{Error, Result};
    pub use crate::estimators::{
        estimate, estimate_aiptw, estimate_gee, estimate_tmle, estimate_unadjusted, EstimateReport,
        Method, NuisanceConfig,
    };
    pub use crate::learners::{Family, LearnerSpec};
    pub use crate::pseudo::{
        jackknife_mean, jackknife_variance, rmst_pseudo_fast, rmst_pseudo_naive,
        rmst_pseudo_per_arm, Provenance, PseudoDataset,
    };
    pub use crate::sensitivity::{
        build_tentative_dataset, cr_pseudo, run_cr_analysis, tentative_pseudo, CrResult,
    };
    pub use crate::simgen::{SimScenario, TruthRecord};
    pub use crate::survival::{kaplan_meier, rmst, rmst_difference_plugin, StepSurvival};
}
