//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Criteria 1-3 need the ACTG175 two-arm export at `tests/fixtures/actg175.csv`
//! (or the path in `$ACTG175_CSV`) with columns `id,arm,time,event` plus the
//! five baseline covariates.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rmst_core::dataset::{load_csv, Schema, StudyData, SurvivalRecord};
use rmst_core::estimators::{estimate, EstimateReport, Method, NuisanceConfig};
use rmst_core::learners::LearnerSpec;
use rmst_core::pseudo::{
    rmst_pseudo_fast, rmst_pseudo_naive, rmst_pseudo_per_arm, PseudoDataset, PseudoRow,
};
use rmst_core::sensitivity::{build_tentative_dataset, run_cr_analysis, tentative_pseudo};
use rmst_core::simgen::SimScenario;
use rmst_core::survival::{kaplan_meier, rmst};

const TAU_ACTG: f64 = 160.0;
const PSEUDO_TOL: f64 = 0.01;
const REPORT_TOL: f64 = 1.0;
const IDENTITY_TOL: f64 = 1e-10;
const SCORE_TOL: f64 = 1e-6;
const DR_REPS: u64 = 500;
const DR_N: usize = 2000;
const NULL_REPS: u64 = 500;
const NULL_N: usize = 500;

type Check = Result<String, String>;

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Option<Duration>,
    run: fn(&mut Scores) -> Check,
}

/// TMLE post-fluctuation score means collected for criterion 9.
#[derive(Default)]
struct Scores {
    worst: f64,
    runs: usize,
    sources: Vec<&'static str>,
}

impl Scores {
    fn record(&mut self, source: &'static str, reports: &[&EstimateReport]) {
        for r in reports {
            let s = r.diagnostics.score_mean.unwrap_or(f64::NAN).abs();
            self.worst = if s.is_nan() {
                f64::NAN
            } else {
                self.worst.max(s)
            };
            self.runs += 1;
        }
        if !self.sources.contains(&source) {
            self.sources.push(source);
        }
    }
}

fn fixture() -> Result<StudyData, String> {
    let path = std::env::var_os("ACTG175_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/actg175.csv")
        });
    if !path.exists() {
        return Err(format!("ACTG175 fixture not found at {}", path.display()));
    }
    load_csv(&path, None).map_err(|e| format!("loading {}: {e}", path.display()))
}

/// Pseudo-value of any subject with the given (arm, time, event).
fn spot(po: &PseudoDataset, arm: u8, time: f64, event: bool) -> Option<f64> {
    po.rows
        .iter()
        .find(|r| r.arm == arm && r.time == time && r.event == event)
        .map(|r| r.pseudo)
}

fn check_spots(po: &PseudoDataset, spots: &[(u8, f64, bool, f64)]) -> Check {
    let mut worst: f64 = 0.0;
    for &(arm, time, event, want) in spots {
        let got = spot(po, arm, time, event)
            .ok_or_else(|| format!("no subject with A={arm}, Y={time}, δ={}", u8::from(event)))?;
        if (got - want).abs() > PSEUDO_TOL {
            return Err(format!("A={arm} Y={time}: got {got:.4}, expected {want}"));
        }
        worst = worst.max((got - want).abs());
    }
    Ok(format!(
        "{} spot values, max |diff| {worst:.4}",
        spots.len()
    ))
}

fn actg_config() -> NuisanceConfig {
    NuisanceConfig {
        seed: 7,
        ..NuisanceConfig::default()
    }
}

fn within(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{label} {got:.3} outside {want} ± {tol}"))
    }
}

fn c1_pseudo_reproduction(_: &mut Scores) -> Check {
    let data = fixture()?;
    if (data.n1(), data.n0()) != (522, 532) {
        return Err(format!(
            "arm sizes ({}, {}), expected (522, 532)",
            data.n1(),
            data.n0()
        ));
    }
    let po = rmst_pseudo_per_arm(&data, TAU_ACTG).map_err(|e| e.to_string())?;
    check_spots(
        &po,
        &[
            (1, 169.0, false, 161.16),
            (1, 68.0, false, 151.36),
            (1, 95.0, true, 90.23),
            (0, 113.0, true, 107.97),
            (0, 66.0, true, 60.50),
        ],
    )
}

fn c2_main_tmle(scores: &mut Scores) -> Check {
    let data = fixture()?;
    let po = rmst_pseudo_per_arm(&data, TAU_ACTG).map_err(|e| e.to_string())?;
    let r = estimate(&po, Method::Tmle, &actg_config()).map_err(|e| e.to_string())?;
    scores.record("2", &[&r]);
    within("estimate", r.estimate, 16.7, REPORT_TOL)?;
    within("se", r.se, 5.48, REPORT_TOL)?;
    Ok(format!("estimate {:.3}, se {:.3}", r.estimate, r.se))
}

fn c3_cr_reproduction(scores: &mut Scores) -> Check {
    let data = fixture()?;
    let cohort = build_tentative_dataset(&data);
    let tentative = tentative_pseudo(&cohort, TAU_ACTG).map_err(|e| e.to_string())?;
    let mut pooled = rmst_pseudo_per_arm(&data, TAU_ACTG).map_err(|e| e.to_string())?;
    pooled.rows = cohort
        .positions
        .iter()
        .zip(&tentative)
        .map(|(&pos, &p)| PseudoRow {
            pseudo: p,
            ..pooled.rows[pos].clone()
        })
        .collect();
    let spots = check_spots(
        &pooled,
        &[(1, 169.0, false, 161.24), (0, 113.0, true, 107.20)],
    )?;
    let cr = run_cr_analysis(&data, TAU_ACTG, Method::Tmle, &actg_config())
        .map_err(|e| e.to_string())?;
    scores.record("3", &[&cr.main_report, &cr.cr_report]);
    within("CR estimate", cr.cr_report.estimate, 16.6, REPORT_TOL)?;
    within("CR se", cr.cr_report.se, 5.90, REPORT_TOL)?;
    Ok(format!(
        "CR estimate {:.3}, se {:.3}; {spots}",
        cr.cr_report.estimate, cr.cr_report.se
    ))
}

fn random_study(
    rng: &mut ChaCha8Rng,
    n: usize,
    censor_prob: f64,
    integer_times: bool,
) -> StudyData {
    let records = (0..n)
        .map(|i| {
            let raw: f64 = rng.random_range(0.05..50.0);
            SurvivalRecord {
                id: i.to_string(),
                arm: u8::from(i % 2 == 0),
                time: if integer_times { raw.ceil() } else { raw },
                event: rng.random::<f64>() >= censor_prob,
                covariates: vec![],
            }
        })
        .collect();
    StudyData::new(records, Schema::default()).expect("valid random study")
}

fn c4_no_censoring_identity(_: &mut Scores) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(4..=200);
        let integer_times = rng.random::<bool>();
        let data = random_study(&mut rng, n, 0.0, integer_times);
        let tau = rng.random_range(0.5..60.0);
        let po = rmst_pseudo_per_arm(&data, tau).map_err(|e| e.to_string())?;
        for (row, rec) in po.rows.iter().zip(data.records()) {
            worst = worst.max((row.pseudo - rec.time.min(tau)).abs());
        }
    }
    if worst < IDENTITY_TOL {
        Ok(format!("100 datasets, max |P - min(Y, τ)| {worst:.1e}"))
    } else {
        Err(format!("max |P - min(Y, τ)| {worst:.3e}"))
    }
}

fn c5_oracle_equivalence(_: &mut Scores) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=500);
        let censor = rng.random_range(0.0..0.8);
        let ties = rng.random::<bool>();
        let times: Vec<f64> = (0..n)
            .map(|_| {
                let t: f64 = rng.random_range(0.05..30.0);
                if ties {
                    t.ceil()
                } else {
                    t
                }
            })
            .collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random::<f64>() >= censor).collect();
        let mut sorted = times.clone();
        sorted.sort_by(f64::total_cmp);
        let tau = sorted[n - 2] * rng.random_range(0.1..1.0);
        let fast = rmst_pseudo_fast(&times, &events, tau).map_err(|e| e.to_string())?;
        let naive = rmst_pseudo_naive(&times, &events, tau).map_err(|e| e.to_string())?;
        for (f, s) in fast.iter().zip(&naive) {
            worst = worst.max((f - s).abs());
        }
    }
    if worst < IDENTITY_TOL {
        Ok(format!("50 datasets, max |fast - naive| {worst:.1e}"))
    } else {
        Err(format!("max |fast - naive| {worst:.3e}"))
    }
}

fn c6_hand_computed(_: &mut Scores) -> Check {
    let km = kaplan_meier(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true])
        .map_err(|e| e.to_string())?;
    let got = rmst(&km, 4.0).map_err(|e| e.to_string())?.value;
    // S = 1 on [0,1), 3/4 on [1,3), 3/8 on [3,4).
    let hand = 1.0 + 0.75 * 2.0 + 0.375 * 1.0;
    if got == hand && got == 2.875 {
        Ok(format!("RMST(τ=4) = {got}"))
    } else {
        Err(format!("RMST(τ=4) = {got}, expected 2.875"))
    }
}

fn scenario_config(s: &SimScenario) -> NuisanceConfig {
    NuisanceConfig {
        q_library: s.analyst.q_library.clone(),
        g_library: s.analyst.g_library.clone(),
        seed: s.seed,
        ..NuisanceConfig::default()
    }
}

/// The analyst's outcome model as seen by GEE: covariates are dropped when
/// the outcome library never uses them.
fn analyst_gee_view(po: &PseudoDataset, s: &SimScenario) -> PseudoDataset {
    let uses_x = s
        .analyst
        .q_library
        .iter()
        .any(|l| !matches!(l, LearnerSpec::Mean | LearnerSpec::GlmTreatment));
    let mut view = po.clone();
    if !uses_x {
        view.covariate_names.clear();
        for r in &mut view.rows {
            r.covariates.clear();
        }
    }
    view
}

struct Replicate {
    aiptw: EstimateReport,
    tmle: EstimateReport,
    gee: EstimateReport,
}

fn run_replicates(base: &SimScenario, reps: u64, n: usize) -> Result<Vec<Replicate>, String> {
    (0..reps)
        .into_par_iter()
        .map(|i| {
            let s = base.replicate(i);
            let data = s.generate(n).map_err(|e| e.to_string())?;
            let po = rmst_pseudo_per_arm(&data, s.tau).map_err(|e| format!("rep {i}: {e}"))?;
            let config = scenario_config(&s);
            let run = |m| estimate(&po, m, &config).map_err(|e| format!("rep {i} {m}: {e}"));
            Ok(Replicate {
                aiptw: run(Method::Aiptw)?,
                tmle: run(Method::Tmle)?,
                gee: estimate(&analyst_gee_view(&po, &s), Method::Gee, &config)
                    .map_err(|e| format!("rep {i} gee: {e}"))?,
            })
        })
        .collect()
}

fn mean_and_mcse(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn c7_double_robustness(scores: &mut Scores) -> Check {
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for name in ["S1-misQ", "S1-misG"] {
        let s = SimScenario::named(name).map_err(|e| e.to_string())?;
        let theta = s.truth().theta_true;
        let reps = run_replicates(&s, DR_REPS, DR_N)?;
        scores.record("7", &reps.iter().map(|r| &r.tmle).collect::<Vec<_>>());
        for (label, pick) in [
            (
                "aiptw",
                (|r: &Replicate| r.aiptw.estimate) as fn(&Replicate) -> f64,
            ),
            ("tmle", |r: &Replicate| r.tmle.estimate),
        ] {
            let (m, _) = mean_and_mcse(&reps.iter().map(pick).collect::<Vec<_>>());
            let rel = (m - theta).abs() / theta.abs();
            summary.push(format!("{name} {label} rel.bias {rel:.4}"));
            if rel >= 0.05 {
                failures.push(format!("{name} {label} relative bias {rel:.4} >= 0.05"));
            }
        }
        if name == "S1-misQ" {
            let (m, mcse) = mean_and_mcse(&reps.iter().map(|r| r.gee.estimate).collect::<Vec<_>>());
            let z = (m - theta).abs() / mcse;
            summary.push(format!("{name} gee bias/MCSE {z:.1}"));
            if z <= 3.0 {
                failures.push(format!("{name} gee bias only {z:.2} MCSE"));
            }
        }
    }
    if failures.is_empty() {
        Ok(summary.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn c8_null_calibration(scores: &mut Scores) -> Check {
    let s = SimScenario::named("S0").map_err(|e| e.to_string())?;
    let reps = run_replicates(&s, NULL_REPS, NULL_N)?;
    scores.record("8", &reps.iter().map(|r| &r.tmle).collect::<Vec<_>>());
    let covered = reps
        .iter()
        .filter(|r| r.tmle.ci_low <= 0.0 && 0.0 <= r.tmle.ci_high)
        .count() as f64
        / reps.len() as f64;
    let (m, mcse) = mean_and_mcse(&reps.iter().map(|r| r.tmle.estimate).collect::<Vec<_>>());
    let detail = format!("coverage {covered:.3}, mean {m:.4} (MCSE {mcse:.4})");
    if (0.92..=0.98).contains(&covered) && m.abs() <= 3.0 * mcse {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c9_score_equation(scores: &mut Scores) -> Check {
    let detail = format!(
        "{} TMLE runs from criteria {}, max |score mean| {:.1e}",
        scores.runs,
        scores.sources.join(", "),
        scores.worst
    );
    if scores.runs > 0 && scores.worst < SCORE_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c10_cr_identity(_: &mut Scores) -> Check {
    let data = SimScenario::named("S1")
        .map_err(|e| e.to_string())?
        .generate(300)
        .map_err(|e| e.to_string())?;
    let (mut records, schema) = data.into_parts();
    for r in records.iter_mut().filter(|r| r.arm == 1) {
        r.event = true;
    }
    let data = StudyData::new(records, schema).map_err(|e| e.to_string())?;
    for method in Method::ALL {
        let cr = run_cr_analysis(&data, 12.0, method, &NuisanceConfig::default())
            .map_err(|e| e.to_string())?;
        if cr.replaced_count != 0
            || cr.cr_report.estimate.to_bits() != cr.main_report.estimate.to_bits()
            || cr.cr_report.se.to_bits() != cr.main_report.se.to_bits()
        {
            return Err(format!(
                "{method}: CR {} vs main {}",
                cr.cr_report.estimate, cr.main_report.estimate
            ));
        }
    }
    Ok("all four methods bit-identical".into())
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "pseudo-value reproduction",
            limit: Some(Duration::from_secs(10)),
            run: c1_pseudo_reproduction,
        },
        Criterion {
            id: 2,
            name: "main TMLE reproduction",
            limit: Some(Duration::from_secs(120)),
            run: c2_main_tmle,
        },
        Criterion {
            id: 3,
            name: "CR reproduction",
            limit: None,
            run: c3_cr_reproduction,
        },
        Criterion {
            id: 4,
            name: "no-censoring identity",
            limit: None,
            run: c4_no_censoring_identity,
        },
        Criterion {
            id: 5,
            name: "fast/naive oracle equivalence",
            limit: None,
            run: c5_oracle_equivalence,
        },
        Criterion {
            id: 6,
            name: "hand-computed KM/RMST",
            limit: None,
            run: c6_hand_computed,
        },
        Criterion {
            id: 7,
            name: "double robustness",
            limit: Some(Duration::from_secs(15 * 60)),
            run: c7_double_robustness,
        },
        Criterion {
            id: 8,
            name: "null calibration",
            limit: None,
            run: c8_null_calibration,
        },
        Criterion {
            id: 9,
            name: "fluctuation score equation",
            limit: None,
            run: c9_score_equation,
        },
        Criterion {
            id: 10,
            name: "CR identity",
            limit: None,
            run: c10_cr_identity,
        },
    ];
    let mut scores = Scores::default();
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.run)(&mut scores);
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, c.limit) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; runtime {elapsed:.1?} exceeds {limit:?}"));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "criterion {:>2} {tag}  {} [{elapsed:.1?}]: {detail}",
            c.id, c.name
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
