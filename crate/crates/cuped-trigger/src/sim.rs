//! Synthetic conversion-process generator and the Monte Carlo study
//! harness.
//!
//! The generator mimics a conversion funnel: each user has an unobserved
//! engagement tier `U`, two pre-assignment covariates `x_1` (tier-dependent
//! upper bound) and `x_2`, a triggering probability linear in both
//! covariates, and a binomial outcome whose rate depends on the tier, `x_2`,
//! and (for exposed users) a constant treatment lift. `U` and the true
//! triggering probability `p_s` are carried as auxiliary columns so study
//! rosters can balance on them.
//!
//! The harness runs a roster of estimators over many generated trials and
//! reports, per estimator: the mean estimate, the Monte Carlo SD across
//! trials (the ground-truth standard error), and the mean estimated SE.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, ExperimentDataset, TriggerMode};
use crate::error::{Error, Result};
use crate::estimator::{naive_delta, residualize, trigger_complement_delta, trigger_dilute};
use crate::inference::{
    arm_stats, cov_matrix, draw_counts, estimate_theta, resample_key, resample_tau0,
    variance_trg1, PreparedWeights, ResampleScratch, RngKey, WeightSpec,
};
use crate::linalg::DenseMatrix;
use crate::scoring::FitOptions;
use crate::stats;

pub const COL_X1: &str = "x_1";
pub const COL_X2: &str = "x_2";
pub const COL_U: &str = "u";
pub const COL_PS: &str = "p_s";

/// Generator parameters. Probabilities and realized rates must stay inside
/// [0, 1] over the whole covariate support; this is checked by interval
/// arithmetic at validation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpParams {
    pub n_control: usize,
    pub n_treatment: usize,
    /// P(U = 1): share of high-tier users.
    pub p_0: f64,
    /// Marginal triggering rate.
    pub p_1: f64,
    /// Triggering-rate slope on centered x_1.
    pub c_1: f64,
    /// Triggering-rate slope on centered x_2.
    pub c_2: f64,
    /// Conversion-rate slope on centered x_2.
    pub c_3: f64,
    /// Binomial trials per unit (e.g. days of exposure).
    pub trials_per_unit: u32,
    /// Baseline conversion rate of the low tier.
    pub r_low: f64,
    /// Baseline conversion rate of the high tier.
    pub r_high: f64,
    /// Added conversion rate for exposed (triggered treatment) units.
    pub r_effect: f64,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            n_control: 25_000,
            n_treatment: 75_000,
            p_0: 0.2,
            p_1: 0.05,
            c_1: 0.05,
            c_2: 0.05,
            c_3: 0.1,
            trials_per_unit: 30,
            r_low: 0.05,
            r_high: 0.1,
            r_effect: 0.05,
        }
    }
}

impl DgpParams {
    /// Mean of x_1: (3 p_0 + 1) / 8.
    pub fn x1_mean(&self) -> f64 {
        (3.0 * self.p_0 + 1.0) / 8.0
    }

    /// Ground-truth ITT effect: trials * r_effect * p_1.
    pub fn true_itt(&self) -> f64 {
        self.trials_per_unit as f64 * self.r_effect * self.p_1
    }

    pub fn n(&self) -> usize {
        self.n_control + self.n_treatment
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_control == 0 || self.n_treatment == 0 {
            return Err(Error::Validation(
                "both arms need at least one unit".into(),
            ));
        }
        if self.trials_per_unit == 0 {
            return Err(Error::Validation("trials_per_unit must be positive".into()));
        }
        for (name, v) in [("p_0", self.p_0), ("p_1", self.p_1)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name}={v} outside [0, 1]")));
            }
        }
        // triggering probability over the covariate support
        let x1_hi = if self.p_0 > 0.0 { 1.0 } else { 0.25 };
        let (a_lo, a_hi) = scaled_interval(self.c_1, -self.x1_mean(), x1_hi - self.x1_mean());
        let (b_lo, b_hi) = scaled_interval(self.c_2, -0.5, 0.5);
        let ps_lo = self.p_1 + a_lo + b_lo;
        let ps_hi = self.p_1 + a_hi + b_hi;
        if ps_lo < 0.0 || ps_hi > 1.0 {
            return Err(Error::Validation(format!(
                "triggering probability range [{ps_lo:.4}, {ps_hi:.4}] leaves [0, 1]"
            )));
        }
        // realized conversion rate over tiers, x_2, and exposure
        let mut base_lo = f64::INFINITY;
        let mut base_hi = f64::NEG_INFINITY;
        if self.p_0 < 1.0 {
            base_lo = base_lo.min(self.r_low);
            base_hi = base_hi.max(self.r_low);
        }
        if self.p_0 > 0.0 {
            base_lo = base_lo.min(self.r_high);
            base_hi = base_hi.max(self.r_high);
        }
        let (c_lo, c_hi) = scaled_interval(self.c_3, -0.5, 0.5);
        let r_lo = base_lo + c_lo + self.r_effect.min(0.0);
        let r_hi = base_hi + c_hi + self.r_effect.max(0.0);
        if r_lo < 0.0 || r_hi > 1.0 {
            return Err(Error::Validation(format!(
                "conversion rate range [{r_lo:.4}, {r_hi:.4}] leaves [0, 1]"
            )));
        }
        Ok(())
    }
}

fn scaled_interval(c: f64, lo: f64, hi: f64) -> (f64, f64) {
    if c >= 0.0 {
        (c * lo, c * hi)
    } else {
        (c * hi, c * lo)
    }
}

/// Generate one two-sided trial dataset. Control rows come first, then
/// treatment, matching fixed arm sizes; all covariates are drawn i.i.d., so
/// the fixed split is equivalent to randomized assignment.
pub fn generate(params: &DgpParams, key: RngKey) -> Result<ExperimentDataset> {
    params.validate()?;
    let n = params.n();
    let mut rng = key.rng();

    let tiers: Vec<bool> = (0..n).map(|_| rng.random_bool(params.p_0)).collect();
    let x1: Vec<f64> = tiers
        .iter()
        .map(|&u| (0.25 + 0.75 * (u as u8 as f64)) * rng.random::<f64>())
        .collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x1_center = params.x1_mean();
    let p_s: Vec<f64> = x1
        .iter()
        .zip(&x2)
        .map(|(&a, &b)| {
            (params.p_1 + params.c_1 * (a - x1_center) + params.c_2 * (b - 0.5)).clamp(0.0, 1.0)
        })
        .collect();
    let s: Vec<bool> = p_s.iter().map(|&p| rng.random_bool(p)).collect();

    let mut unit_ids = Vec::with_capacity(n);
    let mut assignment = Vec::with_capacity(n);
    let mut triggered = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut covariates = Vec::with_capacity(n * 4);
    for i in 0..n {
        let arm = if i < params.n_control {
            Arm::Control
        } else {
            Arm::Treatment
        };
        let exposed = s[i] && arm == Arm::Treatment;
        let base = if tiers[i] { params.r_high } else { params.r_low };
        let rate = (base
            + params.c_3 * (x2[i] - 0.5)
            + params.r_effect * (exposed as u8 as f64))
            .clamp(0.0, 1.0);
        let y = Binomial::new(params.trials_per_unit as u64, rate)
            .map_err(|e| Error::Numerical(format!("binomial outcome draw: {e}")))?
            .sample(&mut rng) as f64;

        unit_ids.push(format!("u{i}"));
        assignment.push(arm);
        triggered.push(Some(s[i]));
        covariates.extend_from_slice(&[x1[i], x2[i], tiers[i] as u8 as f64, p_s[i]]);
        outcomes.push(y);
    }

    ExperimentDataset::from_columns(
        unit_ids,
        assignment,
        triggered,
        DenseMatrix::from_flat(covariates, n, 4),
        vec![
            COL_X1.to_string(),
            COL_X2.to_string(),
            COL_U.to_string(),
            COL_PS.to_string(),
        ],
        outcomes,
        Some(TriggerMode::TwoSided),
    )
}

/// Drop control trigger labels (and optionally whole covariate columns) to
/// produce the one-sided twin of a two-sided dataset.
pub fn mask_to_one_sided(ds: &ExperimentDataset, hide: &[String]) -> Result<ExperimentDataset> {
    ds.masked_one_sided(hide)
}

/// The four simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StudyId {
    /// Benchmark against the other unbiased estimators.
    S1,
    /// Alternative weightings of the control group.
    S2,
    /// The same roster applied after regression adjustment on (x_1, x_2).
    S3,
    /// Hidden confounder x_1; bias-variance knob via balancing on u.
    S4,
}

impl StudyId {
    pub fn all() -> [StudyId; 4] {
        [StudyId::S1, StudyId::S2, StudyId::S3, StudyId::S4]
    }

    /// Covariates removed from the one-sided twin (in-trial observability).
    pub fn hidden_columns(&self) -> Vec<String> {
        match self {
            StudyId::S4 => vec![COL_X1.to_string()],
            _ => Vec::new(),
        }
    }

    /// Covariates used for outcome residualization before estimation.
    pub fn residualize_on(&self) -> Option<Vec<String>> {
        match self {
            StudyId::S1 | StudyId::S2 => None,
            StudyId::S3 => Some(vec![COL_X1.to_string(), COL_X2.to_string()]),
            StudyId::S4 => Some(vec![COL_X2.to_string()]),
        }
    }

    pub fn roster(&self) -> Vec<EstimatorSpec> {
        let s = |names: &[&str]| names.iter().map(|n| n.to_string()).collect::<Vec<_>>();
        match self {
            StudyId::S1 => vec![
                EstimatorSpec::Naive,
                EstimatorSpec::TriggerDilute,
                EstimatorSpec::CupedTwoSided,
                EstimatorSpec::OneSided(WeightSpec::Principal {
                    covariates: s(&[COL_X1, COL_X2]),
                }),
            ],
            StudyId::S2 | StudyId::S3 => vec![
                EstimatorSpec::Naive,
                EstimatorSpec::TriggerDilute,
                EstimatorSpec::CupedTwoSided,
                EstimatorSpec::OneSided(WeightSpec::Principal {
                    covariates: s(&[COL_X1, COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::GroundTruth {
                    column: COL_PS.to_string(),
                }),
                EstimatorSpec::OneSided(WeightSpec::Propensity {
                    covariates: s(&[COL_X1, COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::EntropyBalance {
                    columns: s(&[COL_X1, COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::EntropyBalance {
                    columns: s(&[COL_X1, COL_X2, COL_U]),
                }),
                EstimatorSpec::OneSided(WeightSpec::EntropyBalance {
                    columns: s(&[COL_PS]),
                }),
            ],
            StudyId::S4 => vec![
                EstimatorSpec::Naive,
                EstimatorSpec::TriggerDilute,
                EstimatorSpec::OneSided(WeightSpec::Principal {
                    covariates: s(&[COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::Propensity {
                    covariates: s(&[COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::EntropyBalance {
                    columns: s(&[COL_X2]),
                }),
                EstimatorSpec::OneSided(WeightSpec::EntropyBalance {
                    columns: s(&[COL_X2, COL_U]),
                }),
            ],
        }
    }
}

impl std::fmt::Display for StudyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StudyId::S1 => write!(f, "s1"),
            StudyId::S2 => write!(f, "s2"),
            StudyId::S3 => write!(f, "s3"),
            StudyId::S4 => write!(f, "s4"),
        }
    }
}

/// One estimator in a study roster.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum EstimatorSpec {
    Naive,
    TriggerDilute,
    CupedTwoSided,
    OneSided(WeightSpec),
}

impl EstimatorSpec {
    pub fn name(&self) -> String {
        match self {
            EstimatorSpec::Naive => "naive".into(),
            EstimatorSpec::TriggerDilute => "trigger-dilute".into(),
            EstimatorSpec::CupedTwoSided => "cuped-two-sided".into(),
            EstimatorSpec::OneSided(spec) => format!("one-sided-{spec}"),
        }
    }
}

/// Study harness configuration.
#[derive(Debug, Clone, Serialize)]
pub struct StudyConfig {
    /// Monte Carlo trials (at least 50).
    pub trials: usize,
    /// Bootstrap resamples per trial.
    pub bootstrap_b: usize,
    pub params: DgpParams,
    /// Skip failed trials (with a count in the report) instead of aborting.
    pub skip_failed: bool,
    /// Retain per-trial results in the report.
    pub keep_trials: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            trials: 1000,
            bootstrap_b: 200,
            params: DgpParams::default(),
            skip_failed: false,
            keep_trials: false,
        }
    }
}

/// Per-trial, per-estimator outputs.
#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub estimator: String,
    pub estimate: f64,
    pub est_se: f64,
    pub theta: Option<f64>,
    /// Full-data augmentation value (CUPED variants).
    pub tau0: Option<f64>,
    /// Bootstrap SE of the augmentation (CUPED variants).
    pub tau0_se: Option<f64>,
}

/// One line of the study table.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub estimator: String,
    pub mean_estimate: f64,
    /// Sample SD of the estimates across trials (ground-truth SE).
    pub mc_sd: f64,
    /// Mean of the per-trial estimated SEs.
    pub mean_est_se: f64,
}

/// Aggregated study output.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub study: StudyId,
    pub trials_requested: usize,
    pub trials_completed: usize,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub true_itt: f64,
    pub params: DgpParams,
    pub rows: Vec<StudyRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial_results: Option<Vec<TrialResult>>,
}

impl StudyReport {
    pub fn row(&self, estimator: &str) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }

    /// Aligned text table.
    pub fn text_table(&self) -> String {
        let mut width = "estimator".len();
        for r in &self.rows {
            width = width.max(r.estimator.len());
        }
        let mut out = String::new();
        out.push_str(&format!(
            "study {:?}: {} trials (of {}), B={}, true ITT {:.4}\n",
            self.study, self.trials_completed, self.trials_requested, self.bootstrap_b, self.true_itt
        ));
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}\n",
            "estimator", "est. ITT", "MC SD", "est. SE"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<width$}  {:>10.5}  {:>10.5}  {:>10.5}\n",
                r.estimator, r.mean_estimate, r.mc_sd, r.mean_est_se
            ));
        }
        out
    }

    /// Summary rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,mean_estimate,mc_sd,mean_est_se\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.estimator, r.mean_estimate, r.mc_sd, r.mean_est_se
            ));
        }
        out
    }

    /// Per-trial rows as CSV (requires `keep_trials`).
    pub fn trials_csv(&self) -> Option<String> {
        let trials = self.trial_results.as_ref()?;
        let mut out = String::from("trial,estimator,estimate,est_se,theta,tau0,tau0_se\n");
        let fmt_opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for t in trials {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t.trial,
                t.estimator,
                t.estimate,
                t.est_se,
                fmt_opt(t.theta),
                fmt_opt(t.tau0),
                fmt_opt(t.tau0_se),
            ));
        }
        Some(out)
    }
}

/// Run a study: per trial, generate data, optionally residualize, mask to
/// one-sided, run the roster with a shared bootstrap, and aggregate.
///
/// Trials run in parallel over per-trial derived random streams, so the
/// report is identical for any worker count.
pub fn run_study(study: StudyId, config: &StudyConfig, key: RngKey) -> Result<StudyReport> {
    if config.trials < 50 {
        return Err(Error::Validation(format!(
            "studies need at least 50 trials (got {})",
            config.trials
        )));
    }
    if config.bootstrap_b < 50 {
        return Err(Error::Validation(format!(
            "studies need at least 50 bootstrap resamples (got {})",
            config.bootstrap_b
        )));
    }
    config.params.validate()?;
    let roster = study.roster();

    let runs: Vec<Result<Vec<TrialResult>>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            run_trial(study, config, &roster, key.derive(t as u64), t).map_err(|e| {
                Error::StudyTrial {
                    trial: t,
                    source: Box::new(e),
                }
            })
        })
        .collect();

    let mut completed: Vec<Vec<TrialResult>> = Vec::with_capacity(config.trials);
    for run in runs {
        match run {
            Ok(rows) => completed.push(rows),
            Err(e) if config.skip_failed => {
                eprintln!("warning: {e}; trial skipped");
            }
            Err(e) => return Err(e),
        }
    }
    if completed.is_empty() {
        return Err(Error::Validation("every trial failed".into()));
    }

    let mut rows = Vec::with_capacity(roster.len());
    for (j, spec) in roster.iter().enumerate() {
        let estimates: Vec<f64> = completed.iter().map(|t| t[j].estimate).collect();
        let ses: Vec<f64> = completed.iter().map(|t| t[j].est_se).collect();
        rows.push(StudyRow {
            estimator: spec.name(),
            mean_estimate: stats::mean(&estimates),
            mc_sd: stats::sample_variance(&estimates).sqrt(),
            mean_est_se: stats::mean(&ses),
        });
    }

    Ok(StudyReport {
        study,
        trials_requested: config.trials,
        trials_completed: completed.len(),
        bootstrap_b: config.bootstrap_b,
        seed: key.seed,
        true_itt: config.params.true_itt(),
        params: config.params.clone(),
        rows,
        trial_results: config.keep_trials.then(|| {
            completed.into_iter().flatten().collect::<Vec<TrialResult>>()
        }),
    })
}

fn run_trial(
    study: StudyId,
    config: &StudyConfig,
    roster: &[EstimatorSpec],
    trial_key: RngKey,
    trial: usize,
) -> Result<Vec<TrialResult>> {
    let fit = FitOptions::default();
    let generated = generate(&config.params, trial_key.with_stream(0))?;
    let two_sided = match study.residualize_on() {
        Some(cols) => residualize(&generated, &cols)?.base,
        None => generated,
    };
    let one_sided = mask_to_one_sided(&two_sided, &study.hidden_columns())?;

    // full-data quantities
    let delta_full = naive_delta(&one_sided)?;
    let needs_delta0 = roster.contains(&EstimatorSpec::CupedTwoSided);
    let delta0_full = if needs_delta0 {
        Some(trigger_complement_delta(&two_sided)?)
    } else {
        None
    };
    let one_sided_specs: Vec<(usize, &WeightSpec)> = roster
        .iter()
        .enumerate()
        .filter_map(|(j, e)| match e {
            EstimatorSpec::OneSided(w) => Some((j, w)),
            _ => None,
        })
        .collect();
    let prepared: Vec<PreparedWeights> = one_sided_specs
        .iter()
        .map(|(_, w)| w.prepare(&one_sided, &fit))
        .collect::<Result<_>>()?;

    // shared bootstrap: one set of index draws per resample feeds the naive
    // delta, the trigger-complement delta, and every one-sided variant
    let b = config.bootstrap_b;
    let mut delta_draws = vec![0.0; b];
    let mut delta0_draws = needs_delta0.then(|| vec![0.0; b]);
    let mut tau0_draws: Vec<Vec<f64>> = prepared.iter().map(|_| vec![0.0; b]).collect();
    let mut scratch = ResampleScratch::new(one_sided.len());
    let retry_budget = 100;

    for r in 0..b {
        let mut attempt = 0;
        let arm = loop {
            let k = resample_key(trial_key, r, attempt);
            draw_counts(one_sided.len(), k, &mut scratch.counts);
            let arm = arm_stats(
                &one_sided,
                &scratch.counts,
                needs_delta0.then_some(&two_sided),
            );
            if arm.n_t0 > 0 && arm.n_c > 0 && arm.n_t > 0 && (!needs_delta0 || arm.delta0.is_some())
            {
                break arm;
            }
            attempt += 1;
            if attempt > retry_budget {
                return Err(Error::DegenerateResamples {
                    resample: r,
                    attempts: attempt,
                });
            }
        };
        delta_draws[r] = arm.delta_y();
        if let (Some(buf), Some(d0)) = (delta0_draws.as_mut(), arm.delta0) {
            buf[r] = d0;
        }
        for (tau_buf, prep) in tau0_draws.iter_mut().zip(&prepared) {
            tau_buf[r] = resample_tau0(&one_sided, &prep.kind, &arm, &fit, &mut scratch)
                .map_err(|e| Error::ScoreFit {
                    resample: r,
                    source: Box::new(e),
                })?;
        }
    }

    // assemble per-estimator rows in roster order
    let mut rows = Vec::with_capacity(roster.len());
    let mut one_sided_cursor = 0usize;
    for spec in roster {
        let row = match spec {
            EstimatorSpec::Naive => TrialResult {
                trial,
                estimator: spec.name(),
                estimate: delta_full.itt_estimate,
                est_se: delta_full.standard_error.expect("closed-form SE"),
                theta: None,
                tau0: None,
                tau0_se: None,
            },
            EstimatorSpec::TriggerDilute => {
                let report = trigger_dilute(&two_sided)?;
                TrialResult {
                    trial,
                    estimator: spec.name(),
                    estimate: report.itt_estimate,
                    est_se: report.standard_error.expect("closed-form SE"),
                    theta: None,
                    tau0: None,
                    tau0_se: None,
                }
            }
            EstimatorSpec::CupedTwoSided => {
                let draws = delta0_draws.as_ref().expect("delta0 draws collected");
                let aug_full = delta0_full.expect("delta0 computed");
                let (estimate, se, theta, aug_se) =
                    adjusted_estimate(delta_full.itt_estimate, aug_full, &delta_draws, draws)?;
                TrialResult {
                    trial,
                    estimator: spec.name(),
                    estimate,
                    est_se: se,
                    theta: Some(theta),
                    tau0: Some(aug_full),
                    tau0_se: Some(aug_se),
                }
            }
            EstimatorSpec::OneSided(_) => {
                let idx = one_sided_cursor;
                one_sided_cursor += 1;
                let aug_full = prepared[idx].full_tau0;
                let (estimate, se, theta, aug_se) = adjusted_estimate(
                    delta_full.itt_estimate,
                    aug_full,
                    &delta_draws,
                    &tau0_draws[idx],
                )?;
                TrialResult {
                    trial,
                    estimator: spec.name(),
                    estimate,
                    est_se: se,
                    theta: Some(theta),
                    tau0: Some(aug_full),
                    tau0_se: Some(aug_se),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// CUPED assembly from paired draws: fitted theta, adjusted estimate, and
/// the adjusted SE.
fn adjusted_estimate(
    delta_full: f64,
    aug_full: f64,
    delta_draws: &[f64],
    aug_draws: &[f64],
) -> Result<(f64, f64, f64, f64)> {
    let cov = cov_matrix(delta_draws, aug_draws);
    let theta = estimate_theta(delta_draws, aug_draws)?;
    let var = if theta.degenerate {
        cov.var_delta_y
    } else {
        variance_trg1(&cov)
    };
    Ok((
        delta_full - theta.theta * aug_full,
        var.sqrt(),
        theta.theta,
        cov.var_tau0.sqrt(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::augmentation_tau0;

    #[test]
    fn default_params_pass_validation_and_pin_the_true_effect() {
        let p = DgpParams::default();
        p.validate().unwrap();
        assert!((p.true_itt() - 0.075).abs() < 1e-12);
        assert!((p.x1_mean() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        let p = DgpParams {
            c_3: 0.5, // r_low + c_3 * (x2 - 0.5) dips below 0
            ..DgpParams::default()
        };
        assert!(p.validate().is_err());

        let p = DgpParams {
            r_effect: 0.95, // exposed high-tier rate exceeds 1
            ..DgpParams::default()
        };
        assert!(p.validate().is_err());

        let p = DgpParams {
            n_control: 0,
            ..DgpParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn generated_moments_match_their_analytic_values() {
        let params = DgpParams::default();
        let ds = generate(&params, RngKey::new(1234)).unwrap();
        assert_eq!(ds.len(), 100_000);
        assert_eq!(ds.mode(), TriggerMode::TwoSided);

        let x1_col = ds.covariate_index(COL_X1).unwrap();
        let ps_col = ds.covariate_index(COL_PS).unwrap();
        let n = ds.len() as f64;
        let mean_x1: f64 = (0..ds.len()).map(|i| ds.covariate(i, x1_col)).sum::<f64>() / n;
        let mean_ps: f64 = (0..ds.len()).map(|i| ds.covariate(i, ps_col)).sum::<f64>() / n;
        // x_1 is a mixture of U(0,1) and U(0,0.25); 3 SEs at n = 100k
        assert!((mean_x1 - 0.2).abs() < 3.0 * 0.3 / n.sqrt(), "mean x1 {mean_x1}");
        assert!((mean_ps - 0.05).abs() < 3.0 * 0.02 / n.sqrt(), "mean p_s {mean_ps}");

        // realized triggering rate in the treatment arm near p_1
        let part = ds.partition();
        let n_t = (part.t0.len() + part.t1.len()) as f64;
        let rate = part.t1.len() as f64 / n_t;
        let se = (0.05f64 * 0.95 / n_t).sqrt();
        assert!((rate - 0.05).abs() < 3.0 * se, "trigger rate {rate}");
    }

    #[test]
    fn generation_is_reproducible() {
        let params = DgpParams {
            n_control: 500,
            n_treatment: 1500,
            ..DgpParams::default()
        };
        let a = generate(&params, RngKey::new(7)).unwrap();
        let b = generate(&params, RngKey::new(7)).unwrap();
        assert_eq!(a, b);
        let c = generate(&params, RngKey::new(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn masking_hides_labels_and_columns() {
        let params = DgpParams {
            n_control: 400,
            n_treatment: 1200,
            ..DgpParams::default()
        };
        let ds = generate(&params, RngKey::new(3)).unwrap();
        let masked = mask_to_one_sided(&ds, &[COL_X1.to_string()]).unwrap();
        assert_eq!(masked.mode(), TriggerMode::OneSided);
        assert!(masked.covariate_index(COL_X1).is_err());
        assert!(masked.covariate_index(COL_X2).is_ok());

        assert!(mask_to_one_sided(&ds, &["nope".to_string()]).is_err());
    }

    #[test]
    fn hiding_every_covariate_breaks_score_fitting_loudly() {
        let params = DgpParams {
            n_control: 400,
            n_treatment: 1200,
            ..DgpParams::default()
        };
        let ds = generate(&params, RngKey::new(3)).unwrap();
        let masked = mask_to_one_sided(
            &ds,
            &[
                COL_X1.to_string(),
                COL_X2.to_string(),
                COL_U.to_string(),
                COL_PS.to_string(),
            ],
        )
        .unwrap();
        let spec = WeightSpec::Principal {
            covariates: vec![COL_X1.to_string()],
        };
        assert!(spec.compute(&masked, &FitOptions::default()).is_err());
    }

    #[test]
    fn uninformative_covariates_make_the_augmentation_mean_zero() {
        // c_1 = c_2 = 0: triggering is independent of everything, so p_s is
        // constant and ground-truth weights reduce the augmentation to a
        // T0-vs-C mean difference that is mean-zero by randomization.
        let params = DgpParams {
            n_control: 5_000,
            n_treatment: 15_000,
            c_1: 0.0,
            c_2: 0.0,
            ..DgpParams::default()
        };
        let spec = WeightSpec::GroundTruth {
            column: COL_PS.to_string(),
        };
        let fit = FitOptions::default();
        let key = RngKey::new(99);
        let taus: Vec<f64> = (0..500)
            .into_par_iter()
            .map(|t| {
                let ds = generate(&params, key.derive(t)).unwrap();
                let masked = mask_to_one_sided(&ds, &[]).unwrap();
                let scores = spec.compute(&masked, &fit).unwrap();
                augmentation_tau0(&masked, &scores).unwrap()
            })
            .collect();
        let mean = stats::mean(&taus);
        let mc_se = (stats::sample_variance(&taus) / taus.len() as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * mc_se,
            "tau0 mean {mean} vs MC SE {mc_se}"
        );
    }

    #[test]
    fn null_effect_study_centers_on_zero() {
        let config = StudyConfig {
            trials: 50,
            bootstrap_b: 50,
            params: DgpParams {
                n_control: 1000,
                n_treatment: 3000,
                r_effect: 0.0,
                ..DgpParams::default()
            },
            ..StudyConfig::default()
        };
        let report = run_study(StudyId::S1, &config, RngKey::new(5)).unwrap();
        assert_eq!(report.true_itt, 0.0);
        assert_eq!(report.trials_completed, 50);
        for row in &report.rows {
            let mc_se = row.mc_sd / (report.trials_completed as f64).sqrt();
            assert!(
                row.mean_estimate.abs() < 3.0 * mc_se,
                "{} mean {} vs MC SE {}",
                row.estimator,
                row.mean_estimate,
                mc_se
            );
        }
    }

    #[test]
    fn study_reports_are_deterministic() {
        let config = StudyConfig {
            trials: 50,
            bootstrap_b: 50,
            params: DgpParams {
                n_control: 300,
                n_treatment: 900,
                ..DgpParams::default()
            },
            keep_trials: true,
            ..StudyConfig::default()
        };
        let a = run_study(StudyId::S1, &config, RngKey::new(21)).unwrap();
        let b = run_study(StudyId::S1, &config, RngKey::new(21)).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn roster_names_are_stable() {
        let names: Vec<String> = StudyId::S2.roster().iter().map(|e| e.name()).collect();
        assert_eq!(
            names,
            vec![
                "naive",
                "trigger-dilute",
                "cuped-two-sided",
                "one-sided-principal(x_1,x_2)",
                "one-sided-truth(p_s)",
                "one-sided-propensity(x_1,x_2)",
                "one-sided-entropy(x_1,x_2)",
                "one-sided-entropy(x_1,x_2,u)",
                "one-sided-entropy(p_s)",
            ]
        );
    }
}
