//! Point estimators for the overall ITT effect: the naive
//! difference-in-means, trigger-dilute, the two-sided and one-sided CUPED
//! trigger estimators, and outcome residualization for regression
//! adjustment.
//!
//! All functions here are pure: randomness (bootstrap resampling, theta
//! fitting) lives in [`crate::inference`], and the CUPED estimators take
//! `theta` as an explicit argument so deterministic arithmetic can be tested
//! against pinned values.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::data::{group_summary, ExperimentDataset, TriggerMode};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve_in_place;
use crate::scoring::ScoreSet;
use crate::stats;

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Naive,
    TriggerDilute,
    CupedOneSided,
    CupedTwoSided,
}

/// A point estimate with its standard error and method metadata.
///
/// `standard_error` is `None` until filled: the CUPED estimators get theirs
/// from the bootstrap (see [`crate::inference::estimate_one_sided`]), while
/// the naive and trigger-dilute estimators carry closed forms.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    /// ITT estimate in outcome units.
    pub itt_estimate: f64,
    pub standard_error: Option<f64>,
    /// CUPED scaling coefficient; present for CUPED variants only.
    pub theta: Option<f64>,
    /// Value of the augmentation term the estimate was adjusted by.
    pub augmentation_value: Option<f64>,
    /// Description of the weighting pipeline, when one was used.
    pub weights: Option<String>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// Difference in mean outcomes between treatment and control, with the
/// two-sample closed-form standard error.
pub fn naive_delta(ds: &ExperimentDataset) -> Result<EstimateReport> {
    let part = ds.partition();
    let t: Vec<f64> = part
        .t1
        .iter()
        .chain(&part.t0)
        .map(|&i| ds.outcome(i as usize))
        .collect();
    let c: Vec<f64> = part.c.iter().map(|&i| ds.outcome(i as usize)).collect();
    let st = group_summary(&t)?;
    let sc = group_summary(&c)?;
    let se = (st.sample_variance / st.n as f64 + sc.sample_variance / sc.n as f64).sqrt();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("n_treatment".into(), st.n as f64);
    diagnostics.insert("n_control".into(), sc.n as f64);
    Ok(EstimateReport {
        method: Method::Naive,
        itt_estimate: st.mean - sc.mean,
        standard_error: Some(se),
        theta: None,
        augmentation_value: None,
        weights: None,
        diagnostics,
    })
}

/// Triggered-subgroup difference diluted by the triggering rate. Requires
/// counterfactual trigger labels on the control group.
pub fn trigger_dilute(ds: &ExperimentDataset) -> Result<EstimateReport> {
    if ds.mode() != TriggerMode::TwoSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::TwoSided,
            found: ds.mode(),
        });
    }
    let part = ds.partition();
    let c1 = part.c1.as_ref().expect("two-sided partition has c1");
    if part.t1.len() < 2 || c1.len() < 2 {
        return Err(Error::Validation(format!(
            "trigger-dilute needs at least 2 triggered units per arm (got {} and {})",
            part.t1.len(),
            c1.len()
        )));
    }
    let yt1: Vec<f64> = part.t1.iter().map(|&i| ds.outcome(i as usize)).collect();
    let yc1: Vec<f64> = c1.iter().map(|&i| ds.outcome(i as usize)).collect();
    let st1 = group_summary(&yt1)?;
    let sc1 = group_summary(&yc1)?;
    let n = ds.len() as f64;
    let gamma = (st1.n + sc1.n) as f64 / n;
    let diff = st1.mean - sc1.mean;
    let variance = (st1.sample_variance / st1.n as f64 + sc1.sample_variance / sc1.n as f64)
        * gamma
        * gamma
        + gamma * (1.0 - gamma) / n * diff * diff;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("triggering_rate".into(), gamma);
    diagnostics.insert("triggered_diff".into(), diff);
    Ok(EstimateReport {
        method: Method::TriggerDilute,
        itt_estimate: diff * gamma,
        standard_error: Some(variance.sqrt()),
        theta: None,
        augmentation_value: None,
        weights: None,
        diagnostics,
    })
}

/// The one-sided augmentation: mean outcome of the non-triggered treatment
/// units minus a weighted mean of the control outcomes.
///
/// Treatment units enter with the hard weight `1 - D_i`; control units enter
/// with `1 - w_i` for probability-scale scores, or with the weights as-is
/// for entropy-balance weights (which already target the control-to-T0
/// reweighting). The ratio form makes the overall weight scale irrelevant.
pub fn augmentation_tau0(ds: &ExperimentDataset, scores: &ScoreSet) -> Result<f64> {
    if ds.mode() != TriggerMode::OneSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::OneSided,
            found: ds.mode(),
        });
    }
    let part = ds.partition();
    if scores.len() != part.c.len() {
        return Err(Error::Validation(format!(
            "{} control weights for {} control units",
            scores.len(),
            part.c.len()
        )));
    }
    let mut t0_sum = 0.0;
    for &i in &part.t0 {
        t0_sum += ds.outcome(i as usize);
    }
    let t0_mean = t0_sum / part.t0.len() as f64;

    let probability_scale = scores.kind.is_probability_scale();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&i, &w) in part.c.iter().zip(&scores.control_weights) {
        let u = if probability_scale { 1.0 - w } else { w };
        num += u * ds.outcome(i as usize);
        den += u;
    }
    if !(den > 0.0) {
        return Err(Error::Validation(
            "total control weight is zero in the augmentation".into(),
        ));
    }
    Ok(t0_mean - num / den)
}

/// One-sided CUPED trigger estimator: the naive delta minus `theta` times
/// the augmentation. The standard error is filled by the inference module.
pub fn cuped_one_sided(
    ds: &ExperimentDataset,
    scores: &ScoreSet,
    theta: f64,
) -> Result<EstimateReport> {
    let delta = naive_delta(ds)?;
    let tau0 = augmentation_tau0(ds, scores)?;
    Ok(EstimateReport {
        method: Method::CupedOneSided,
        itt_estimate: delta.itt_estimate - theta * tau0,
        standard_error: None,
        theta: Some(theta),
        augmentation_value: Some(tau0),
        weights: None,
        diagnostics: delta.diagnostics,
    })
}

/// Two-sided CUPED trigger estimator: the naive delta minus `theta` times
/// the trigger-complement delta (T0 mean minus C0 mean).
pub fn cuped_two_sided(ds: &ExperimentDataset, theta: f64) -> Result<EstimateReport> {
    let delta = naive_delta(ds)?;
    let delta0 = trigger_complement_delta(ds)?;
    Ok(EstimateReport {
        method: Method::CupedTwoSided,
        itt_estimate: delta.itt_estimate - theta * delta0,
        standard_error: None,
        theta: Some(theta),
        augmentation_value: Some(delta0),
        weights: None,
        diagnostics: delta.diagnostics,
    })
}

/// Difference in mean outcomes between T0 and C0 (two-sided mode).
pub(crate) fn trigger_complement_delta(ds: &ExperimentDataset) -> Result<f64> {
    if ds.mode() != TriggerMode::TwoSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::TwoSided,
            found: ds.mode(),
        });
    }
    let part = ds.partition();
    let c0 = part.c0.as_ref().expect("two-sided partition has c0");
    if part.t0.is_empty() || c0.is_empty() {
        return Err(Error::Validation(
            "two-sided CUPED needs nonempty T0 and C0 groups".into(),
        ));
    }
    let t0_mean =
        part.t0.iter().map(|&i| ds.outcome(i as usize)).sum::<f64>() / part.t0.len() as f64;
    let c0_mean = c0.iter().map(|&i| ds.outcome(i as usize)).sum::<f64>() / c0.len() as f64;
    Ok(t0_mean - c0_mean)
}

/// A dataset whose outcome has been replaced by the residual from an OLS fit
/// on pre-assignment covariates, plus the fitted coefficients (intercept
/// first).
#[derive(Debug, Clone)]
pub struct ResidualizedDataset {
    pub base: ExperimentDataset,
    pub fit_coefficients: Vec<f64>,
}

/// Replace outcomes with residuals `y - E[y | x]` from an ordinary least
/// squares fit of the outcome on the named covariates over the pooled
/// sample. With pre-assignment covariates this leaves every downstream
/// estimator unchanged in expectation.
pub fn residualize(ds: &ExperimentDataset, covariates: &[String]) -> Result<ResidualizedDataset> {
    if covariates.is_empty() {
        return Err(Error::Validation(
            "residualization needs at least one covariate".into(),
        ));
    }
    let cols: Vec<usize> = covariates
        .iter()
        .map(|name| ds.covariate_index(name))
        .collect::<Result<_>>()?;
    let n = ds.len();
    let k = cols.len() + 1;

    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for i in 0..n {
        row[0] = 1.0;
        for (slot, &j) in row[1..].iter_mut().zip(&cols) {
            *slot = ds.covariate(i, j);
        }
        let y = ds.outcome(i);
        for p in 0..k {
            xty[p] += row[p] * y;
            for q in 0..=p {
                xtx[p * k + q] += row[p] * row[q];
            }
        }
    }
    if !cholesky_solve_in_place(&mut xtx, &mut xty, k) {
        return Err(Error::RankDeficient(
            "residualization design matrix is singular".into(),
        ));
    }
    let beta = xty;

    let mut residuals = Vec::with_capacity(n);
    for i in 0..n {
        let mut fitted = beta[0];
        for (b, &j) in beta[1..].iter().zip(&cols) {
            fitted += b * ds.covariate(i, j);
        }
        residuals.push(ds.outcome(i) - fitted);
    }
    debug_assert!(
        stats::mean(&residuals).abs() <= 1e-10 * (1.0 + stats::mean(ds.outcomes()).abs()),
        "OLS residuals should average to zero over the fitting sample"
    );
    Ok(ResidualizedDataset {
        base: ds.with_outcomes(residuals)?,
        fit_coefficients: beta,
    })
}
