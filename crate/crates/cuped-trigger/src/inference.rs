//! Resampling inference for the one-sided trigger estimator: the
//! refit-per-resample bootstrap, the CUPED scaling coefficient fitted from
//! bootstrap draws, the variance estimator
//! `var(delta) - cov(delta, tau0)^2 / var(tau0)`, and the mean-zero Wald
//! test on the augmentation.
//!
//! Each bootstrap resample draws n units with replacement from the full
//! dataset and re-runs the whole weighting pipeline (model refit or balance
//! re-solve) on the resample, so the draws carry weight-estimation noise.
//!
//! Randomness is keyed: resample `r` reads from its own counter-based
//! stream, so results are identical for a fixed seed regardless of how
//! resamples are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::balancing::{
    balance_weights_to_scoreset, entropy_balance, entropy_balance_with_log_base, BalanceProblem,
};
use crate::data::{Arm, ExperimentDataset, TriggerMode};
use crate::error::{Error, Result};
use crate::estimator::{
    augmentation_tau0, cuped_one_sided, cuped_two_sided, naive_delta, trigger_complement_delta,
    EstimateReport,
};
use crate::linalg::DenseMatrix;
use crate::scoring::{
    clamp_probability, fit_logistic_slice, fit_logistic_weighted, invert_score_clamped, sigmoid,
    FitOptions, LogisticModel, ScoreKind, ScoreSet,
};
use crate::stats;

/// Streams per resample index; redraw attempt `a` of resample `r` uses
/// stream `1 + r * RESAMPLE_STREAM_STRIDE + a`.
const RESAMPLE_STREAM_STRIDE: u64 = 128;

/// Key identifying one reproducible random stream: a named counter-based
/// generator (ChaCha8) plus a 64-bit seed and stream id. The same
/// (seed, stream) pair produces the same draw sequence on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
}

impl RngKey {
    /// Name of the underlying generator, surfaced in reports.
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        RngKey { seed, stream: 0 }
    }

    /// Same seed, different stream.
    pub fn with_stream(self, stream: u64) -> Self {
        RngKey {
            seed: self.seed,
            stream,
        }
    }

    /// An independent key derived from this one (e.g. per simulation trial).
    pub fn derive(self, label: u64) -> Self {
        RngKey {
            seed: splitmix64(self.seed ^ (label.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            stream: 0,
        }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn resample_key(base: RngKey, resample: usize, attempt: usize) -> RngKey {
    base.with_stream(1 + resample as u64 * RESAMPLE_STREAM_STRIDE + attempt as u64)
}

/// How control weights are produced for the augmentation. Each variant names
/// the dataset columns it is allowed to consume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    /// Triggering-probability model fit on treatment rows, predicted
    /// out-of-sample on the control rows.
    Principal { covariates: Vec<String> },
    /// Weights read directly from a column holding true triggering
    /// probabilities (simulation studies).
    GroundTruth { column: String },
    /// Membership-in-T0 model fit in-sample on T0 and control rows, then
    /// converted to the triggering-probability scale.
    Propensity { covariates: Vec<String> },
    /// Entropy balancing of the named columns' control means onto the T0
    /// means.
    EntropyBalance { columns: Vec<String> },
    /// Diagnostic stub whose augmentation is identically zero; yields no
    /// variance reduction by construction.
    ConstantZero,
}

impl std::fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightSpec::Principal { covariates } => {
                write!(f, "principal({})", covariates.join(","))
            }
            WeightSpec::GroundTruth { column } => write!(f, "truth({column})"),
            WeightSpec::Propensity { covariates } => {
                write!(f, "propensity({})", covariates.join(","))
            }
            WeightSpec::EntropyBalance { columns } => {
                write!(f, "entropy({})", columns.join(","))
            }
            WeightSpec::ConstantZero => write!(f, "constant-zero"),
        }
    }
}

impl WeightSpec {
    /// Compute the full-data score set for this spec.
    pub fn compute(&self, ds: &ExperimentDataset, options: &FitOptions) -> Result<ScoreSet> {
        match self.compute_with_model(ds, options)? {
            (Some(scores), _) => Ok(scores),
            (None, _) => Err(Error::Validation(
                "the constant-zero stub has no score set".into(),
            )),
        }
    }

    fn compute_with_model(
        &self,
        ds: &ExperimentDataset,
        options: &FitOptions,
    ) -> Result<(Option<ScoreSet>, Option<LogisticModel>)> {
        if ds.mode() != TriggerMode::OneSided {
            return Err(Error::ModeMismatch {
                expected: TriggerMode::OneSided,
                found: ds.mode(),
            });
        }
        let part = ds.partition();
        match self {
            WeightSpec::Principal { covariates } => {
                let cols = resolve_columns(ds, covariates)?;
                let mut feat = Vec::new();
                let mut labels = Vec::new();
                gather_features(ds, part.t1.iter().chain(&part.t0), &cols, &mut feat);
                for &i in part.t1.iter().chain(&part.t0) {
                    labels.push(if ds.triggered(i as usize) == Some(true) {
                        1.0
                    } else {
                        0.0
                    });
                }
                let (model, _) = fit_logistic_slice(&feat, cols.len(), &labels, options, None)?;
                let weights = part
                    .c
                    .iter()
                    .map(|&i| predict_prob(&model.coefficients, ds, i as usize, &cols))
                    .collect();
                Ok((
                    Some(ScoreSet::new(ScoreKind::PrincipalOutOfSample, weights)?),
                    Some(model),
                ))
            }
            WeightSpec::GroundTruth { column } => {
                let col = ds.covariate_index(column)?;
                let weights = part
                    .c
                    .iter()
                    .map(|&i| ground_truth_weight(ds, i as usize, col))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((
                    Some(ScoreSet::new(ScoreKind::PrincipalGroundTruth, weights)?),
                    None,
                ))
            }
            WeightSpec::Propensity { covariates } => {
                let cols = resolve_columns(ds, covariates)?;
                let (model, weights) = fit_propensity(ds, &part.t0, &part.c, part.t1.len(), &cols, options, None)?;
                Ok((
                    Some(ScoreSet::new(ScoreKind::PropensityInSample, weights)?),
                    Some(model),
                ))
            }
            WeightSpec::EntropyBalance { columns } => {
                let cols = resolve_columns(ds, columns)?;
                let targets = column_means(ds, &part.t0, &cols);
                let mut feat = Vec::new();
                gather_features(ds, part.c.iter(), &cols, &mut feat);
                let problem = BalanceProblem::new(
                    DenseMatrix::from_flat(feat, part.c.len(), cols.len()),
                    targets,
                );
                let solution = entropy_balance(&problem)?;
                Ok((Some(balance_weights_to_scoreset(&solution)?), None))
            }
            WeightSpec::ConstantZero => Ok((None, None)),
        }
    }

    /// Resolve columns, fit the full-data model, and cache everything the
    /// per-resample refits need.
    pub(crate) fn prepare(
        &self,
        ds: &ExperimentDataset,
        options: &FitOptions,
    ) -> Result<PreparedWeights> {
        let (scores, model) = self.compute_with_model(ds, options)?;
        let full_tau0 = match &scores {
            Some(s) => augmentation_tau0(ds, s)?,
            None => 0.0,
        };
        let kind = match self {
            WeightSpec::Principal { covariates } => PreparedKind::Principal {
                cols: resolve_columns(ds, covariates)?,
                warm: model.expect("principal fit produces a model").coefficients,
            },
            WeightSpec::GroundTruth { column } => PreparedKind::GroundTruth {
                col: ds.covariate_index(column)?,
            },
            WeightSpec::Propensity { covariates } => PreparedKind::Propensity {
                cols: resolve_columns(ds, covariates)?,
                warm: model.expect("propensity fit produces a model").coefficients,
            },
            WeightSpec::EntropyBalance { columns } => PreparedKind::Entropy {
                cols: resolve_columns(ds, columns)?,
            },
            WeightSpec::ConstantZero => PreparedKind::ConstantZero,
        };
        Ok(PreparedWeights {
            kind,
            full_tau0,
            full_scores: scores,
        })
    }
}

fn resolve_columns(ds: &ExperimentDataset, names: &[String]) -> Result<Vec<usize>> {
    if names.is_empty() {
        return Err(Error::Validation(
            "weight specification names no covariate columns".into(),
        ));
    }
    names.iter().map(|n| ds.covariate_index(n)).collect()
}

fn gather_features<'a>(
    ds: &ExperimentDataset,
    rows: impl Iterator<Item = &'a u32>,
    cols: &[usize],
    out: &mut Vec<f64>,
) {
    out.clear();
    for &i in rows {
        let row = ds.covariate_row(i as usize);
        for &j in cols {
            out.push(row[j]);
        }
    }
}

fn column_means(ds: &ExperimentDataset, rows: &[u32], cols: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; cols.len()];
    for &i in rows {
        let row = ds.covariate_row(i as usize);
        for (s, &j) in sums.iter_mut().zip(cols) {
            *s += row[j];
        }
    }
    sums.iter_mut().for_each(|s| *s /= rows.len() as f64);
    sums
}

#[inline]
fn predict_prob(coef: &[f64], ds: &ExperimentDataset, row: usize, cols: &[usize]) -> f64 {
    let x = ds.covariate_row(row);
    let mut eta = coef[0];
    for (b, &j) in coef[1..].iter().zip(cols) {
        eta += b * x[j];
    }
    clamp_probability(sigmoid(eta))
}

fn ground_truth_weight(ds: &ExperimentDataset, row: usize, col: usize) -> Result<f64> {
    let p = ds.covariate(row, col);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!(
            "ground-truth probability {p} outside [0, 1] for unit `{}`",
            ds.unit_id(row)
        )));
    }
    Ok(clamp_probability(p))
}

/// Fit the in-sample T0-membership model over the given T0 and control rows
/// and return converted control weights. The gathered design matrix places
/// the T0 block first, so control predictions reuse its tail rows.
fn fit_propensity(
    ds: &ExperimentDataset,
    t0_rows: &[u32],
    c_rows: &[u32],
    n_t1: usize,
    cols: &[usize],
    options: &FitOptions,
    warm: Option<&[f64]>,
) -> Result<(LogisticModel, Vec<f64>)> {
    let m = cols.len();
    let n_fit = t0_rows.len() + c_rows.len();
    let mut feat = Vec::with_capacity(n_fit * m);
    gather_features(ds, t0_rows.iter().chain(c_rows), cols, &mut feat);
    let mut labels = vec![0.0; n_fit];
    labels[..t0_rows.len()].fill(1.0);

    let (model, _) = fit_logistic_slice(&feat, m, &labels, options, warm)?;
    let k = c_rows.len() as f64 / (t0_rows.len() + n_t1) as f64;
    let weights = feat[t0_rows.len() * m..]
        .chunks_exact(m)
        .map(|row| {
            let mut eta = model.coefficients[0];
            for (b, x) in model.coefficients[1..].iter().zip(row) {
                eta += b * x;
            }
            let e = clamp_probability(sigmoid(eta));
            clamp_probability(invert_score_clamped(e, k))
        })
        .collect();
    Ok((model, weights))
}

/// Column indices and warm-start state for per-resample refits.
pub(crate) struct PreparedWeights {
    pub kind: PreparedKind,
    pub full_tau0: f64,
    pub full_scores: Option<ScoreSet>,
}

pub(crate) enum PreparedKind {
    Principal { cols: Vec<usize>, warm: Vec<f64> },
    GroundTruth { col: usize },
    Propensity { cols: Vec<usize>, warm: Vec<f64> },
    Entropy { cols: Vec<usize> },
    ConstantZero,
}

/// Reusable per-thread buffers for the resample loop. A resample is held as
/// a multiplicity count per base row, so every downstream pass streams the
/// base data in row order instead of gathering shuffled indices.
pub(crate) struct ResampleScratch {
    pub counts: Vec<u32>,
    feat: Vec<f64>,
    labels: Vec<f64>,
    fit_weights: Vec<f64>,
    compact_rows: Vec<u32>,
    log_counts: Vec<f64>,
}

impl ResampleScratch {
    pub fn new(n: usize) -> Self {
        ResampleScratch {
            counts: vec![0; n],
            feat: Vec::new(),
            labels: Vec::new(),
            fit_weights: Vec::new(),
            compact_rows: Vec::new(),
            log_counts: Vec::new(),
        }
    }
}

/// Group statistics of one resample (sizes are draw multiplicities).
#[derive(Debug, Clone, Copy)]
pub(crate) struct ArmDraw {
    pub n_t: usize,
    pub n_c: usize,
    pub n_t0: usize,
    pub t_mean: f64,
    pub c_mean: f64,
    pub t0_mean: f64,
    /// T0-vs-C0 delta under two-sided labels, when requested and defined.
    pub delta0: Option<f64>,
}

impl ArmDraw {
    pub fn delta_y(&self) -> f64 {
        self.t_mean - self.c_mean
    }
}

/// Draw n units with replacement from the pooled dataset as multiplicity
/// counts.
pub(crate) fn draw_counts(n: usize, key: RngKey, counts: &mut [u32]) {
    debug_assert_eq!(counts.len(), n);
    counts.iter_mut().for_each(|c| *c = 0);
    let mut rng = key.rng();
    let n = n as u32;
    for _ in 0..n {
        counts[rng.random_range(0..n) as usize] += 1;
    }
}

/// Stratified variant: hold the arm sizes fixed and resample within arms.
pub(crate) fn draw_counts_stratified(arms: &ArmIndex, key: RngKey, counts: &mut [u32]) {
    counts.iter_mut().for_each(|c| *c = 0);
    let mut rng = key.rng();
    for _ in 0..arms.t.len() {
        counts[arms.t[rng.random_range(0..arms.t.len() as u32) as usize] as usize] += 1;
    }
    for _ in 0..arms.c.len() {
        counts[arms.c[rng.random_range(0..arms.c.len() as u32) as usize] as usize] += 1;
    }
}

/// One pass over the base rows: per-arm outcome means of the resample, the
/// T0 mean, and (when `delta0_labels` is given) the trigger-complement delta
/// read against that dataset's two-sided labels.
pub(crate) fn arm_stats(
    ds: &ExperimentDataset,
    counts: &[u32],
    delta0_labels: Option<&ExperimentDataset>,
) -> ArmDraw {
    let mut t_sum = 0.0;
    let mut c_sum = 0.0;
    let mut t0_sum = 0.0;
    let mut c0_sum = 0.0;
    let (mut n_t, mut n_c, mut n_t0, mut n_c0) = (0usize, 0usize, 0usize, 0usize);
    for (i, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let cf = c as f64;
        let y = ds.outcome(i);
        match ds.assignment(i) {
            Arm::Treatment => {
                n_t += c as usize;
                t_sum += cf * y;
                if ds.triggered(i) == Some(false) {
                    n_t0 += c as usize;
                    t0_sum += cf * y;
                }
            }
            Arm::Control => {
                n_c += c as usize;
                c_sum += cf * y;
                if let Some(two_sided) = delta0_labels {
                    if two_sided.triggered(i) == Some(false) {
                        n_c0 += c as usize;
                        c0_sum += cf * two_sided.outcome(i);
                    }
                }
            }
        }
    }
    let t0_mean = t0_sum / n_t0 as f64;
    let delta0 = match delta0_labels {
        Some(_) if n_c0 > 0 && n_t0 > 0 => Some(t0_mean - c0_sum / n_c0 as f64),
        Some(_) => None,
        None => None,
    };
    ArmDraw {
        n_t,
        n_c,
        n_t0,
        t_mean: t_sum / n_t as f64,
        c_mean: c_sum / n_c as f64,
        t0_mean,
        delta0,
    }
}

/// Per-arm row indices of the base dataset (for stratified resampling).
pub(crate) struct ArmIndex {
    pub t: Vec<u32>,
    pub c: Vec<u32>,
}

impl ArmIndex {
    pub fn of(ds: &ExperimentDataset) -> Self {
        let mut t = Vec::new();
        let mut c = Vec::new();
        for i in 0..ds.len() {
            match ds.assignment(i) {
                Arm::Treatment => t.push(i as u32),
                Arm::Control => c.push(i as u32),
            }
        }
        ArmIndex { t, c }
    }
}

/// Natural log of a small positive integer, via a table for the common
/// multiplicities.
#[inline]
fn log_count(c: u32) -> f64 {
    const TABLE: [f64; 16] = [
        0.0,
        0.0,
        std::f64::consts::LN_2,
        1.0986122886681098,
        1.3862943611198906,
        1.6094379124341003,
        1.791759469228055,
        1.9459101090932196,
        2.0794415416798357,
        2.1972245773362196,
        2.302585092994046,
        2.3978952727983707,
        2.4849066497880004,
        2.5649493574615367,
        2.6390573296152584,
        2.70805020110221,
    ];
    if (c as usize) < TABLE.len() {
        TABLE[c as usize]
    } else {
        (c as f64).ln()
    }
}

/// Recompute the augmentation on the resample in `scratch.counts`,
/// refitting the weighting pipeline from the resample's own rows.
pub(crate) fn resample_tau0(
    ds: &ExperimentDataset,
    prepared: &PreparedKind,
    arm: &ArmDraw,
    options: &FitOptions,
    scratch: &mut ResampleScratch,
) -> Result<f64> {
    match prepared {
        PreparedKind::ConstantZero => Ok(0.0),
        PreparedKind::GroundTruth { col } => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0 || ds.assignment(i) != Arm::Control {
                    continue;
                }
                let w = ground_truth_weight(ds, i, *col)?;
                let u = c as f64 * (1.0 - w);
                num += u * ds.outcome(i);
                den += u;
            }
            weighted_tau0(arm.t0_mean, num, den)
        }
        PreparedKind::Principal { cols, warm } => {
            let m = cols.len();
            scratch.feat.clear();
            scratch.labels.clear();
            scratch.fit_weights.clear();
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0 || ds.assignment(i) != Arm::Treatment {
                    continue;
                }
                let row = ds.covariate_row(i);
                for &j in cols {
                    scratch.feat.push(row[j]);
                }
                scratch
                    .labels
                    .push(if ds.triggered(i) == Some(true) { 1.0 } else { 0.0 });
                scratch.fit_weights.push(c as f64);
            }
            let (model, _) = fit_logistic_weighted(
                &scratch.feat,
                m,
                &scratch.labels,
                &scratch.fit_weights,
                options,
                Some(warm),
            )?;
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0 || ds.assignment(i) != Arm::Control {
                    continue;
                }
                let w = predict_prob(&model.coefficients, ds, i, cols);
                let u = c as f64 * (1.0 - w);
                num += u * ds.outcome(i);
                den += u;
            }
            weighted_tau0(arm.t0_mean, num, den)
        }
        PreparedKind::Propensity { cols, warm } => {
            let m = cols.len();
            scratch.feat.clear();
            scratch.labels.clear();
            scratch.fit_weights.clear();
            scratch.compact_rows.clear();
            // T0 block first, then the control block whose fitted values
            // feed the augmentation
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0
                    || ds.assignment(i) != Arm::Treatment
                    || ds.triggered(i) != Some(false)
                {
                    continue;
                }
                let row = ds.covariate_row(i);
                for &j in cols {
                    scratch.feat.push(row[j]);
                }
                scratch.labels.push(1.0);
                scratch.fit_weights.push(c as f64);
            }
            let t0_rows = scratch.labels.len();
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0 || ds.assignment(i) != Arm::Control {
                    continue;
                }
                let row = ds.covariate_row(i);
                for &j in cols {
                    scratch.feat.push(row[j]);
                }
                scratch.labels.push(0.0);
                scratch.fit_weights.push(c as f64);
                scratch.compact_rows.push(i as u32);
            }
            let (model, _) = fit_logistic_weighted(
                &scratch.feat,
                m,
                &scratch.labels,
                &scratch.fit_weights,
                options,
                Some(warm),
            )?;
            let k = arm.n_c as f64 / arm.n_t as f64;
            let mut num = 0.0;
            let mut den = 0.0;
            for ((row, &i), &c) in scratch.feat[t0_rows * m..]
                .chunks_exact(m)
                .zip(&scratch.compact_rows)
                .zip(&scratch.fit_weights[t0_rows..])
            {
                let mut eta = model.coefficients[0];
                for (b, x) in model.coefficients[1..].iter().zip(row) {
                    eta += b * x;
                }
                let e = clamp_probability(sigmoid(eta));
                let w = clamp_probability(invert_score_clamped(e, k));
                let u = c * (1.0 - w);
                num += u * ds.outcome(i as usize);
                den += u;
            }
            weighted_tau0(arm.t0_mean, num, den)
        }
        PreparedKind::Entropy { cols } => {
            let m = cols.len();
            let mut target_sums = vec![0.0; m];
            let mut target_n = 0.0;
            scratch.feat.clear();
            scratch.log_counts.clear();
            scratch.compact_rows.clear();
            for (i, &c) in scratch.counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                match ds.assignment(i) {
                    Arm::Treatment => {
                        if ds.triggered(i) == Some(false) {
                            let cf = c as f64;
                            let row = ds.covariate_row(i);
                            for (s, &j) in target_sums.iter_mut().zip(cols) {
                                *s += cf * row[j];
                            }
                            target_n += cf;
                        }
                    }
                    Arm::Control => {
                        let row = ds.covariate_row(i);
                        for &j in cols {
                            scratch.feat.push(row[j]);
                        }
                        scratch.log_counts.push(log_count(c));
                        scratch.compact_rows.push(i as u32);
                    }
                }
            }
            target_sums.iter_mut().for_each(|s| *s /= target_n);
            let feat = std::mem::take(&mut scratch.feat);
            let n_rows = scratch.compact_rows.len();
            let problem =
                BalanceProblem::new(DenseMatrix::from_flat(feat, n_rows, m), target_sums);
            let solved = entropy_balance_with_log_base(&problem, &scratch.log_counts);
            scratch.feat = problem.control_covariates.into_data();
            let solution = solved?;
            if !solution.converged {
                return Err(Error::Numerical(format!(
                    "entropy balance did not converge in a resample (violation {:.3e})",
                    solution.max_constraint_violation
                )));
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for (&i, &w) in scratch.compact_rows.iter().zip(&solution.weights) {
                num += w * ds.outcome(i as usize);
                den += w;
            }
            weighted_tau0(arm.t0_mean, num, den)
        }
    }
}

fn weighted_tau0(t0_mean: f64, num: f64, den: f64) -> Result<f64> {
    if !(den > 0.0) {
        return Err(Error::Validation(
            "total control weight is zero in the augmentation".into(),
        ));
    }
    Ok(t0_mean - num / den)
}

/// How bootstrap resamples are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Draw n units from the pooled dataset; arm sizes vary per resample.
    Pooled,
    /// Hold the arm sizes fixed and resample within each arm.
    StratifiedByArm,
}

/// Bootstrap configuration.
#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    /// Number of resamples (at least 50).
    pub b: usize,
    pub mode: ResampleMode,
    /// Redraw budget per resample for degenerate draws (e.g. empty T0).
    pub retry_budget: usize,
    pub fit: FitOptions,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            b: 1000,
            mode: ResampleMode::Pooled,
            retry_budget: 100,
            fit: FitOptions::default(),
        }
    }
}

/// Sample covariance matrix of the paired bootstrap draws
/// `(delta_y, tau0)`, with the n-1 convention.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CovMatrix2 {
    pub var_delta_y: f64,
    pub cov_delta_tau0: f64,
    pub var_tau0: f64,
}

/// Result of a bootstrap run. The raw draw vectors are kept for dumping and
/// diagnostics but excluded from JSON serialization.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub b: usize,
    #[serde(skip_serializing)]
    pub delta_y_draws: Vec<f64>,
    #[serde(skip_serializing)]
    pub tau0_draws: Vec<f64>,
    pub cov_matrix: CovMatrix2,
    pub theta_hat: f64,
    /// True when the augmentation draws had (numerically) zero variance and
    /// theta fell back to 0.
    pub theta_degenerate: bool,
    pub var_trg1_hat: f64,
    pub seed: u64,
    pub stream: u64,
    pub rng_algorithm: &'static str,
    /// Total degenerate redraws across all resamples.
    pub redraws: usize,
}

impl BootstrapResult {
    pub fn se_trg1(&self) -> f64 {
        self.var_trg1_hat.sqrt()
    }

    /// Bootstrap standard error of the augmentation itself.
    pub fn se_tau0(&self) -> f64 {
        self.cov_matrix.var_tau0.sqrt()
    }

    /// Bootstrap standard error of the naive delta.
    pub fn se_delta_y(&self) -> f64 {
        self.cov_matrix.var_delta_y.sqrt()
    }
}

/// CUPED scaling coefficient fitted from paired draws.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    /// Set when the augmentation draws had no usable variance and theta is
    /// the 0 sentinel.
    pub degenerate: bool,
}

/// `theta = cov(delta_y, tau0) / var(tau0)` over bootstrap draws. Both
/// moments use n-1, so the ratio is convention-free. Zero (or numerically
/// negligible) augmentation variance yields the theta = 0 sentinel.
pub fn estimate_theta(delta_y_draws: &[f64], tau0_draws: &[f64]) -> Result<ThetaEstimate> {
    if delta_y_draws.len() != tau0_draws.len() || delta_y_draws.len() < 2 {
        return Err(Error::Validation(
            "theta estimation needs at least 2 paired draws".into(),
        ));
    }
    let var_tau = stats::sample_variance(tau0_draws);
    let var_delta = stats::sample_variance(delta_y_draws);
    if var_tau <= 1e-12 * var_delta.max(f64::MIN_POSITIVE) {
        return Ok(ThetaEstimate {
            theta: 0.0,
            degenerate: true,
        });
    }
    Ok(ThetaEstimate {
        theta: stats::sample_covariance(delta_y_draws, tau0_draws) / var_tau,
        degenerate: false,
    })
}

/// Variance of the adjusted estimator:
/// `var(delta_y) - cov(delta_y, tau0)^2 / var(tau0)`, floored at zero.
/// Zero augmentation variance returns `var(delta_y)` unchanged.
pub fn variance_trg1(cov: &CovMatrix2) -> f64 {
    if cov.var_tau0 <= 1e-12 * cov.var_delta_y.max(f64::MIN_POSITIVE) {
        return cov.var_delta_y;
    }
    (cov.var_delta_y - cov.cov_delta_tau0 * cov.cov_delta_tau0 / cov.var_tau0).max(0.0)
}

pub(crate) fn cov_matrix(delta: &[f64], tau0: &[f64]) -> CovMatrix2 {
    CovMatrix2 {
        var_delta_y: stats::sample_variance(delta),
        cov_delta_tau0: stats::sample_covariance(delta, tau0),
        var_tau0: stats::sample_variance(tau0),
    }
}

fn validate_bootstrap_inputs(config: &BootstrapConfig) -> Result<()> {
    if config.b < 50 {
        return Err(Error::Validation(format!(
            "bootstrap needs at least 50 resamples (got {})",
            config.b
        )));
    }
    Ok(())
}

/// Refit-per-resample bootstrap of `(delta_y, tau0)` for one weighting
/// pipeline on a one-sided dataset.
pub fn bootstrap(
    ds: &ExperimentDataset,
    spec: &WeightSpec,
    config: &BootstrapConfig,
    key: RngKey,
) -> Result<BootstrapResult> {
    let prepared = spec.prepare(ds, &config.fit)?;
    bootstrap_prepared(ds, &prepared, config, key)
}

pub(crate) fn bootstrap_prepared(
    ds: &ExperimentDataset,
    prepared: &PreparedWeights,
    config: &BootstrapConfig,
    key: RngKey,
) -> Result<BootstrapResult> {
    validate_bootstrap_inputs(config)?;
    if ds.mode() != TriggerMode::OneSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::OneSided,
            found: ds.mode(),
        });
    }
    let arms = match config.mode {
        ResampleMode::Pooled => None,
        ResampleMode::StratifiedByArm => Some(ArmIndex::of(ds)),
    };

    let draws: Vec<(f64, f64, usize)> = (0..config.b)
        .into_par_iter()
        .map_init(
            || ResampleScratch::new(ds.len()),
            |scratch, r| -> Result<(f64, f64, usize)> {
                let mut attempt = 0;
                let arm = loop {
                    let k = resample_key(key, r, attempt);
                    match &arms {
                        None => draw_counts(ds.len(), k, &mut scratch.counts),
                        Some(a) => draw_counts_stratified(a, k, &mut scratch.counts),
                    }
                    let arm = arm_stats(ds, &scratch.counts, None);
                    if arm.n_t0 > 0 && arm.n_c > 0 && arm.n_t > 0 {
                        break arm;
                    }
                    attempt += 1;
                    if attempt > config.retry_budget {
                        return Err(Error::DegenerateResamples {
                            resample: r,
                            attempts: attempt,
                        });
                    }
                };
                let tau0 = resample_tau0(ds, &prepared.kind, &arm, &config.fit, scratch)
                    .map_err(|e| Error::ScoreFit {
                        resample: r,
                        source: Box::new(e),
                    })?;
                Ok((arm.delta_y(), tau0, attempt))
            },
        )
        .collect::<Result<_>>()?;

    let delta_y_draws: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let tau0_draws: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let redraws: usize = draws.iter().map(|d| d.2).sum();
    let cov = cov_matrix(&delta_y_draws, &tau0_draws);
    let theta = estimate_theta(&delta_y_draws, &tau0_draws)?;
    let var_trg1_hat = if theta.degenerate {
        cov.var_delta_y
    } else {
        variance_trg1(&cov)
    };
    Ok(BootstrapResult {
        b: config.b,
        delta_y_draws,
        tau0_draws,
        cov_matrix: cov,
        theta_hat: theta.theta,
        theta_degenerate: theta.degenerate,
        var_trg1_hat,
        seed: key.seed,
        stream: key.stream,
        rng_algorithm: RngKey::ALGORITHM,
        redraws,
    })
}

/// Full one-sided pipeline: fit weights, bootstrap theta and the variance,
/// and assemble the adjusted estimate with its standard error.
pub fn estimate_one_sided(
    ds: &ExperimentDataset,
    spec: &WeightSpec,
    config: &BootstrapConfig,
    key: RngKey,
) -> Result<(EstimateReport, BootstrapResult)> {
    let prepared = spec.prepare(ds, &config.fit)?;
    let boot = bootstrap_prepared(ds, &prepared, config, key)?;
    let mut report = match &prepared.full_scores {
        Some(scores) => cuped_one_sided(ds, scores, boot.theta_hat)?,
        None => {
            // constant-zero stub: the adjustment is identically zero
            let mut r = naive_delta(ds)?;
            r.method = crate::estimator::Method::CupedOneSided;
            r.theta = Some(boot.theta_hat);
            r.augmentation_value = Some(0.0);
            r.standard_error = None;
            r
        }
    };
    report.standard_error = Some(boot.se_trg1());
    report.weights = Some(spec.to_string());
    report
        .diagnostics
        .insert("bootstrap_b".into(), boot.b as f64);
    report
        .diagnostics
        .insert("theta_degenerate".into(), boot.theta_degenerate as u8 as f64);
    Ok((report, boot))
}

/// Two-sided analog: bootstrap `(delta_y, delta0_y)` without any model
/// refits and assemble the adjusted estimate. The `tau0` slots of the
/// result hold the trigger-complement delta draws.
pub fn estimate_two_sided(
    ds: &ExperimentDataset,
    config: &BootstrapConfig,
    key: RngKey,
) -> Result<(EstimateReport, BootstrapResult)> {
    validate_bootstrap_inputs(config)?;
    if ds.mode() != TriggerMode::TwoSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::TwoSided,
            found: ds.mode(),
        });
    }
    // full-data value checks the preconditions (nonempty T0/C0)
    trigger_complement_delta(ds)?;
    let arms = match config.mode {
        ResampleMode::Pooled => None,
        ResampleMode::StratifiedByArm => Some(ArmIndex::of(ds)),
    };

    let draws: Vec<(f64, f64, usize)> = (0..config.b)
        .into_par_iter()
        .map_init(
            || ResampleScratch::new(ds.len()),
            |scratch, r| -> Result<(f64, f64, usize)> {
                let mut attempt = 0;
                loop {
                    let k = resample_key(key, r, attempt);
                    match &arms {
                        None => draw_counts(ds.len(), k, &mut scratch.counts),
                        Some(a) => draw_counts_stratified(a, k, &mut scratch.counts),
                    }
                    let arm = arm_stats(ds, &scratch.counts, Some(ds));
                    if arm.n_t0 > 0 && arm.n_c > 0 && arm.n_t > 0 {
                        if let Some(delta0) = arm.delta0 {
                            return Ok((arm.delta_y(), delta0, attempt));
                        }
                    }
                    attempt += 1;
                    if attempt > config.retry_budget {
                        return Err(Error::DegenerateResamples {
                            resample: r,
                            attempts: attempt,
                        });
                    }
                }
            },
        )
        .collect::<Result<_>>()?;

    let delta_y_draws: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let delta0_draws: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let redraws: usize = draws.iter().map(|d| d.2).sum();
    let cov = cov_matrix(&delta_y_draws, &delta0_draws);
    let theta = estimate_theta(&delta_y_draws, &delta0_draws)?;
    let var_hat = if theta.degenerate {
        cov.var_delta_y
    } else {
        variance_trg1(&cov)
    };
    let boot = BootstrapResult {
        b: config.b,
        delta_y_draws,
        tau0_draws: delta0_draws,
        cov_matrix: cov,
        theta_hat: theta.theta,
        theta_degenerate: theta.degenerate,
        var_trg1_hat: var_hat,
        seed: key.seed,
        stream: key.stream,
        rng_algorithm: RngKey::ALGORITHM,
        redraws,
    };
    let mut report = cuped_two_sided(ds, boot.theta_hat)?;
    report.standard_error = Some(boot.se_trg1());
    report
        .diagnostics
        .insert("bootstrap_b".into(), boot.b as f64);
    Ok((report, boot))
}

/// How the mean-zero test obtains its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    /// Bootstrap SE of the augmentation; captures weight-estimation noise.
    Bootstrap,
    /// Linearization of the two ratio means with the weights held fixed.
    DeltaMethod,
}

/// Wald test of whether the augmentation is mean-zero.
#[derive(Debug, Clone, Serialize)]
pub struct MeanZeroTest {
    pub tau0_hat: f64,
    pub se_tau0: f64,
    pub wald_z: f64,
    /// Two-sided normal tail probability.
    pub p_value: f64,
    pub method: TestMethod,
    /// Set when the SE was numerically zero; reported as a non-rejection.
    pub degenerate: bool,
}

/// Test the mean-zero assumption behind the augmentation.
pub fn mean_zero_test(
    ds: &ExperimentDataset,
    spec: &WeightSpec,
    method: TestMethod,
    config: &BootstrapConfig,
    key: RngKey,
) -> Result<MeanZeroTest> {
    let prepared = spec.prepare(ds, &config.fit)?;
    let tau0_hat = prepared.full_tau0;
    let se_tau0 = match method {
        TestMethod::Bootstrap => {
            let boot = bootstrap_prepared(ds, &prepared, config, key)?;
            boot.se_tau0()
        }
        TestMethod::DeltaMethod => match &prepared.full_scores {
            Some(scores) => delta_method_se(ds, scores)?,
            None => 0.0,
        },
    };
    if se_tau0 <= 1e-12 * (1.0 + tau0_hat.abs()) {
        return Ok(MeanZeroTest {
            tau0_hat,
            se_tau0,
            wald_z: 0.0,
            p_value: 1.0,
            method,
            degenerate: true,
        });
    }
    let wald_z = tau0_hat / se_tau0;
    Ok(MeanZeroTest {
        tau0_hat,
        se_tau0,
        wald_z,
        p_value: stats::normal_two_sided_p(wald_z),
        method,
        degenerate: false,
    })
}

/// Linearized SE of the augmentation with weights treated as fixed: each
/// ratio mean contributes `sum(u_i (y_i - ratio))^2 / (sum u_i)^2` and the
/// two arms are independent.
fn delta_method_se(ds: &ExperimentDataset, scores: &ScoreSet) -> Result<f64> {
    let part = ds.partition();
    let t0_outcomes: Vec<f64> = part.t0.iter().map(|&i| ds.outcome(i as usize)).collect();
    let a_hat = stats::mean(&t0_outcomes);
    let var_a = t0_outcomes
        .iter()
        .map(|y| (y - a_hat) * (y - a_hat))
        .sum::<f64>()
        / (part.t0.len() as f64 * part.t0.len() as f64);

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
    let b_hat = num / den;
    let mut var_b = 0.0;
    for (&i, &w) in part.c.iter().zip(&scores.control_weights) {
        let u = if probability_scale { 1.0 - w } else { w };
        let term = u * (ds.outcome(i as usize) - b_hat);
        var_b += term * term;
    }
    var_b /= den * den;
    Ok((var_a + var_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::unit;
    use crate::data::UnitRecord;
    use approx::assert_relative_eq;

    #[test]
    fn rng_key_streams_are_reproducible_and_distinct() {
        let take4 = |key: RngKey| -> Vec<u64> {
            let mut rng = key.rng();
            (0..4).map(|_| rng.random()).collect()
        };
        assert_eq!(take4(RngKey::new(9)), take4(RngKey::new(9)));
        assert_ne!(take4(RngKey::new(9)), take4(RngKey::new(9).with_stream(1)));
        assert_ne!(RngKey::new(9).derive(0), RngKey::new(9).derive(1));
        assert_ne!(RngKey::new(9).derive(0), RngKey::new(9));
    }

    #[test]
    fn theta_hand_values() {
        // identical draw vectors give theta = 1
        let d = vec![1.0, 3.0, 2.0, 5.0];
        let t = estimate_theta(&d, &d).unwrap();
        assert_relative_eq!(t.theta, 1.0);
        assert!(!t.degenerate);

        // pairs (1,2),(3,4): cov = 2, var = 2 -> theta = 1
        let t = estimate_theta(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_relative_eq!(t.theta, 1.0);

        // constant augmentation draws: sentinel theta = 0
        let t = estimate_theta(&[1.0, 3.0, 2.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(t.theta, 0.0);
        assert!(t.degenerate);

        assert!(estimate_theta(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn variance_trg1_hand_values() {
        // [[4,2],[2,4]] -> 4 - 4/4 = 3
        let cov = CovMatrix2 {
            var_delta_y: 4.0,
            cov_delta_tau0: 2.0,
            var_tau0: 4.0,
        };
        assert_relative_eq!(variance_trg1(&cov), 3.0);

        // no correlation: unchanged
        let cov = CovMatrix2 {
            var_delta_y: 4.0,
            cov_delta_tau0: 0.0,
            var_tau0: 4.0,
        };
        assert_relative_eq!(variance_trg1(&cov), 4.0);

        // perfect correlation: 0
        let cov = CovMatrix2 {
            var_delta_y: 4.0,
            cov_delta_tau0: 4.0,
            var_tau0: 4.0,
        };
        assert_relative_eq!(variance_trg1(&cov), 0.0);

        // zero augmentation variance: returns var(delta)
        let cov = CovMatrix2 {
            var_delta_y: 4.0,
            cov_delta_tau0: 0.0,
            var_tau0: 0.0,
        };
        assert_relative_eq!(variance_trg1(&cov), 4.0);
    }

    #[test]
    fn variance_trg1_is_invariant_to_rescaling_tau0_draws() {
        let delta = [1.0, 2.0, 1.5, 0.5, 2.5];
        let tau: Vec<f64> = delta.iter().map(|d| 0.7 * d + 0.1).collect();
        let scaled: Vec<f64> = tau.iter().map(|t| t * 37.5).collect();
        let v1 = variance_trg1(&cov_matrix(&delta, &tau));
        let v2 = variance_trg1(&cov_matrix(&delta, &scaled));
        assert_relative_eq!(v1, v2, epsilon = 1e-12);
    }

    fn synthetic_one_sided(n_t: usize, n_c: usize, seed: u64) -> ExperimentDataset {
        // simple data with a real triggering signal in x
        let mut rng = RngKey::new(seed).rng();
        let mut records: Vec<UnitRecord> = Vec::new();
        for i in 0..n_t {
            let x: f64 = rng.random();
            let p = 0.1 + 0.3 * x;
            let s = rng.random::<f64>() < p;
            let y = x + if s { 0.5 } else { 0.0 } + rng.random::<f64>();
            records.push(unit(&format!("t{i}"), Arm::Treatment, Some(s), &[x], y));
        }
        for i in 0..n_c {
            let x: f64 = rng.random();
            let y = x + rng.random::<f64>();
            records.push(unit(&format!("c{i}"), Arm::Control, None, &[x], y));
        }
        ExperimentDataset::from_records(records, vec!["x".into()], None).unwrap()
    }

    #[test]
    fn bootstrap_is_deterministic_given_the_key() {
        let ds = synthetic_one_sided(300, 150, 5);
        let spec = WeightSpec::Principal {
            covariates: vec!["x".into()],
        };
        let config = BootstrapConfig {
            b: 60,
            ..BootstrapConfig::default()
        };
        let a = bootstrap(&ds, &spec, &config, RngKey::new(11)).unwrap();
        let b = bootstrap(&ds, &spec, &config, RngKey::new(11)).unwrap();
        assert_eq!(a.delta_y_draws, b.delta_y_draws);
        assert_eq!(a.tau0_draws, b.tau0_draws);
        assert_eq!(a.theta_hat, b.theta_hat);
        let c = bootstrap(&ds, &spec, &config, RngKey::new(12)).unwrap();
        assert_ne!(a.delta_y_draws, c.delta_y_draws);
    }

    #[test]
    fn constant_zero_stub_falls_back_to_naive_variance() {
        let ds = synthetic_one_sided(200, 100, 3);
        let config = BootstrapConfig {
            b: 80,
            ..BootstrapConfig::default()
        };
        let boot = bootstrap(&ds, &WeightSpec::ConstantZero, &config, RngKey::new(4)).unwrap();
        assert!(boot.theta_degenerate);
        assert_eq!(boot.theta_hat, 0.0);
        assert_relative_eq!(boot.var_trg1_hat, boot.cov_matrix.var_delta_y);
        assert!(boot.tau0_draws.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn adjusted_variance_never_exceeds_delta_variance() {
        let ds = synthetic_one_sided(300, 150, 8);
        let spec = WeightSpec::Principal {
            covariates: vec!["x".into()],
        };
        let config = BootstrapConfig {
            b: 100,
            ..BootstrapConfig::default()
        };
        let boot = bootstrap(&ds, &spec, &config, RngKey::new(21)).unwrap();
        assert!(boot.var_trg1_hat <= boot.cov_matrix.var_delta_y + 1e-15);
    }

    #[test]
    fn fitted_theta_minimizes_the_draw_variance() {
        let ds = synthetic_one_sided(300, 150, 9);
        let spec = WeightSpec::Principal {
            covariates: vec!["x".into()],
        };
        let config = BootstrapConfig {
            b: 120,
            ..BootstrapConfig::default()
        };
        let boot = bootstrap(&ds, &spec, &config, RngKey::new(33)).unwrap();
        let var_at = |theta: f64| {
            let adjusted: Vec<f64> = boot
                .delta_y_draws
                .iter()
                .zip(&boot.tau0_draws)
                .map(|(d, t)| d - theta * t)
                .collect();
            stats::sample_variance(&adjusted)
        };
        let at_hat = var_at(boot.theta_hat);
        assert!(var_at(boot.theta_hat * 1.1) >= at_hat - 1e-15);
        assert!(var_at(boot.theta_hat * 0.9) >= at_hat - 1e-15);
    }

    #[test]
    fn stratified_mode_fixes_arm_sizes() {
        let ds = synthetic_one_sided(120, 60, 13);
        let arms = ArmIndex::of(&ds);
        let mut scratch = ResampleScratch::new(ds.len());
        for r in 0..5 {
            draw_counts_stratified(&arms, resample_key(RngKey::new(7), r, 0), &mut scratch.counts);
            let arm = arm_stats(&ds, &scratch.counts, None);
            assert_eq!(arm.n_t, 120);
            assert_eq!(arm.n_c, 60);
        }
    }

    #[test]
    fn mean_zero_test_degenerate_augmentation_is_a_non_rejection() {
        let ds = synthetic_one_sided(200, 100, 17);
        let config = BootstrapConfig {
            b: 60,
            ..BootstrapConfig::default()
        };
        let test = mean_zero_test(
            &ds,
            &WeightSpec::ConstantZero,
            TestMethod::Bootstrap,
            &config,
            RngKey::new(2),
        )
        .unwrap();
        assert!(test.degenerate);
        assert_eq!(test.wald_z, 0.0);
        assert_eq!(test.p_value, 1.0);
    }

    #[test]
    fn delta_and_bootstrap_ses_agree_on_calm_data() {
        let ds = synthetic_one_sided(4000, 2000, 19);
        let spec = WeightSpec::Principal {
            covariates: vec!["x".into()],
        };
        let config = BootstrapConfig {
            b: 400,
            ..BootstrapConfig::default()
        };
        let boot_test =
            mean_zero_test(&ds, &spec, TestMethod::Bootstrap, &config, RngKey::new(6)).unwrap();
        let delta_test =
            mean_zero_test(&ds, &spec, TestMethod::DeltaMethod, &config, RngKey::new(6)).unwrap();
        assert_relative_eq!(delta_test.tau0_hat, boot_test.tau0_hat);
        let ratio = delta_test.se_tau0 / boot_test.se_tau0;
        assert!(
            (ratio - 1.0).abs() < 0.15,
            "delta-method vs bootstrap SE ratio {ratio}"
        );
    }

    #[test]
    fn small_b_is_rejected() {
        let ds = synthetic_one_sided(50, 25, 1);
        let config = BootstrapConfig {
            b: 10,
            ..BootstrapConfig::default()
        };
        assert!(bootstrap(&ds, &WeightSpec::ConstantZero, &config, RngKey::new(0)).is_err());
    }
}
