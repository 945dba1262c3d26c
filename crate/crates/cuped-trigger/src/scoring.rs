//! Per-control-unit weights from three sources: an out-of-sample principal
//! (triggering probability) model fit on treatment data, an in-sample
//! propensity model fit on T0 ∪ C, and ground-truth probabilities taken
//! from a column. Both model paths use the same IRLS logistic regression.
//!
//! The propensity scale `e(X) = P(T0 | X, T0 ∪ C)` and the triggering
//! probability scale `p(X) = P(S=1 | X)` are linked by
//!
//! ```text
//! e = (1 + k + k * p / (1 - p))^-1 ,   k = P(C) / P(T)
//! ```
//!
//! which makes `e/(1-e)` proportional to `1-p` with a constant that does not
//! depend on the unit. Propensity fits are therefore converted back to the
//! triggering-probability scale so downstream code has a single weight
//! convention.

use serde::Serialize;

use crate::data::{Arm, ExperimentDataset, TriggerMode};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve_in_place, DenseMatrix};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` so augmentation weights
/// stay finite even for extreme fitted scores.
pub const PROBABILITY_CLAMP: f64 = 1e-6;

/// Coefficient norm beyond which a fit is declared separated.
const SEPARATION_NORM: f64 = 1e4;

/// Deviance this close to zero means the data are perfectly classified, so
/// the likelihood has no finite maximizer. Under separation the coefficient
/// norm grows only logarithmically as the deviance collapses, so this floor
/// fires long before the norm threshold would.
const SEPARATION_DEVIANCE_FLOOR: f64 = 1e-6;

/// Internal probability floor used inside the IRLS iterations.
const MU_FLOOR: f64 = 1e-10;

/// Options for [`fit_logistic`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Convergence threshold on the relative deviance change.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Optional ridge penalty on the non-intercept coefficients; escape
    /// hatch for near-separated data. 0 = plain maximum likelihood.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tolerance: 1e-8,
            max_iterations: 100,
            ridge: 0.0,
        }
    }
}

/// A fitted logistic regression. `coefficients[0]` is the intercept,
/// followed by one slope per feature column.
#[derive(Debug, Clone, Serialize)]
pub struct LogisticModel {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_deviance: f64,
}

impl LogisticModel {
    /// Predicted probability for one feature row, clamped to
    /// `[PROBABILITY_CLAMP, 1 - PROBABILITY_CLAMP]`.
    #[inline]
    pub fn predict(&self, features: &[f64]) -> f64 {
        debug_assert_eq!(features.len() + 1, self.coefficients.len());
        let mut eta = self.coefficients[0];
        for (b, x) in self.coefficients[1..].iter().zip(features) {
            eta += b * x;
        }
        clamp_probability(sigmoid(eta))
    }
}

#[inline]
pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
}

/// Which procedure produced a weight vector, which also fixes how the
/// augmentation consumes it: score kinds are triggering probabilities `w`
/// (control units enter with weight `1 - w`), while entropy-balance weights
/// are used directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    PrincipalOutOfSample,
    PrincipalGroundTruth,
    PropensityInSample,
    EntropyBalance,
}

impl ScoreKind {
    pub fn is_probability_scale(self) -> bool {
        !matches!(self, ScoreKind::EntropyBalance)
    }
}

/// Weights for the control group, indexed in control-row order (ascending
/// dataset row index).
#[derive(Debug, Clone, Serialize)]
pub struct ScoreSet {
    pub kind: ScoreKind,
    pub control_weights: Vec<f64>,
}

impl ScoreSet {
    pub fn new(kind: ScoreKind, control_weights: Vec<f64>) -> Result<Self> {
        for &w in &control_weights {
            if !w.is_finite() {
                return Err(Error::Numerical("non-finite score weight".into()));
            }
            if kind.is_probability_scale() {
                if !(PROBABILITY_CLAMP..=1.0 - PROBABILITY_CLAMP).contains(&w) {
                    return Err(Error::Numerical(format!(
                        "probability-scale weight {w} outside the clamped unit interval"
                    )));
                }
            } else if w < 0.0 {
                return Err(Error::Numerical(format!("negative balance weight {w}")));
            }
        }
        Ok(ScoreSet {
            kind,
            control_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.control_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.control_weights.is_empty()
    }
}

/// Fit a logistic regression of `labels` (0/1) on `features` by iteratively
/// reweighted least squares, maximizing the Bernoulli log-likelihood.
///
/// Newton steps are halved whenever they would increase the deviance, so the
/// deviance is non-increasing across iterations. The fit converges when the
/// relative deviance change drops below `options.tolerance`.
pub fn fit_logistic(
    features: &DenseMatrix,
    labels: &[f64],
    options: &FitOptions,
) -> Result<LogisticModel> {
    fit_logistic_from(features, labels, options, None).map(|(m, _)| m)
}

/// As [`fit_logistic`] but starting from `init` (used to warm-start
/// bootstrap refits) and returning the per-iteration deviance trace.
pub(crate) fn fit_logistic_from(
    features: &DenseMatrix,
    labels: &[f64],
    options: &FitOptions,
    init: Option<&[f64]>,
) -> Result<(LogisticModel, Vec<f64>)> {
    fit_logistic_slice(features.data(), features.cols(), labels, options, init)
}

/// Slice-based fit on plain (unweighted) rows.
pub(crate) fn fit_logistic_slice(
    data: &[f64],
    m: usize,
    labels: &[f64],
    options: &FitOptions,
    init: Option<&[f64]>,
) -> Result<(LogisticModel, Vec<f64>)> {
    fit_logistic_weighted(data, m, labels, &vec![1.0; labels.len()], options, init)
}

/// Weighted IRLS on row-major `data` with `m` columns. Row weights are
/// frequency weights (a row with weight c contributes like c copies of
/// itself), which is how the bootstrap engine represents resample
/// multiplicities without materializing duplicated rows.
pub(crate) fn fit_logistic_weighted(
    data: &[f64],
    m: usize,
    labels: &[f64],
    row_weights: &[f64],
    options: &FitOptions,
    init: Option<&[f64]>,
) -> Result<(LogisticModel, Vec<f64>)> {
    let n = labels.len();
    if m == 0 {
        return Err(Error::Validation(
            "logistic fit needs at least one feature column".into(),
        ));
    }
    if n == 0 || data.len() != n * m || row_weights.len() != n {
        return Err(Error::Validation(format!(
            "{} feature values for {} rows of width {}",
            data.len(),
            n,
            m
        )));
    }
    let positives = labels
        .iter()
        .zip(row_weights)
        .filter(|(&y, &c)| y > 0.5 && c > 0.0)
        .count();
    let negatives = labels
        .iter()
        .zip(row_weights)
        .filter(|(&y, &c)| y <= 0.5 && c > 0.0)
        .count();
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(
            "labels must contain at least one positive and one negative".into(),
        ));
    }

    let k = m + 1;
    let mut beta = match init {
        Some(b) => {
            debug_assert_eq!(b.len(), k);
            b.to_vec()
        }
        None => vec![0.0; k],
    };
    let mut a = vec![0.0; k * k];
    let mut g = vec![0.0; k];
    let mut step = vec![0.0; k];
    let mut candidate = vec![0.0; k];

    // Each pass walks the data once, accumulating the weighted information
    // matrix and score at `beta` together with the (penalized) deviance, so
    // the line search reuses the accepted candidate's accumulation for the
    // next Newton solve. The one- and two-feature cases (the hot refit
    // paths) run fully unrolled with register accumulators.
    let fused_pass = |beta: &[f64], a: &mut [f64], g: &mut [f64]| -> f64 {
        a.iter_mut().for_each(|v| *v = 0.0);
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut ll = 0.0;
        match m {
            1 => {
                let (b0, b1) = (beta[0], beta[1]);
                let (mut a00, mut a10, mut a11) = (0.0f64, 0.0f64, 0.0f64);
                let (mut g0, mut g1) = (0.0f64, 0.0f64);
                for ((row, &y), &c) in data.chunks_exact(1).zip(labels).zip(row_weights) {
                    if c == 0.0 {
                        continue;
                    }
                    let x1 = row[0];
                    let mu = sigmoid(b0 + b1 * x1).clamp(MU_FLOOR, 1.0 - MU_FLOOR);
                    ll += c * if y > 0.5 { mu.ln() } else { (1.0 - mu).ln() };
                    let w = c * mu * (1.0 - mu);
                    let resid = c * (y - mu);
                    g0 += resid;
                    g1 += resid * x1;
                    a00 += w;
                    let wx1 = w * x1;
                    a10 += wx1;
                    a11 += wx1 * x1;
                }
                a[0] = a00;
                a[2] = a10;
                a[3] = a11;
                g[0] = g0;
                g[1] = g1;
            }
            2 => {
                let (b0, b1, b2) = (beta[0], beta[1], beta[2]);
                let (mut a00, mut a10, mut a11) = (0.0f64, 0.0f64, 0.0f64);
                let (mut a20, mut a21, mut a22) = (0.0f64, 0.0f64, 0.0f64);
                let (mut g0, mut g1, mut g2) = (0.0f64, 0.0f64, 0.0f64);
                for ((row, &y), &c) in data.chunks_exact(2).zip(labels).zip(row_weights) {
                    if c == 0.0 {
                        continue;
                    }
                    let (x1, x2) = (row[0], row[1]);
                    let mu = sigmoid(b0 + b1 * x1 + b2 * x2).clamp(MU_FLOOR, 1.0 - MU_FLOOR);
                    ll += c * if y > 0.5 { mu.ln() } else { (1.0 - mu).ln() };
                    let w = c * mu * (1.0 - mu);
                    let resid = c * (y - mu);
                    g0 += resid;
                    g1 += resid * x1;
                    g2 += resid * x2;
                    a00 += w;
                    let wx1 = w * x1;
                    let wx2 = w * x2;
                    a10 += wx1;
                    a11 += wx1 * x1;
                    a20 += wx2;
                    a21 += wx2 * x1;
                    a22 += wx2 * x2;
                }
                a[0] = a00;
                a[3] = a10;
                a[4] = a11;
                a[6] = a20;
                a[7] = a21;
                a[8] = a22;
                g[0] = g0;
                g[1] = g1;
                g[2] = g2;
            }
            _ => {
                for ((row, &y), &c) in data.chunks_exact(m).zip(labels).zip(row_weights) {
                    if c == 0.0 {
                        continue;
                    }
                    let mut eta = beta[0];
                    for (b, x) in beta[1..].iter().zip(row) {
                        eta += b * x;
                    }
                    let mu = sigmoid(eta).clamp(MU_FLOOR, 1.0 - MU_FLOOR);
                    ll += c * if y > 0.5 { mu.ln() } else { (1.0 - mu).ln() };
                    let w = c * mu * (1.0 - mu);
                    let resid = c * (y - mu);
                    g[0] += resid;
                    a[0] += w;
                    for (p, &xp) in row.iter().enumerate() {
                        g[p + 1] += resid * xp;
                        let wxp = w * xp;
                        a[(p + 1) * k] += wxp;
                        for (q, &xq) in row[..=p].iter().enumerate() {
                            a[(p + 1) * k + (q + 1)] += wxp * xq;
                        }
                    }
                }
            }
        }
        let mut dev = -2.0 * ll;
        if options.ridge > 0.0 {
            for j in 1..k {
                a[j * k + j] += options.ridge;
                g[j] -= options.ridge * beta[j];
                dev += options.ridge * beta[j] * beta[j];
            }
        }
        dev
    };

    let mut deviance = fused_pass(&beta, &mut a, &mut g);
    let mut trace = vec![deviance];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=options.max_iterations {
        iterations = iter;
        // a and g hold the accumulation at the current beta
        if !cholesky_solve_in_place(&mut a, &mut g, k) {
            return Err(Error::RankDeficient(
                "weighted information matrix is singular in IRLS".into(),
            ));
        }
        step.copy_from_slice(&g);

        // halve the Newton step until the deviance does not increase
        let mut scale = 1.0;
        let new_deviance = loop {
            for j in 0..k {
                candidate[j] = beta[j] + scale * step[j];
            }
            let dev = fused_pass(&candidate, &mut a, &mut g);
            if dev <= deviance + 1e-8 * (1.0 + deviance.abs()) {
                break dev;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Err(Error::Numerical(
                    "IRLS step halving failed to decrease the deviance".into(),
                ));
            }
        };
        beta.copy_from_slice(&candidate);

        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > SEPARATION_NORM || new_deviance < SEPARATION_DEVIANCE_FLOOR {
            let direction = beta.iter().map(|b| b / norm).collect();
            return Err(Error::Separation { direction });
        }

        let change = (deviance - new_deviance).abs();
        deviance = new_deviance;
        trace.push(deviance);
        if change <= options.tolerance * (deviance.abs() + 0.1) {
            converged = true;
            break;
        }
    }

    Ok((
        LogisticModel {
            coefficients: beta,
            converged,
            iterations,
            final_deviance: deviance,
        },
        trace,
    ))
}

/// Bernoulli deviance (-2 log-likelihood) of `beta` on the data. Labels are
/// 0/1, so each row contributes a single log term.
#[cfg(test)]
fn bernoulli_deviance(data: &[f64], m: usize, labels: &[f64], beta: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (row, &y) in data.chunks_exact(m).zip(labels) {
        let mut eta = beta[0];
        for (b, x) in beta[1..].iter().zip(row) {
            eta += b * x;
        }
        let mu = sigmoid(eta).clamp(MU_FLOOR, 1.0 - MU_FLOOR);
        ll += if y > 0.5 { mu.ln() } else { (1.0 - mu).ln() };
    }
    -2.0 * ll
}

/// Out-of-sample principal scores: apply a model fitted on treatment data to
/// the control group's features. Never reads control trigger labels (they do
/// not exist in one-sided mode).
pub fn principal_scores(
    model: &LogisticModel,
    control_features: &DenseMatrix,
) -> Result<ScoreSet> {
    if control_features.cols() + 1 != model.coefficients.len() {
        return Err(Error::Validation(format!(
            "model has {} coefficients but features have {} columns",
            model.coefficients.len(),
            control_features.cols()
        )));
    }
    let weights = (0..control_features.rows())
        .map(|i| model.predict(control_features.row(i)))
        .collect();
    ScoreSet::new(ScoreKind::PrincipalOutOfSample, weights)
}

/// In-sample propensity scores: fit membership-in-T0 on the named covariates
/// over T0 ∪ C, then convert each control unit's fitted propensity to the
/// triggering-probability scale.
pub fn propensity_scores(
    ds: &ExperimentDataset,
    covariates: &[String],
    options: &FitOptions,
) -> Result<ScoreSet> {
    if ds.mode() != TriggerMode::OneSided {
        return Err(Error::ModeMismatch {
            expected: TriggerMode::OneSided,
            found: ds.mode(),
        });
    }
    let cols: Vec<usize> = covariates
        .iter()
        .map(|name| ds.covariate_index(name))
        .collect::<Result<_>>()?;
    let part = ds.partition();

    let n_fit = part.t0.len() + part.c.len();
    let mut features = Vec::with_capacity(n_fit * cols.len());
    let mut labels = Vec::with_capacity(n_fit);
    for &i in part.t0.iter().chain(&part.c) {
        for &j in &cols {
            features.push(ds.covariate(i as usize, j));
        }
        labels.push(if ds.assignment(i as usize) == Arm::Treatment {
            1.0
        } else {
            0.0
        });
    }
    let x = DenseMatrix::from_flat(features, n_fit, cols.len());
    let model = fit_logistic(&x, &labels, options)?;

    let n_t = part.t0.len() + part.t1.len();
    let k = part.c.len() as f64 / n_t as f64;
    let mut row = vec![0.0; cols.len()];
    let weights = part
        .c
        .iter()
        .map(|&i| {
            for (slot, &j) in row.iter_mut().zip(&cols) {
                *slot = ds.covariate(i as usize, j);
            }
            let e = model.predict(&row);
            clamp_probability(invert_score_clamped(e, k))
        })
        .collect();
    ScoreSet::new(ScoreKind::PropensityInSample, weights)
}

/// Map a triggering probability `p` to the propensity scale
/// `e = P(T0 | X, T0 ∪ C)`, where `k = P(C)/P(T)`.
pub fn score_conversion(p: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Numerical(format!(
            "triggering probability {p} outside [0, 1) (odds undefined at 1)"
        )));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Numerical(format!("group ratio k={k} must be positive")));
    }
    Ok(1.0 / (1.0 + k + k * p / (1.0 - p)))
}

/// Inverse of [`score_conversion`]: recover the triggering probability from
/// a propensity value. Requires `e` in `(0, 1/(1+k)]`, the range of the
/// forward map.
pub fn score_inversion(e: f64, k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) || e == 0.0 {
        return Err(Error::Numerical(format!("propensity {e} outside (0, 1)")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Numerical(format!("group ratio k={k} must be positive")));
    }
    let odds = (1.0 / e - 1.0 - k) / k;
    if odds < 0.0 {
        // e = 1/(1+k) maps to p = 0; tolerate rounding dust at that boundary
        if odds > -1e-9 {
            return Ok(0.0);
        }
        return Err(Error::Numerical(format!(
            "propensity {e} exceeds 1/(1+k); implied triggering odds are negative"
        )));
    }
    Ok(odds / (1.0 + odds))
}

/// Inversion for fitted propensities, which can fall outside the analytic
/// range: out-of-range values clamp to the nearest attainable probability.
pub(crate) fn invert_score_clamped(e: f64, k: f64) -> f64 {
    let e = e.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
    let odds = (1.0 / e - 1.0 - k) / k;
    if odds <= 0.0 {
        0.0
    } else {
        odds / (1.0 + odds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::unit;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn noisy_threshold_data(n: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
        // y ~ Bernoulli(sigmoid(0.5 + 2 x)), x ~ U(-1, 1): overlapping classes
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.random::<f64>() * 2.0 - 1.0;
            let p = sigmoid(0.5 + 2.0 * x);
            labels.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
            rows.push(vec![x]);
        }
        (DenseMatrix::from_rows(&rows), labels)
    }

    /// Independent oracle: refine a 2-d grid over (intercept, slope) and
    /// return the best deviance found.
    fn grid_search_deviance(x: &DenseMatrix, y: &[f64]) -> f64 {
        let mut center = (0.0, 0.0);
        let mut half_width = 8.0;
        let mut best = f64::INFINITY;
        for _ in 0..12 {
            let mut best_point = center;
            for i in 0..=40 {
                for j in 0..=40 {
                    let b0 = center.0 - half_width + 2.0 * half_width * i as f64 / 40.0;
                    let b1 = center.1 - half_width + 2.0 * half_width * j as f64 / 40.0;
                    let dev = bernoulli_deviance(x.data(), x.cols(), y, &[b0, b1]);
                    if dev < best {
                        best = dev;
                        best_point = (b0, b1);
                    }
                }
            }
            center = best_point;
            half_width /= 8.0;
        }
        best
    }

    #[test]
    fn irls_matches_grid_search_oracle() {
        let (x, y) = noisy_threshold_data(1000, 7);
        let model = fit_logistic(&x, &y, &FitOptions::default()).unwrap();
        assert!(model.converged);
        assert!(model.coefficients[1] > 0.0, "slope should be positive");
        let oracle = grid_search_deviance(&x, &y);
        // IRLS should find a log-likelihood at least as good as the grid
        // optimum, up to the grid's own resolution.
        assert!(
            model.final_deviance <= oracle + 1e-4,
            "IRLS deviance {} vs grid oracle {}",
            model.final_deviance,
            oracle
        );
    }

    #[test]
    fn uninformative_features_give_near_zero_coefficients() {
        // alternating labels, constant-ish feature pattern, 50/50 split
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..400 {
            let x = (i % 7) as f64 / 7.0;
            rows.push(vec![x]);
            labels.push((i % 2) as f64);
        }
        let x = DenseMatrix::from_rows(&rows);
        let model = fit_logistic(&x, &labels, &FitOptions::default()).unwrap();
        assert!(model.coefficients[0].abs() < 0.2);
        assert!(model.coefficients[1].abs() < 0.4);
    }

    #[test]
    fn perfect_separation_is_detected() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 - 20.0]).collect();
        let labels: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let x = DenseMatrix::from_rows(&rows);
        match fit_logistic(&x, &labels, &FitOptions::default()) {
            Err(Error::Separation { direction }) => {
                let norm: f64 = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
                assert_relative_eq!(norm, 1.0, epsilon = 1e-9);
            }
            other => panic!("expected separation error, got {other:?}"),
        }
    }

    #[test]
    fn ridge_rescues_separated_data() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 - 20.0]).collect();
        let labels: Vec<f64> = (0..40).map(|i| if i < 20 { 0.0 } else { 1.0 }).collect();
        let x = DenseMatrix::from_rows(&rows);
        let opts = FitOptions {
            ridge: 1.0,
            ..FitOptions::default()
        };
        let model = fit_logistic(&x, &labels, &opts).unwrap();
        assert!(model.converged);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let x = (i as f64) / 30.0;
                vec![x, x]
            })
            .collect();
        let labels: Vec<f64> = (0..30).map(|i| ((i / 3) % 2) as f64).collect();
        let x = DenseMatrix::from_rows(&rows);
        assert!(matches!(
            fit_logistic(&x, &labels, &FitOptions::default()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn deviance_is_non_increasing_across_iterations() {
        let (x, y) = noisy_threshold_data(500, 11);
        let opts = FitOptions {
            tolerance: 1e-14,
            ..FitOptions::default()
        };
        let (_, trace) = fit_logistic_from(&x, &y, &opts, None).unwrap();
        for pair in trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-8 * (1.0 + pair[0].abs()),
                "deviance increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn zero_coefficients_predict_one_half() {
        let model = LogisticModel {
            coefficients: vec![0.0, 0.0, 0.0],
            converged: true,
            iterations: 0,
            final_deviance: 0.0,
        };
        let x = DenseMatrix::from_rows(&[vec![3.0, -1.0], vec![0.0, 0.0]]);
        let scores = principal_scores(&model, &x).unwrap();
        assert_eq!(scores.kind, ScoreKind::PrincipalOutOfSample);
        assert!(scores.control_weights.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn zero_linear_predictor_yields_one_half() {
        // the slope only touches a zero feature, so eta = 0 and w = 0.5
        let model = LogisticModel {
            coefficients: vec![0.0, 1.0, 0.0],
            converged: true,
            iterations: 0,
            final_deviance: 0.0,
        };
        let x = DenseMatrix::from_rows(&[vec![0.0, 7.0]]);
        let scores = principal_scores(&model, &x).unwrap();
        assert_relative_eq!(scores.control_weights[0], 0.5);
    }

    #[test]
    fn feature_width_mismatch_is_rejected() {
        let model = LogisticModel {
            coefficients: vec![0.0, 1.0],
            converged: true,
            iterations: 0,
            final_deviance: 0.0,
        };
        let x = DenseMatrix::from_rows(&[vec![0.0, 1.0]]);
        assert!(principal_scores(&model, &x).is_err());
    }

    #[test]
    fn conversion_hand_values() {
        // p=0, k=1 -> e = 1/2
        assert_relative_eq!(score_conversion(0.0, 1.0).unwrap(), 0.5);
        // p=0.05, k=1/3 -> e = 57/77
        assert_relative_eq!(
            score_conversion(0.05, 1.0 / 3.0).unwrap(),
            57.0 / 77.0,
            epsilon = 1e-12
        );
        assert!(score_conversion(1.0, 1.0).is_err());
    }

    #[test]
    fn conversion_round_trips() {
        for &p in &[0.0, 0.05, 0.5, 0.99] {
            for &k in &[0.25, 1.0 / 3.0, 1.0, 3.0] {
                let e = score_conversion(p, k).unwrap();
                assert_relative_eq!(score_inversion(e, k).unwrap(), p, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn control_odds_ratio_is_constant_across_units() {
        // e/(1-e) must be proportional to 1-p with a unit-independent
        // constant (= 1/k).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for &k in &[0.2, 1.0 / 3.0, 2.5] {
            let mut ratios = Vec::new();
            for _ in 0..100 {
                let p: f64 = rng.random::<f64>() * 0.98;
                let e = score_conversion(p, k).unwrap();
                ratios.push(e / (1.0 - e) / (1.0 - p));
            }
            let (min, max) = ratios
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                    (lo.min(r), hi.max(r))
                });
            assert!(max / min - 1.0 < 1e-12, "ratio spread {}", max / min - 1.0);
        }
    }

    #[test]
    fn propensity_without_signal_matches_group_share() {
        // Covariate carries no signal: e(X) ~= |T0|/(|T0|+|C|) for all units.
        // The triggered treatment units form one full cycle of the x values,
        // so T0 and C have identical x distributions and the slope MLE is
        // exactly zero.
        let mut records = Vec::new();
        for i in 0..60 {
            let x = (i % 10) as f64 / 10.0;
            records.push(unit(
                &format!("t{i}"),
                Arm::Treatment,
                Some(i < 10),
                &[x],
                1.0,
            ));
        }
        for i in 0..40 {
            let x = (i % 10) as f64 / 10.0;
            records.push(unit(&format!("c{i}"), Arm::Control, None, &[x], 1.0));
        }
        let ds = ExperimentDataset::from_records(records, vec!["x".into()], None).unwrap();
        let scores =
            propensity_scores(&ds, &["x".to_string()], &FitOptions::default()).unwrap();
        assert_eq!(scores.kind, ScoreKind::PropensityInSample);
        // e(X) ~= |T0|/(|T0|+|C|) = 50/90 for every unit, so all converted
        // weights coincide
        let first = scores.control_weights[0];
        for &w in &scores.control_weights {
            assert_relative_eq!(w, first, epsilon = 1e-6);
        }
    }

    #[test]
    fn ground_truth_propensities_recover_principal_weights() {
        // Converting the true p through the propensity scale and back gives
        // exactly the principal weights.
        let k: f64 = 1.0 / 3.0;
        for &p in &[0.01, 0.05, 0.2, 0.7] {
            let e = score_conversion(p, k).unwrap();
            let w = invert_score_clamped(e, k);
            assert_relative_eq!(w, p, epsilon = 1e-12);
        }
    }
}
