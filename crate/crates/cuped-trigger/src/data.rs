//! The canonical experiment dataset: one record per experimental unit with
//! assignment, trigger indicator, covariates, and outcome.
//!
//! In one-sided mode the trigger indicator is the *observed* exposure and is
//! present for treatment units only. In two-sided mode (simulation output,
//! or logs with counterfactual labels) it encodes the triggering
//! counterfactual status for every unit.
//!
//! Datasets are immutable after construction. Derived datasets (masked
//! twins, residualized outcomes, bootstrap resamples) are built as new
//! values, so sharing a dataset read-only across parallel workers is safe.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Study arm a unit was randomized into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Treatment,
    Control,
}

/// Whether trigger labels exist for the control group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerMode {
    /// Trigger labels observed for treatment units only.
    OneSided,
    /// Counterfactual triggering status known for every unit.
    TwoSided,
}

/// A single experimental unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub unit_id: String,
    pub assignment: Arm,
    /// Observed exposure (one-sided, treatment rows) or counterfactual
    /// triggering status (two-sided, all rows).
    pub triggered: Option<bool>,
    pub covariates: Vec<f64>,
    pub outcome: f64,
}

/// Validated, immutable experiment dataset. Stored column-wise; rows keep
/// their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDataset {
    unit_ids: Vec<String>,
    assignment: Vec<Arm>,
    triggered: Vec<Option<bool>>,
    covariates: DenseMatrix,
    covariate_names: Vec<String>,
    outcomes: Vec<f64>,
    mode: TriggerMode,
}

/// Row indices of the trigger partition. `c1`/`c0` are present in two-sided
/// mode only.
#[derive(Debug, Clone)]
pub struct Partition {
    pub t1: Vec<u32>,
    pub t0: Vec<u32>,
    pub c: Vec<u32>,
    pub c1: Option<Vec<u32>>,
    pub c0: Option<Vec<u32>>,
}

impl ExperimentDataset {
    /// Build and validate a dataset from per-unit records.
    ///
    /// When `declared_mode` is `None` the mode is inferred: any trigger value
    /// on a control row means two-sided. A declared mode wins and turns
    /// conflicting trigger values into errors.
    pub fn from_records(
        records: Vec<UnitRecord>,
        covariate_names: Vec<String>,
        declared_mode: Option<TriggerMode>,
    ) -> Result<Self> {
        let n = records.len();
        let m = covariate_names.len();
        let mut unit_ids = Vec::with_capacity(n);
        let mut assignment = Vec::with_capacity(n);
        let mut triggered = Vec::with_capacity(n);
        let mut flat = Vec::with_capacity(n * m);
        let mut outcomes = Vec::with_capacity(n);
        for rec in records {
            if rec.covariates.len() != m {
                return Err(Error::Validation(format!(
                    "unit `{}` has {} covariates, expected {}",
                    rec.unit_id,
                    rec.covariates.len(),
                    m
                )));
            }
            unit_ids.push(rec.unit_id);
            assignment.push(rec.assignment);
            triggered.push(rec.triggered);
            flat.extend_from_slice(&rec.covariates);
            outcomes.push(rec.outcome);
        }
        Self::from_columns(
            unit_ids,
            assignment,
            triggered,
            DenseMatrix::from_flat(flat, n, m),
            covariate_names,
            outcomes,
            declared_mode,
        )
    }

    /// Column-wise constructor; single source of truth for validation.
    pub(crate) fn from_columns(
        unit_ids: Vec<String>,
        assignment: Vec<Arm>,
        triggered: Vec<Option<bool>>,
        covariates: DenseMatrix,
        covariate_names: Vec<String>,
        outcomes: Vec<f64>,
        declared_mode: Option<TriggerMode>,
    ) -> Result<Self> {
        let n = unit_ids.len();
        if assignment.len() != n
            || triggered.len() != n
            || outcomes.len() != n
            || covariates.rows() != n
        {
            return Err(Error::Validation("column lengths disagree".into()));
        }
        if covariates.cols() != covariate_names.len() {
            return Err(Error::Validation(format!(
                "{} covariate columns but {} covariate names",
                covariates.cols(),
                covariate_names.len()
            )));
        }
        {
            let mut seen = std::collections::HashSet::with_capacity(n);
            for id in &unit_ids {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Validation(format!("duplicate unit_id `{id}`")));
                }
            }
        }
        for (i, y) in outcomes.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite outcome for unit `{}`",
                    unit_ids[i]
                )));
            }
        }
        for (i, x) in covariates.data().iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite covariate `{}` for unit `{}`",
                    covariate_names[i % covariate_names.len().max(1)],
                    unit_ids[i / covariate_names.len().max(1)]
                )));
            }
        }

        let control_has_labels = assignment
            .iter()
            .zip(&triggered)
            .any(|(a, t)| *a == Arm::Control && t.is_some());
        let mode = match declared_mode {
            Some(TriggerMode::OneSided) => {
                if control_has_labels {
                    return Err(Error::Validation(
                        "trigger value on a control row in declared one-sided mode".into(),
                    ));
                }
                TriggerMode::OneSided
            }
            Some(TriggerMode::TwoSided) => TriggerMode::TwoSided,
            None => {
                if control_has_labels {
                    TriggerMode::TwoSided
                } else {
                    TriggerMode::OneSided
                }
            }
        };

        let mut n_t = 0usize;
        let mut n_c = 0usize;
        let mut n_t0 = 0usize;
        for (i, (a, t)) in assignment.iter().zip(&triggered).enumerate() {
            match (mode, a, t) {
                (_, Arm::Treatment, None) => {
                    return Err(Error::Validation(format!(
                        "treatment unit `{}` is missing its trigger value",
                        unit_ids[i]
                    )))
                }
                (TriggerMode::TwoSided, Arm::Control, None) => {
                    return Err(Error::Validation(format!(
                        "control unit `{}` is missing its trigger value in two-sided mode",
                        unit_ids[i]
                    )))
                }
                _ => {}
            }
            match a {
                Arm::Treatment => {
                    n_t += 1;
                    if *t == Some(false) {
                        n_t0 += 1;
                    }
                }
                Arm::Control => n_c += 1,
            }
        }
        if n_t == 0 || n_c == 0 {
            return Err(Error::Validation(
                "both treatment and control groups must be nonempty".into(),
            ));
        }
        if mode == TriggerMode::OneSided && n_t0 == 0 {
            return Err(Error::Validation(
                "one-sided dataset has no non-triggered treatment units (empty T0)".into(),
            ));
        }

        Ok(ExperimentDataset {
            unit_ids,
            assignment,
            triggered,
            covariates,
            covariate_names,
            outcomes,
            mode,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.unit_ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.unit_ids.is_empty()
    }

    #[inline]
    pub fn mode(&self) -> TriggerMode {
        self.mode
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    #[inline]
    pub fn covariate(&self, row: usize, col: usize) -> f64 {
        self.covariates.get(row, col)
    }

    #[inline]
    pub fn covariate_row(&self, row: usize) -> &[f64] {
        self.covariates.row(row)
    }

    #[inline]
    pub fn outcome(&self, row: usize) -> f64 {
        self.outcomes[row]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    #[inline]
    pub fn assignment(&self, row: usize) -> Arm {
        self.assignment[row]
    }

    #[inline]
    pub fn triggered(&self, row: usize) -> Option<bool> {
        self.triggered[row]
    }

    pub fn unit_id(&self, row: usize) -> &str {
        &self.unit_ids[row]
    }

    /// Observed exposure to the active treatment. Control units are never
    /// exposed by design.
    #[inline]
    pub fn exposed(&self, row: usize) -> bool {
        match self.assignment[row] {
            Arm::Treatment => self.triggered[row] == Some(true),
            Arm::Control => false,
        }
    }

    pub fn record(&self, row: usize) -> UnitRecord {
        UnitRecord {
            unit_id: self.unit_ids[row].clone(),
            assignment: self.assignment[row],
            triggered: self.triggered[row],
            covariates: self.covariates.row(row).to_vec(),
            outcome: self.outcomes[row],
        }
    }

    pub fn iter_records(&self) -> impl Iterator<Item = UnitRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Split row indices into the trigger partition. The sets are disjoint
    /// and their union covers every row.
    pub fn partition(&self) -> Partition {
        let mut t1 = Vec::new();
        let mut t0 = Vec::new();
        let mut c = Vec::new();
        let two_sided = self.mode == TriggerMode::TwoSided;
        let mut c1 = two_sided.then(Vec::new);
        let mut c0 = two_sided.then(Vec::new);
        for i in 0..self.len() {
            let idx = i as u32;
            match self.assignment[i] {
                Arm::Treatment => {
                    if self.triggered[i] == Some(true) {
                        t1.push(idx);
                    } else {
                        t0.push(idx);
                    }
                }
                Arm::Control => {
                    c.push(idx);
                    if let (Some(c1), Some(c0)) = (c1.as_mut(), c0.as_mut()) {
                        if self.triggered[i] == Some(true) {
                            c1.push(idx);
                        } else {
                            c0.push(idx);
                        }
                    }
                }
            }
        }
        Partition { t1, t0, c, c1, c0 }
    }

    /// Same dataset with replaced outcomes (used by residualization).
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        if outcomes.len() != self.len() {
            return Err(Error::Validation(format!(
                "{} outcomes for {} rows",
                outcomes.len(),
                self.len()
            )));
        }
        Self::from_columns(
            self.unit_ids.clone(),
            self.assignment.clone(),
            self.triggered.clone(),
            self.covariates.clone(),
            self.covariate_names.clone(),
            outcomes,
            Some(self.mode),
        )
    }

    /// One-sided twin of a two-sided dataset: control trigger labels are
    /// dropped and the named covariate columns removed entirely.
    pub(crate) fn masked_one_sided(&self, hide: &[String]) -> Result<Self> {
        if self.mode != TriggerMode::TwoSided {
            return Err(Error::ModeMismatch {
                expected: TriggerMode::TwoSided,
                found: self.mode,
            });
        }
        let mut keep = Vec::new();
        for (j, name) in self.covariate_names.iter().enumerate() {
            if !hide.contains(name) {
                keep.push(j);
            }
        }
        for name in hide {
            self.covariate_index(name)?;
        }
        let n = self.len();
        let mut flat = Vec::with_capacity(n * keep.len());
        for i in 0..n {
            let row = self.covariates.row(i);
            for &j in &keep {
                flat.push(row[j]);
            }
        }
        let triggered = self
            .assignment
            .iter()
            .zip(&self.triggered)
            .map(|(a, t)| match a {
                Arm::Treatment => *t,
                Arm::Control => None,
            })
            .collect();
        Self::from_columns(
            self.unit_ids.clone(),
            self.assignment.clone(),
            triggered,
            DenseMatrix::from_flat(flat, n, keep.len()),
            keep.iter().map(|&j| self.covariate_names[j].clone()).collect(),
            self.outcomes.clone(),
            Some(TriggerMode::OneSided),
        )
    }
}

/// Count, mean, and n-1 sample variance of one group's outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sample_variance: f64,
    /// Set when n = 1, where the sample variance is defined as 0.
    pub degenerate: bool,
}

/// Summarize a nonempty group of values.
pub fn group_summary(values: &[f64]) -> Result<GroupSummary> {
    if values.is_empty() {
        return Err(Error::Validation("cannot summarize an empty group".into()));
    }
    Ok(GroupSummary {
        n: values.len(),
        mean: crate::stats::mean(values),
        sample_variance: crate::stats::sample_variance(values),
        degenerate: values.len() == 1,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn unit(
        id: &str,
        arm: Arm,
        trig: Option<bool>,
        covs: &[f64],
        y: f64,
    ) -> UnitRecord {
        UnitRecord {
            unit_id: id.to_string(),
            assignment: arm,
            triggered: trig,
            covariates: covs.to_vec(),
            outcome: y,
        }
    }

    fn small_one_sided() -> ExperimentDataset {
        ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(true), &[1.0], 2.0),
                unit("b", Arm::Treatment, Some(false), &[0.0], 1.0),
                unit("c", Arm::Control, None, &[0.5], 0.5),
            ],
            vec!["x".into()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn infers_one_sided_mode() {
        let ds = small_one_sided();
        assert_eq!(ds.mode(), TriggerMode::OneSided);
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn infers_two_sided_when_control_labels_present() {
        let ds = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(true), &[], 1.0),
                unit("b", Arm::Treatment, Some(false), &[], 1.0),
                unit("c", Arm::Control, Some(false), &[], 1.0),
            ],
            vec![],
            None,
        )
        .unwrap();
        assert_eq!(ds.mode(), TriggerMode::TwoSided);
        let p = ds.partition();
        assert_eq!(p.c1.as_ref().unwrap().len() + p.c0.as_ref().unwrap().len(), p.c.len());
    }

    #[test]
    fn declared_one_sided_rejects_control_label() {
        let err = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(false), &[], 1.0),
                unit("c", Arm::Control, Some(true), &[], 1.0),
            ],
            vec![],
            Some(TriggerMode::OneSided),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn partition_covers_all_rows_disjointly() {
        let ds = small_one_sided();
        let p = ds.partition();
        assert_eq!(p.t1, vec![0]);
        assert_eq!(p.t0, vec![1]);
        assert_eq!(p.c, vec![2]);
        let mut all: Vec<u32> = p.t1.iter().chain(&p.t0).chain(&p.c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn empty_t0_is_rejected_in_one_sided_mode() {
        let err = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(true), &[], 1.0),
                unit("c", Arm::Control, None, &[], 1.0),
            ],
            vec![],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn duplicate_unit_ids_are_rejected() {
        let err = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(false), &[], 1.0),
                unit("a", Arm::Control, None, &[], 1.0),
            ],
            vec![],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn ragged_covariates_are_rejected() {
        let err = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(false), &[1.0, 2.0], 1.0),
                unit("b", Arm::Control, None, &[1.0], 1.0),
            ],
            vec!["x1".into(), "x2".into()],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn group_summary_hand_values() {
        let s = group_summary(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(s.mean, 2.0);
        assert_relative_eq!(s.sample_variance, 2.0);

        let s = group_summary(&[5.0]).unwrap();
        assert_relative_eq!(s.mean, 5.0);
        assert_eq!(s.sample_variance, 0.0);
        assert!(s.degenerate);

        let s = group_summary(&[0.1, 0.2, 0.3]).unwrap();
        assert_relative_eq!(s.mean, 0.2, epsilon = 1e-12);
        assert_relative_eq!(s.sample_variance, 0.01, epsilon = 1e-12);

        assert!(group_summary(&[]).is_err());
    }

    #[test]
    fn mask_drops_control_labels_and_columns() {
        let ds = ExperimentDataset::from_records(
            vec![
                unit("a", Arm::Treatment, Some(true), &[1.0, 9.0], 1.0),
                unit("b", Arm::Treatment, Some(false), &[2.0, 8.0], 1.0),
                unit("c", Arm::Control, Some(true), &[3.0, 7.0], 1.0),
                unit("d", Arm::Control, Some(false), &[4.0, 6.0], 1.0),
            ],
            vec!["x1".into(), "x2".into()],
            None,
        )
        .unwrap();
        let masked = ds.masked_one_sided(&["x1".to_string()]).unwrap();
        assert_eq!(masked.mode(), TriggerMode::OneSided);
        assert_eq!(masked.covariate_names(), &["x2".to_string()]);
        assert_eq!(masked.triggered(2), None);
        assert_eq!(masked.triggered(0), Some(true));
        assert_eq!(masked.covariate(0, 0), 9.0);
    }
}
