//! Entropy balancing: nonnegative control weights that exactly match
//! specified covariate means of the control group to target means (the T0
//! means) while minimizing KL divergence from uniform base weights.
//!
//! The primal has one weight per control unit but the dual is an
//! m-dimensional smooth convex problem (m = number of balanced columns),
//! solved here with damped Newton steps and an Armijo backtracking line
//! search. Covariates are standardized internally for conditioning; callers
//! see solutions in the original scale.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve_in_place, DenseMatrix};
use crate::scoring::{ScoreKind, ScoreSet};

/// Gradient-norm stopping threshold for the dual Newton solver.
const GRADIENT_TOL: f64 = 1e-10;
/// Armijo sufficient-decrease constant; steps are halved until satisfied.
const ARMIJO_C1: f64 = 1e-4;
/// Dual-multiplier norm treated as divergence (target on or outside the
/// convex hull of the control covariates).
const LAMBDA_DIVERGENCE: f64 = 1e8;

/// Moment-matching problem: reweight the rows of `control_covariates` so
/// each column's weighted mean equals the target.
#[derive(Debug, Clone)]
pub struct BalanceProblem {
    pub control_covariates: DenseMatrix,
    pub target_means: Vec<f64>,
    /// Acceptable absolute constraint violation, per column.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl BalanceProblem {
    pub fn new(control_covariates: DenseMatrix, target_means: Vec<f64>) -> Self {
        BalanceProblem {
            control_covariates,
            target_means,
            tolerance: 1e-8,
            max_iterations: 200,
        }
    }
}

/// Solution weights (nonnegative, summing to 1) and dual multipliers in the
/// original covariate scale.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceSolution {
    pub weights: Vec<f64>,
    pub dual_multipliers: Vec<f64>,
    pub converged: bool,
    pub max_constraint_violation: f64,
}

/// Solve the entropy-balancing dual. Weights come out proportional to
/// `exp(lambda . x_i)`. Returns `converged = false` with the best iterate if
/// the iteration budget runs out; targets outside the convex hull of the
/// control rows surface as [`Error::Infeasible`].
pub fn entropy_balance(problem: &BalanceProblem) -> Result<BalanceSolution> {
    entropy_balance_impl(problem, None).map(|(sol, _)| sol)
}

#[cfg(test)]
pub(crate) fn entropy_balance_traced(
    problem: &BalanceProblem,
) -> Result<(BalanceSolution, Vec<f64>)> {
    entropy_balance_impl(problem, None)
}

/// Variant with non-uniform base weights, given as log weights per row.
/// A row with log base weight ln(c) behaves exactly like c duplicated rows,
/// which is how bootstrap resamples are solved without materializing
/// duplicates.
pub(crate) fn entropy_balance_with_log_base(
    problem: &BalanceProblem,
    log_base: &[f64],
) -> Result<BalanceSolution> {
    entropy_balance_impl(problem, Some(log_base)).map(|(sol, _)| sol)
}

fn entropy_balance_impl(
    problem: &BalanceProblem,
    log_base: Option<&[f64]>,
) -> Result<(BalanceSolution, Vec<f64>)> {
    let x = &problem.control_covariates;
    let n = x.rows();
    let m = x.cols();
    if m == 0 {
        return Err(Error::Validation("no covariates to balance".into()));
    }
    if problem.target_means.len() != m {
        return Err(Error::Validation(format!(
            "{} target means for {} covariate columns",
            problem.target_means.len(),
            m
        )));
    }
    if n <= m {
        return Err(Error::Validation(format!(
            "need more control units ({n}) than balance constraints ({m})"
        )));
    }
    for t in &problem.target_means {
        if !t.is_finite() {
            return Err(Error::Validation("non-finite target mean".into()));
        }
    }
    if let Some(lb) = log_base {
        if lb.len() != n {
            return Err(Error::Validation(format!(
                "{} log base weights for {} rows",
                lb.len(),
                n
            )));
        }
    }

    // Standardize each column over the control rows, and center at the
    // target so the constraint becomes "weighted mean of z equals zero".
    // Constant columns cannot be moved by reweighting: they are dropped if
    // already on target and infeasible otherwise.
    let mut col_mean = vec![0.0; m];
    let mut col_sd = vec![0.0; m];
    for i in 0..n {
        for (j, &v) in x.row(i).iter().enumerate() {
            col_mean[j] += v;
        }
    }
    col_mean.iter_mut().for_each(|v| *v /= n as f64);
    for i in 0..n {
        for (j, &v) in x.row(i).iter().enumerate() {
            col_sd[j] += (v - col_mean[j]) * (v - col_mean[j]);
        }
    }
    let mut active = Vec::with_capacity(m);
    for j in 0..m {
        col_sd[j] = (col_sd[j] / n as f64).sqrt();
        let scale = col_sd[j].max(col_mean[j].abs()).max(1.0);
        if col_sd[j] <= 1e-14 * scale {
            if (problem.target_means[j] - col_mean[j]).abs() > 1e-10 * scale {
                return Err(Error::Infeasible(format!(
                    "column {j} is constant at {} but targeted at {}",
                    col_mean[j], problem.target_means[j]
                )));
            }
        } else {
            active.push(j);
        }
    }
    let ma = active.len();
    if ma == 0 {
        // every constraint already holds with the base weights
        let weights = match log_base {
            None => vec![1.0 / n as f64; n],
            Some(lb) => {
                let mx = lb.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                let raw: Vec<f64> = lb.iter().map(|&v| (v - mx).exp()).collect();
                let total: f64 = raw.iter().sum();
                raw.into_iter().map(|w| w / total).collect()
            }
        };
        return Ok((
            BalanceSolution {
                weights,
                dual_multipliers: vec![0.0; m],
                converged: true,
                max_constraint_violation: 0.0,
            },
            vec![0.0],
        ));
    }

    let mut z = vec![0.0; n * ma];
    for i in 0..n {
        let row = x.row(i);
        for (jj, &j) in active.iter().enumerate() {
            z[i * ma + jj] = (row[j] - problem.target_means[j]) / col_sd[j];
        }
    }

    let mut lambda = vec![0.0; ma];
    let mut weights = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0; n];
    let mut grad = vec![0.0; ma];
    let mut hess = vec![0.0; ma * ma];
    let mut step = vec![0.0; ma];
    let mut candidate = vec![0.0; ma];

    // log of the (unnormalized) dual objective: logsumexp of lambda . z_i,
    // with compensated summation so line searches can resolve the tiny
    // decrements near the optimum
    let objective = |lambda: &[f64], scores: &mut [f64], weights: &mut [f64]| -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (i, s) in scores.iter_mut().enumerate() {
            let mut dot = match log_base {
                Some(lb) => lb[i],
                None => 0.0,
            };
            for (l, &zz) in lambda.iter().zip(&z[i * ma..(i + 1) * ma]) {
                dot += l * zz;
            }
            *s = dot;
            max = max.max(dot);
        }
        let mut sum = 0.0;
        let mut comp = 0.0;
        for (w, &s) in weights.iter_mut().zip(scores.iter()) {
            *w = (s - max).exp();
            let t = sum + *w;
            comp += if sum.abs() >= *w { (sum - t) + *w } else { (*w - t) + sum };
            sum = t;
        }
        sum += comp;
        let inv = 1.0 / sum;
        weights.iter_mut().for_each(|w| *w *= inv);
        max + sum.ln() - (n as f64).ln()
    };

    let mut obj = objective(&lambda, &mut scores, &mut weights);
    let mut trace = vec![obj];
    // When objective decrements fall below float resolution while the
    // gradient is still above tolerance, a few raw Newton steps judged by
    // gradient decrease (which stays fully resolvable) polish the iterate.
    let mut polish_budget = 3usize;
    let mut polishing: Option<(Vec<f64>, f64)> = None;

    for _ in 0..problem.max_iterations {
        grad.iter_mut().for_each(|v| *v = 0.0);
        hess.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let w = weights[i];
            let zi = &z[i * ma..(i + 1) * ma];
            for (jj, &zj) in zi.iter().enumerate() {
                grad[jj] += w * zj;
                let wz = w * zj;
                for (kk, &zk) in zi[..=jj].iter().enumerate() {
                    hess[jj * ma + kk] += wz * zk;
                }
            }
        }
        // covariance form: E_w[z z'] - E_w[z] E_w[z]'
        for jj in 0..ma {
            for kk in 0..=jj {
                hess[jj * ma + kk] -= grad[jj] * grad[kk];
            }
        }

        let grad_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if let Some((prev_lambda, prev_norm)) = polishing.take() {
            if !grad_norm.is_finite() || grad_norm >= prev_norm {
                // the polish step did not help; restore and stop
                lambda = prev_lambda;
                break;
            }
        }
        if grad_norm <= GRADIENT_TOL {
            break;
        }

        // damped Newton: escalate ridge until the Hessian factors
        let trace_h: f64 = (0..ma).map(|j| hess[j * ma + j]).sum();
        let mut damping = 0.0;
        let solved = loop {
            let mut h = hess.clone();
            if damping > 0.0 {
                for j in 0..ma {
                    h[j * ma + j] += damping;
                }
            }
            step.copy_from_slice(&grad);
            step.iter_mut().for_each(|s| *s = -*s);
            if cholesky_solve_in_place(&mut h, &mut step, ma) {
                break true;
            }
            damping = if damping == 0.0 {
                (1e-10 * trace_h / ma as f64).max(1e-300)
            } else {
                damping * 100.0
            };
            if damping > 1e6 * trace_h.max(1.0) {
                break false;
            }
        };
        if !solved {
            return Err(Error::Infeasible(
                "dual Hessian is singular beyond damping (target outside the convex hull?)"
                    .into(),
            ));
        }

        let directional: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
        let mut t = 1.0;
        let new_obj = loop {
            for j in 0..ma {
                candidate[j] = lambda[j] + t * step[j];
            }
            let cand_obj = objective(&candidate, &mut scores, &mut weights);
            if cand_obj.is_finite() && cand_obj <= obj + ARMIJO_C1 * t * directional {
                break Some(cand_obj);
            }
            t *= 0.5;
            if t < 1e-20 {
                // objective improvements have fallen below float resolution
                break None;
            }
        };
        let Some(new_obj) = new_obj else {
            if polish_budget == 0 {
                objective(&lambda, &mut scores, &mut weights);
                break;
            }
            polish_budget -= 1;
            polishing = Some((lambda.clone(), grad.iter().fold(0.0f64, |a, g| a.max(g.abs()))));
            for j in 0..ma {
                candidate[j] = lambda[j] + step[j];
            }
            lambda.copy_from_slice(&candidate);
            obj = objective(&lambda, &mut scores, &mut weights);
            continue;
        };
        debug_assert!(new_obj <= obj + 1e-12 * (1.0 + obj.abs()));
        lambda.copy_from_slice(&candidate);
        obj = new_obj;
        trace.push(obj);

        let lambda_norm: f64 = lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
        if lambda_norm > LAMBDA_DIVERGENCE {
            return Err(Error::Infeasible(
                "dual multipliers diverged (target outside the convex hull?)".into(),
            ));
        }
    }

    // final weights at the last iterate
    objective(&lambda, &mut scores, &mut weights);
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);

    let mut violation = 0.0f64;
    for j in 0..m {
        let mut wm = 0.0;
        for i in 0..n {
            wm += weights[i] * x.get(i, j);
        }
        violation = violation.max((wm - problem.target_means[j]).abs());
    }

    let mut dual = vec![0.0; m];
    for (jj, &j) in active.iter().enumerate() {
        dual[j] = lambda[jj] / col_sd[j];
    }

    Ok((
        BalanceSolution {
            weights,
            dual_multipliers: dual,
            converged: violation <= problem.tolerance,
            max_constraint_violation: violation,
        },
        trace,
    ))
}

/// Wrap converged balance weights for the augmentation. Downstream treats
/// them directly as control weights; the ratio form of the augmentation
/// makes their scale irrelevant.
pub fn balance_weights_to_scoreset(solution: &BalanceSolution) -> Result<ScoreSet> {
    if !solution.converged {
        return Err(Error::Validation(
            "balance solution did not converge; refusing to build weights".into(),
        ));
    }
    ScoreSet::new(ScoreKind::EntropyBalance, solution.weights.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_problem(values: &[f64], target: f64) -> BalanceProblem {
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        BalanceProblem::new(DenseMatrix::from_rows(&rows), vec![target])
    }

    #[test]
    fn matching_the_unweighted_mean_gives_uniform_weights() {
        let sol = entropy_balance(&scalar_problem(&[0.0, 1.0, 2.0], 1.0)).unwrap();
        assert!(sol.converged);
        for &w in &sol.weights {
            assert_relative_eq!(w, 1.0 / 3.0, epsilon = 1e-10);
        }
        assert!(sol.max_constraint_violation <= 1e-12);
    }

    /// 1-d grid-search oracle over the dual multiplier.
    fn grid_search_weights(values: &[f64], target: f64) -> Vec<f64> {
        let objective = |lambda: f64| -> f64 {
            let mx = values
                .iter()
                .map(|v| lambda * (v - target))
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = values.iter().map(|v| (lambda * (v - target) - mx).exp()).sum();
            mx + s.ln()
        };
        let mut center = 0.0;
        let mut width = 16.0;
        for _ in 0..40 {
            let mut best = (f64::INFINITY, center);
            for i in 0..=64 {
                let l = center - width + 2.0 * width * i as f64 / 64.0;
                let o = objective(l);
                if o < best.0 {
                    best = (o, l);
                }
            }
            center = best.1;
            width /= 8.0;
        }
        let mx = values
            .iter()
            .map(|v| center * (v - target))
            .fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = values.iter().map(|v| (center * (v - target) - mx).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / s).collect()
    }

    #[test]
    fn newton_matches_grid_search_oracle() {
        let values = [0.0, 1.0, 2.0];
        let sol = entropy_balance(&scalar_problem(&values, 1.5)).unwrap();
        assert!(sol.converged);
        let oracle = grid_search_weights(&values, 1.5);
        for (w, o) in sol.weights.iter().zip(&oracle) {
            assert_relative_eq!(w, o, epsilon = 1e-6);
        }
        // closed form: weights proportional to (1, t, t^2) with t = (1+sqrt(13))/2
        let t = (1.0 + 13.0f64.sqrt()) / 2.0;
        let z = 1.0 + t + t * t;
        assert_relative_eq!(sol.weights[0], 1.0 / z, epsilon = 1e-8);
        assert_relative_eq!(sol.weights[1], t / z, epsilon = 1e-8);
        assert_relative_eq!(sol.weights[2], t * t / z, epsilon = 1e-8);
        // exact moment matching in the original scale
        let wm: f64 = sol.weights.iter().zip(&values).map(|(w, v)| w * v).sum();
        assert!((wm - 1.5).abs() <= 1e-8);
    }

    #[test]
    fn target_outside_support_is_infeasible() {
        match entropy_balance(&scalar_problem(&[0.0, 1.0, 2.0], 3.0)) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn dual_objective_decreases_monotonically() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let a = i as f64 / 50.0;
                vec![a, (a * 7.0).sin()]
            })
            .collect();
        let problem = BalanceProblem::new(DenseMatrix::from_rows(&rows), vec![0.7, 0.1]);
        let (sol, trace) = entropy_balance_traced(&problem).unwrap();
        assert!(sol.converged);
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()));
        }
    }

    #[test]
    fn weights_sum_to_one_and_multiple_columns_match() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let a = (i % 17) as f64 / 17.0;
                let b = (i % 5) as f64;
                vec![a, b]
            })
            .collect();
        let problem = BalanceProblem::new(DenseMatrix::from_rows(&rows), vec![0.55, 1.8]);
        let sol = entropy_balance(&problem).unwrap();
        assert!(sol.converged);
        let total: f64 = sol.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
        assert!(sol.weights.iter().all(|&w| w >= 0.0));
        assert!(sol.max_constraint_violation <= 1e-8);
    }

    #[test]
    fn unconverged_solution_cannot_become_a_scoreset() {
        let sol = BalanceSolution {
            weights: vec![0.5, 0.5],
            dual_multipliers: vec![0.0],
            converged: false,
            max_constraint_violation: 1.0,
        };
        assert!(balance_weights_to_scoreset(&sol).is_err());

        let ok = BalanceSolution {
            weights: vec![0.5, 0.5],
            dual_multipliers: vec![0.0],
            converged: true,
            max_constraint_violation: 0.0,
        };
        let scores = balance_weights_to_scoreset(&ok).unwrap();
        assert_eq!(scores.kind, ScoreKind::EntropyBalance);
        assert_eq!(scores.len(), 2);
    }
}
