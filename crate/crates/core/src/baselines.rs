//! Comparison strategies sharing the tree/forest core: median imputation,
//! missing-together splits, two proximity-weighted iterative imputers and
//! column-wise forest imputation.

use std::collections::HashSet;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{fit_forest, fit_forest_mode, Forest, ForestParams};
use crate::scalar::{pairwise_sum, Scalar};
use crate::seeding::derive_seed;
use crate::split::{criterion_from_partition, threshold_plan, Cell};
use crate::tree::{GrowMode, TreeParams};

pub use crate::tree::{MiaRule, MiaSplit};

/// Result of an iterative imputer: the completed dataset plus diagnostics.
#[derive(Debug, Clone)]
pub struct ImputeOutcome<S: Scalar> {
    pub data: Dataset<S>,
    /// Sweeps whose result is reflected in `data`.
    pub iterations: usize,
    /// Entries `(row, column)` that fell back to the column median because
    /// every proximity weight was zero.
    pub median_fallbacks: Vec<(usize, usize)>,
    /// Per-sweep change statistic: mean absolute change for the
    /// proximity-weighted imputers, summed squared change for the
    /// column-wise imputer.
    pub change_history: Vec<f64>,
}

/// Working copy of the feature matrix during iterative imputation.
/// Unmasked entries are copied once and never modified.
#[derive(Debug, Clone)]
pub(crate) struct ImputationState<S: Scalar> {
    pub values: Vec<S>,
    pub iteration: usize,
    pub last_change: f64,
}

fn column_medians<S: Scalar>(data: &Dataset<S>) -> Result<Vec<S>> {
    let two = S::from_f64_lossy(2.0);
    (0..data.p())
        .map(|h| {
            let mut observed: Vec<S> = data.observed_in_column(h).map(|(_, v)| v).collect();
            if observed.is_empty() {
                return Err(Error::Config(format!(
                    "column {h} is entirely missing; no median exists"
                )));
            }
            observed.sort_by(|a, b| a.partial_cmp(b).expect("features are finite"));
            let m = observed.len();
            Ok(if m % 2 == 1 {
                observed[m / 2]
            } else {
                (observed[m / 2 - 1] + observed[m / 2]) / two
            })
        })
        .collect()
}

/// Replaces each masked entry by the median of its column's observed values.
pub fn impute_median<S: Scalar>(data: &Dataset<S>) -> Result<Dataset<S>> {
    let medians = column_medians(data)?;
    let p = data.p();
    let mut values = data.raw_features();
    for i in 0..data.n() {
        for h in 0..p {
            if data.is_missing(i, h) {
                values[i * p + h] = medians[h];
            }
        }
    }
    data.with_complete_features(values)
}

pub(crate) struct MiaDecision<S: Scalar> {
    pub split: MiaSplit<S>,
    pub score: S,
    pub left_rows: Vec<usize>,
    pub bounds_left: Vec<(S, S)>,
    pub bounds_right: Vec<(S, S)>,
}

/// Searches the missing-together split candidates: for each direction and
/// threshold, both orientations of the missing block, plus the
/// observed-versus-missing split. Scores are the same variance-reduction
/// criterion; both children must keep at least `q_n` members. Ties resolve
/// to the earliest candidate in (direction, threshold, rule) order.
pub(crate) fn best_mia_split<S: Scalar>(
    cell: &Cell<S>,
    data: &Dataset<S>,
    candidate_directions: &[usize],
    q_n: usize,
) -> Option<MiaDecision<S>> {
    let q_n = q_n.max(1);
    let total = cell.members().len();
    if total < 2 * q_n {
        return None;
    }
    let mut directions: Vec<usize> = candidate_directions
        .iter()
        .copied()
        .filter(|&h| h < data.p())
        .collect();
    directions.sort_unstable();
    directions.dedup();

    let n_total = S::from_count(total);
    struct Best<S: Scalar> {
        score: S,
        split: MiaSplit<S>,
        n_obs_left: usize,
    }
    let mut best: Option<Best<S>> = None;

    for h in directions {
        let mut observed: Vec<(S, S)> = Vec::new();
        let mut n_missing = 0usize;
        let mut miss_sum = S::zero();
        let mut miss_ys: Vec<S> = Vec::new();
        for &row in cell.members() {
            match data.value(row, h) {
                Some(x) => observed.push((x, data.response(row))),
                None => {
                    n_missing += 1;
                    miss_ys.push(data.response(row));
                }
            }
        }
        observed.sort_by(|u, v| u.0.partial_cmp(&v.0).expect("features are finite"));
        miss_sum += pairwise_sum(&miss_ys);
        let obs_total: S = {
            let ys: Vec<S> = observed.iter().map(|o| o.1).collect();
            pairwise_sum(&ys)
        };
        let cell_total = obs_total + miss_sum;
        let n_obs = observed.len();

        let mut consider = |split: MiaSplit<S>, n_left: usize, sum_left: S, n_obs_left: usize| {
            let n_right = total - n_left;
            if n_left < q_n || n_right < q_n {
                return;
            }
            let sum_right = cell_total - sum_left;
            let diff = sum_left / S::from_count(n_left) - sum_right / S::from_count(n_right);
            let score =
                S::from_count(n_left) * S::from_count(n_right) / (n_total * n_total) * diff * diff;
            let replace = match &best {
                None => true,
                Some(old) => score > old.score,
            };
            if replace {
                best = Some(Best {
                    score,
                    split,
                    n_obs_left,
                });
            }
        };

        for (z, obs_left_count, obs_left_sum) in threshold_plan(&observed, cell.bounds()[h]) {
            consider(
                MiaSplit::new(h, MiaRule::MissingLeft, Some(z)).expect("threshold present"),
                obs_left_count + n_missing,
                obs_left_sum + miss_sum,
                obs_left_count,
            );
            consider(
                MiaSplit::new(h, MiaRule::MissingRight, Some(z)).expect("threshold present"),
                obs_left_count,
                obs_left_sum,
                obs_left_count,
            );
        }
        consider(
            MiaSplit::new(h, MiaRule::SeparateMissing, None).expect("rule carries no threshold"),
            n_obs,
            obs_total,
            n_obs,
        );
    }

    let best = best?;
    let h = best.split.direction;
    let left_rows: Vec<usize> = cell
        .members()
        .iter()
        .copied()
        .filter(|&row| best.split.goes_left(data.value(row, h)))
        .collect();
    let right_ys: Vec<S> = cell
        .members()
        .iter()
        .filter(|&&row| !best.split.goes_left(data.value(row, h)))
        .map(|&row| data.response(row))
        .collect();
    let left_ys: Vec<S> = left_rows.iter().map(|&row| data.response(row)).collect();
    let score = criterion_from_partition(&left_ys, &right_ys);

    let (mut bounds_left, mut bounds_right) = (cell.bounds().to_vec(), cell.bounds().to_vec());
    if let Some(z) = best.split.threshold {
        let (a, b) = cell.bounds()[h];
        bounds_left[h] = (a, z);
        bounds_right[h] = (z, b);
    }
    Some(MiaDecision {
        split: best.split,
        score,
        left_rows,
        bounds_left,
        bounds_right,
    })
}

/// Fits a forest whose trees use the missing-together split rules.
pub fn fit_mia_forest<S: Scalar>(data: &Dataset<S>, params: &ForestParams) -> Result<Forest<S>> {
    fit_forest_mode(data, params, GrowMode::Mia)
}

/// Weighted mean; `None` when the total weight is zero.
fn weighted_mean<S: Scalar>(pairs: &[(S, S)]) -> Option<S> {
    let mut num = S::zero();
    let mut den = S::zero();
    for &(w, v) in pairs {
        num += w * v;
        den += w;
    }
    if den > S::zero() {
        Some(num / den)
    } else {
        None
    }
}

fn masked_entries<S: Scalar>(data: &Dataset<S>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..data.n() {
        for h in 0..data.p() {
            if data.is_missing(i, h) {
                out.push((i, h));
            }
        }
    }
    out
}

fn mean_abs_change<S: Scalar>(old: &[S], new: &[S], masked: &[(usize, usize)], p: usize) -> f64 {
    if masked.is_empty() {
        return 0.0;
    }
    let sum: f64 = masked
        .iter()
        .map(|&(i, h)| {
            (new[i * p + h] - old[i * p + h])
                .abs()
                .to_f64()
                .expect("finite change")
        })
        .sum();
    sum / masked.len() as f64
}

enum NeighborRule {
    /// Weight all rows observed in the column; average their observed values.
    AllObserved,
    /// Weight the k highest-proximity rows; average their current values.
    TopK(usize),
}

fn impute_by_proximity<S: Scalar>(
    data: &Dataset<S>,
    params: &ForestParams,
    rule: NeighborRule,
    max_iters: usize,
    tol: f64,
    seed_tag: u64,
) -> Result<ImputeOutcome<S>> {
    let p = data.p();
    let medians = column_medians(data)?;
    let masked = masked_entries(data);
    let start = impute_median(data)?;
    if masked.is_empty() {
        return Ok(ImputeOutcome {
            data: start,
            iterations: 0,
            median_fallbacks: Vec::new(),
            change_history: Vec::new(),
        });
    }

    let mut state = ImputationState {
        values: start.raw_features(),
        iteration: 0,
        last_change: f64::INFINITY,
    };
    let mut fallbacks = Vec::new();
    let mut history = Vec::new();

    for iteration in 1..=max_iters {
        let current = data.with_complete_features(state.values.clone())?;
        let mut fit_params = *params;
        fit_params.seed = derive_seed(params.seed, &[seed_tag, iteration as u64]);
        let forest = fit_forest(&current, &fit_params)?;
        let proximity = forest.proximity(&current)?;

        let mut next = state.values.clone();
        let mut iter_fallbacks = Vec::new();
        for &(j, h) in &masked {
            let imputed = match rule {
                NeighborRule::AllObserved => {
                    let pairs: Vec<(S, S)> = data
                        .observed_in_column(h)
                        .map(|(i, v)| (proximity.get(i, j), v))
                        .collect();
                    weighted_mean(&pairs)
                }
                NeighborRule::TopK(k) => {
                    let mut neighbors: Vec<(S, usize)> = (0..data.n())
                        .filter(|&i| i != j)
                        .map(|i| (proximity.get(i, j), i))
                        .collect();
                    neighbors.sort_by(|a, b| {
                        b.0.partial_cmp(&a.0)
                            .expect("proximities are finite")
                            .then(a.1.cmp(&b.1))
                    });
                    let pairs: Vec<(S, S)> = neighbors
                        .into_iter()
                        .take(k)
                        .map(|(w, i)| (w, state.values[i * p + h]))
                        .collect();
                    weighted_mean(&pairs)
                }
            };
            next[j * p + h] = match imputed {
                Some(v) => v,
                None => {
                    iter_fallbacks.push((j, h));
                    medians[h]
                }
            };
        }

        let change = mean_abs_change(&state.values, &next, &masked, p);
        state.values = next;
        state.iteration = iteration;
        state.last_change = change;
        history.push(change);
        fallbacks = iter_fallbacks;
        if change < tol {
            break;
        }
    }

    Ok(ImputeOutcome {
        data: data.with_complete_features(state.values)?,
        iterations: state.iteration,
        median_fallbacks: fallbacks,
        change_history: history,
    })
}

/// Iterative proximity-weighted imputation over the observed values of each
/// column, starting from the median fill. Stops after `max_iters` sweeps or
/// when the mean absolute change of the imputed entries drops below `tol`.
pub fn impute_breiman<S: Scalar>(
    data: &Dataset<S>,
    params: &ForestParams,
    max_iters: usize,
    tol: f64,
) -> Result<ImputeOutcome<S>> {
    impute_by_proximity(data, params, NeighborRule::AllObserved, max_iters, tol, 0xB)
}

/// Like [`impute_breiman`], but each masked entry averages the current
/// values (imputed and observed alike) of its `k` highest-proximity rows.
pub fn impute_ishioka<S: Scalar>(
    data: &Dataset<S>,
    params: &ForestParams,
    k: usize,
    max_iters: usize,
    tol: f64,
) -> Result<ImputeOutcome<S>> {
    if k == 0 {
        return Err(Error::Config("neighbor count k must be at least 1".into()));
    }
    impute_by_proximity(data, params, NeighborRule::TopK(k), max_iters, tol, 0x15)
}

/// Column-wise forest imputation: each column with missing entries is
/// regressed on the other columns and the response (min-max rescaled to
/// `[0,1]` so it can serve as a feature), training on the rows where the
/// column is observed. Sweeps stop when the summed squared change increases,
/// returning the previous sweep's result, or at `max_iters`.
pub fn impute_missforest<S: Scalar>(
    data: &Dataset<S>,
    params: &ForestParams,
    max_iters: usize,
) -> Result<ImputeOutcome<S>> {
    let p = data.p();
    let n = data.n();
    let _ = column_medians(data)?;
    let masked = masked_entries(data);
    let start = impute_median(data)?;
    if masked.is_empty() {
        return Ok(ImputeOutcome {
            data: start,
            iterations: 0,
            median_fallbacks: Vec::new(),
            change_history: Vec::new(),
        });
    }
    let mut columns: Vec<usize> = (0..p).filter(|&h| data.missing_count(h) > 0).collect();
    columns.sort_by_key(|&h| (data.missing_count(h), h));

    // The response joins the feature matrix rescaled into [0,1]; splits
    // depend on feature values only through their ordering, which the
    // rescaling preserves.
    let (y_lo, y_hi) = data.responses().iter().fold(
        (S::infinity(), S::neg_infinity()),
        |(lo, hi), &y| (lo.min(y), hi.max(y)),
    );
    let scale_y = |y: S| {
        if y_hi > y_lo {
            (y - y_lo) / (y_hi - y_lo)
        } else {
            S::from_f64_lossy(0.5)
        }
    };

    let subsample_frac = params.subsample_size as f64 / n as f64;
    let mut values = start.raw_features();
    let mut prev_diff = f64::INFINITY;
    let mut history = Vec::new();
    let mut iterations = 0usize;

    for sweep in 1..=max_iters {
        let old = values.clone();
        for &h in &columns {
            let aux_row = |i: usize, values: &[S]| -> Vec<Option<S>> {
                let mut row: Vec<Option<S>> = (0..p)
                    .filter(|&g| g != h)
                    .map(|g| Some(values[i * p + g]))
                    .collect();
                row.push(Some(scale_y(data.response(i))));
                row
            };
            let train_rows: Vec<usize> = (0..n).filter(|&i| !data.is_missing(i, h)).collect();
            let aux_features: Vec<Vec<Option<S>>> =
                train_rows.iter().map(|&i| aux_row(i, &values)).collect();
            let aux_target: Vec<S> = train_rows.iter().map(|&i| values[i * p + h]).collect();
            let aux_data = Dataset::from_rows(p, aux_features, aux_target)?;

            let aux_subsample = ((subsample_frac * train_rows.len() as f64).ceil() as usize)
                .clamp(1, train_rows.len());
            // Degenerate training sets (heavily missing columns) shrink the
            // leaf-size window to stay inside the parameter constraints.
            let nodesize = params.tree.nodesize.min(aux_subsample);
            let q_n = params.tree.q_n.min(TreeParams::default_qn(nodesize));
            let aux_params = ForestParams {
                n_trees: params.n_trees,
                subsample_size: aux_subsample,
                tree: TreeParams::new(params.tree.mtry, nodesize, q_n)?,
                seed: derive_seed(params.seed, &[0xF0, sweep as u64, h as u64]),
            };
            let forest = fit_forest(&aux_data, &aux_params)?;
            for i in data.missing_in_column(h) {
                let prediction = forest.predict_fractional(&aux_row(i, &values))?;
                values[i * p + h] = prediction;
            }
        }
        let diff: f64 = masked
            .iter()
            .map(|&(i, h)| {
                let d = (values[i * p + h] - old[i * p + h])
                    .to_f64()
                    .expect("finite change");
                d * d
            })
            .sum();
        history.push(diff);
        if diff > prev_diff {
            values = old;
            break;
        }
        iterations = sweep;
        prev_diff = diff;
    }

    Ok(ImputeOutcome {
        data: data.with_complete_features(values)?,
        iterations,
        median_fallbacks: Vec::new(),
        change_history: history,
    })
}

/// Rows of `data` that changed relative to `original` outside the mask;
/// test support for the identity-on-observed-entries invariant.
pub fn observed_entries_changed<S: Scalar>(original: &Dataset<S>, imputed: &Dataset<S>) -> usize {
    let mut changed = 0;
    for i in 0..original.n() {
        for h in 0..original.p() {
            if let Some(v) = original.value(i, h) {
                if imputed.value(i, h) != Some(v) {
                    changed += 1;
                }
            }
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sample, inject_mcar, MissRates};
    use crate::forest::default_subsample_size;

    fn params_for(n: usize, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: 7,
            subsample_size: default_subsample_size(n),
            tree: TreeParams::with_default_qn(1, 5).unwrap(),
            seed,
        }
    }

    #[test]
    fn median_fills_with_observed_median() {
        let data = Dataset::from_rows(
            1,
            vec![vec![Some(0.25)], vec![None], vec![Some(0.75)]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let filled = impute_median(&data).unwrap();
        assert_eq!(filled.value(1, 0), Some(0.5));
    }

    #[test]
    fn median_uses_central_order_statistic_on_odd_counts() {
        let data = Dataset::from_rows(
            1,
            vec![vec![Some(0.25)], vec![Some(0.5)], vec![None], vec![Some(1.0)]],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        let filled = impute_median(&data).unwrap();
        assert_eq!(filled.value(2, 0), Some(0.5));
    }

    #[test]
    fn median_is_identity_without_missing_entries() {
        let data = generate_sample::<f64>(20, 1.0, 3).unwrap();
        let filled = impute_median(&data).unwrap();
        assert_eq!(data, filled);
    }

    #[test]
    fn median_rejects_fully_missing_column() {
        let data = Dataset::from_rows(
            1,
            vec![vec![None], vec![None]],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert!(matches!(impute_median(&data), Err(Error::Config(_))));
    }

    #[test]
    fn mia_enumeration_places_missing_row_by_brute_force() {
        let data = Dataset::from_rows(
            1,
            vec![vec![Some(0.1)], vec![Some(0.9)], vec![None]],
            vec![0.0, 10.0, 10.0],
        )
        .unwrap();
        let cell = Cell::root_plain(&data, vec![0, 1, 2]);
        let decision = best_mia_split(&cell, &data, &[0], 1).unwrap();
        assert_eq!(decision.split.rule, MiaRule::MissingRight);
        assert_eq!(decision.split.threshold, Some(0.5));
        assert_eq!(decision.left_rows, vec![0]);
        let v = decision.score;
        assert!((v - 200.0 / 9.0).abs() < 1e-12, "score {v}");
    }

    #[test]
    fn mia_separate_missing_keeps_observed_left() {
        let data = Dataset::from_rows(
            1,
            vec![vec![Some(0.4)], vec![Some(0.6)], vec![None], vec![None]],
            vec![0.0, 0.0, 10.0, 10.0],
        )
        .unwrap();
        let cell = Cell::root_plain(&data, vec![0, 1, 2, 3]);
        let decision = best_mia_split(&cell, &data, &[0], 1).unwrap();
        assert_eq!(decision.split.rule, MiaRule::SeparateMissing);
        assert_eq!(decision.split.threshold, None);
        assert_eq!(decision.left_rows, vec![0, 1]);
        assert_eq!(decision.score, 25.0);
    }

    #[test]
    fn mia_forest_on_complete_data_equals_standard_forest() {
        let data = generate_sample::<f64>(60, 1.0, 41).unwrap();
        let params = params_for(60, 42);
        let standard = fit_forest(&data, &params).unwrap();
        let mia = fit_mia_forest(&data, &params).unwrap();
        let probe = generate_sample::<f64>(25, 0.0, 43).unwrap();
        for i in 0..probe.n() {
            let x = probe.row_query(i);
            assert_eq!(
                standard.predict_fractional(&x).unwrap(),
                mia.predict_fractional(&x).unwrap()
            );
        }
    }

    #[test]
    fn weighted_mean_hand_values() {
        assert_eq!(weighted_mean(&[(0.5, 0.2), (0.5, 0.4)]), Some(0.3));
        assert_eq!(weighted_mean(&[(1.0, 0.7), (0.0, 0.1)]), Some(0.7));
        assert_eq!(weighted_mean::<f64>(&[(0.0, 0.7)]), None);
        assert_eq!(weighted_mean::<f64>(&[]), None);
    }

    #[test]
    fn breiman_identity_without_missing() {
        let data = generate_sample::<f64>(30, 1.0, 50).unwrap();
        let outcome = impute_breiman(&data, &params_for(30, 51), 5, 1e-3).unwrap();
        assert_eq!(outcome.data, data);
        assert_eq!(outcome.iterations, 0);
    }

    #[test]
    fn breiman_preserves_observed_and_stays_in_column_range() {
        let clean = generate_sample::<f64>(60, 1.0, 52).unwrap();
        let rates = MissRates::new(vec![0.3, 0.0, 0.2, 0.2, 0.0]).unwrap();
        let data = inject_mcar(&clean, &rates, 53).unwrap();
        let outcome = impute_breiman(&data, &params_for(60, 54), 3, 1e-4).unwrap();
        assert_eq!(observed_entries_changed(&data, &outcome.data), 0);
        assert!(outcome.iterations <= 3);
        for h in 0..data.p() {
            let (lo, hi) = data
                .observed_in_column(h)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                    (lo.min(v), hi.max(v))
                });
            for j in data.missing_in_column(h) {
                let v = outcome.data.value(j, h).unwrap();
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn ishioka_identity_without_missing() {
        let data = generate_sample::<f64>(25, 1.0, 60).unwrap();
        let outcome = impute_ishioka(&data, &params_for(25, 61), 5, 5, 1e-3).unwrap();
        assert_eq!(outcome.data, data);
    }

    #[test]
    fn ishioka_preserves_observed_entries() {
        let clean = generate_sample::<f64>(50, 1.0, 62).unwrap();
        let rates = MissRates::new(vec![0.25, 0.0, 0.1, 0.3, 0.0]).unwrap();
        let data = inject_mcar(&clean, &rates, 63).unwrap();
        let outcome = impute_ishioka(&data, &params_for(50, 64), 10, 3, 1e-4).unwrap();
        assert_eq!(observed_entries_changed(&data, &outcome.data), 0);
        for &(j, h) in &masked_entries(&data) {
            let v = outcome.data.value(j, h).unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ishioka_rejects_zero_neighbors() {
        let data = generate_sample::<f64>(10, 1.0, 65).unwrap();
        assert!(impute_ishioka(&data, &params_for(10, 66), 0, 3, 1e-3).is_err());
    }

    #[test]
    fn missforest_identity_without_missing() {
        let data = generate_sample::<f64>(25, 1.0, 70).unwrap();
        let outcome = impute_missforest(&data, &params_for(25, 71), 10).unwrap();
        assert_eq!(outcome.data, data);
        assert_eq!(outcome.iterations, 0);
    }

    #[test]
    fn missforest_recovers_duplicated_column() {
        // x2 duplicates x1 on a regular grid; a deep forest regressing x2 on
        // x1 should land the single masked entry within grid resolution.
        let n = 80;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let v = (i as f64 + 0.5) / n as f64;
            let x2 = if i == 37 { None } else { Some(v) };
            rows.push(vec![Some(v), x2]);
            y.push(3.0 * v);
        }
        let data = Dataset::from_rows(2, rows, y).unwrap();
        let params = ForestParams {
            n_trees: 30,
            subsample_size: default_subsample_size(n),
            tree: TreeParams::new(2, 1, 1).unwrap(),
            seed: 72,
        };
        let outcome = impute_missforest(&data, &params, 10).unwrap();
        let truth = (37.0 + 0.5) / n as f64;
        let got = outcome.data.value(37, 1).unwrap();
        assert!((got - truth).abs() <= 0.05, "imputed {got}, expected ~{truth}");
    }

    #[test]
    fn missforest_stops_on_increasing_difference() {
        let clean = generate_sample::<f64>(60, 1.0, 73).unwrap();
        let rates = MissRates::new(vec![0.3, 0.0, 0.2, 0.4, 0.0]).unwrap();
        let data = inject_mcar(&clean, &rates, 74).unwrap();
        let outcome = impute_missforest(&data, &params_for(60, 75), 10).unwrap();
        assert_eq!(observed_entries_changed(&data, &outcome.data), 0);
        let h = &outcome.change_history;
        assert!(!h.is_empty());
        // iterations reflects the last accepted sweep: the one before the
        // first increase, or the last sweep run.
        let first_increase = h.windows(2).position(|w| w[1] > w[0]);
        match first_increase {
            Some(t) => assert_eq!(outcome.iterations, t + 1),
            None => assert_eq!(outcome.iterations, h.len()),
        }
    }
}
