//! Ensemble construction, aggregation and the proximity matrix.
//!
//! Each tree draws its subsample and candidate directions from an RNG
//! stream derived from `(seed, tree index)`, so fitting is reproducible
//! bit-for-bit regardless of how the trees are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_mean, Scalar};
use crate::tree::{grow_tree_mode, GrowMode, PredictMode, TreeNode, TreeParams};

/// Default subsample size: `ceil(0.632 * n)`.
pub fn default_subsample_size(n: usize) -> usize {
    (0.632 * n as f64).ceil() as usize
}

/// Ensemble hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Rows drawn without replacement for each tree.
    pub subsample_size: usize,
    pub tree: TreeParams,
    pub seed: u64,
}

impl ForestParams {
    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        if self.subsample_size == 0 || self.subsample_size > n {
            return Err(Error::Config(format!(
                "subsample size {} must lie in 1..={} for {} rows",
                self.subsample_size, n, n
            )));
        }
        self.tree.check_against(self.subsample_size, p)?;
        Ok(())
    }
}

/// Fitted ensemble: trees plus the per-tree subsample record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Forest<S: Scalar> {
    params: ForestParams,
    trees: Vec<TreeNode<S>>,
    subsamples: Vec<Vec<usize>>,
}

impl<S: Scalar> Forest<S> {
    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[TreeNode<S>] {
        &self.trees
    }

    pub fn subsamples(&self) -> &[Vec<usize>] {
        &self.subsamples
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Arithmetic mean of the per-tree fractional predictions.
    pub fn predict_fractional(&self, x: &[Option<S>]) -> Result<S> {
        let values = self
            .trees
            .iter()
            .map(|tree| tree.predict_fractional(x))
            .collect::<Result<Vec<S>>>()?;
        Ok(pairwise_mean(&values))
    }

    /// Arithmetic mean of the per-tree stochastic predictions.
    pub fn predict_stochastic<R: rand::Rng>(&self, x: &[Option<S>], rng: &mut R) -> Result<S> {
        let values = self
            .trees
            .iter()
            .map(|tree| tree.predict_stochastic(x, rng))
            .collect::<Result<Vec<S>>>()?;
        Ok(pairwise_mean(&values))
    }

    pub fn predict<R: rand::Rng>(
        &self,
        x: &[Option<S>],
        mode: PredictMode,
        rng: &mut R,
    ) -> Result<S> {
        match mode {
            PredictMode::Fractional => self.predict_fractional(x),
            PredictMode::Stochastic => self.predict_stochastic(x, rng),
        }
    }

    /// Proximity matrix over the dataset rows: the fraction of trees in
    /// which two rows land in the same leaf. Rows with missing coordinates
    /// descend deterministically toward the higher-probability child.
    pub fn proximity(&self, data: &Dataset<S>) -> Result<ProximityMatrix<S>> {
        let n = data.n();
        let queries: Vec<Vec<Option<S>>> = (0..n).map(|i| data.row_query(i)).collect();
        let mut counts = vec![0u32; n * n];
        for tree in &self.trees {
            let leaves: Vec<usize> = queries
                .iter()
                .map(|q| tree.route_to_leaf(q))
                .collect::<Result<Vec<usize>>>()?;
            for i in 0..n {
                for j in i..n {
                    if leaves[i] == leaves[j] {
                        counts[i * n + j] += 1;
                        counts[j * n + i] += u32::from(i != j);
                    }
                }
            }
        }
        let m = S::from_count(self.trees.len());
        let values = counts
            .into_iter()
            .map(|c| S::from_u32(c).expect("count fits any Scalar") / m)
            .collect();
        Ok(ProximityMatrix { n, values })
    }
}

/// Symmetric matrix with unit diagonal and entries on a `1/M` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix<S: Scalar> {
    n: usize,
    values: Vec<S>,
}

impl<S: Scalar> ProximityMatrix<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.values[i * self.n + j]
    }
}

/// Fits an ensemble with assignation-based trees.
pub fn fit_forest<S: Scalar>(data: &Dataset<S>, params: &ForestParams) -> Result<Forest<S>> {
    fit_forest_mode(data, params, GrowMode::Assigned)
}

pub(crate) fn fit_forest_mode<S: Scalar>(
    data: &Dataset<S>,
    params: &ForestParams,
    mode: GrowMode,
) -> Result<Forest<S>> {
    if data.is_empty() {
        return Err(Error::Config("cannot fit a forest on an empty dataset".into()));
    }
    params.validate(data.n(), data.p())?;
    let fitted: Vec<(TreeNode<S>, Vec<usize>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(k as u64);
            let mut rows =
                rand::seq::index::sample(&mut rng, data.n(), params.subsample_size).into_vec();
            rows.sort_unstable();
            let (tree, _) = grow_tree_mode(data, &rows, &params.tree, &mut rng, mode)?;
            Ok((tree, rows))
        })
        .collect::<Result<_>>()?;
    let (trees, subsamples) = fitted.into_iter().unzip();
    Ok(Forest {
        params: *params,
        trees,
        subsamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sample, inject_mcar, MissRates};

    fn small_params(n: usize, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: 7,
            subsample_size: default_subsample_size(n),
            tree: TreeParams::with_default_qn(1, 5).unwrap(),
            seed,
        }
    }

    fn corrupted(n: usize, seed: u64) -> Dataset<f64> {
        let clean = generate_sample(n, 1.0, seed).unwrap();
        let rates = MissRates::new(vec![0.2, 0.0, 0.1, 0.3, 0.0]).unwrap();
        inject_mcar(&clean, &rates, seed ^ 0xabc).unwrap()
    }

    #[test]
    fn refitting_is_bit_identical() {
        let data = corrupted(60, 5);
        let params = small_params(60, 11);
        let a = fit_forest(&data, &params).unwrap();
        let b = fit_forest(&data, &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_tree_forest_equals_its_tree() {
        let data = corrupted(40, 3);
        let mut params = small_params(40, 4);
        params.n_trees = 1;
        let forest = fit_forest(&data, &params).unwrap();
        let x = vec![Some(0.3), Some(0.6), Some(0.1), Some(0.8), Some(0.5)];
        assert_eq!(
            forest.predict_fractional(&x).unwrap(),
            forest.trees()[0].predict_fractional(&x).unwrap()
        );
    }

    #[test]
    fn forest_prediction_is_mean_of_trees() {
        let data = corrupted(50, 8);
        let params = small_params(50, 9);
        let forest = fit_forest(&data, &params).unwrap();
        let x = vec![Some(0.9), Some(0.2), Some(0.4), None, Some(0.7)];
        let per_tree: Vec<f64> = forest
            .trees()
            .iter()
            .map(|t| t.predict_fractional(&x).unwrap())
            .collect();
        let expected = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
        let got = forest.predict_fractional(&x).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn subsamples_are_distinct_sorted_indices() {
        let data = corrupted(30, 2);
        let params = small_params(30, 6);
        let forest = fit_forest(&data, &params).unwrap();
        for rows in forest.subsamples() {
            assert_eq!(rows.len(), params.subsample_size);
            assert!(rows.windows(2).all(|w| w[0] < w[1]));
            assert!(*rows.last().unwrap() < data.n());
        }
    }

    #[test]
    fn proximity_is_symmetric_with_unit_diagonal() {
        let data = corrupted(25, 7);
        let params = small_params(25, 13);
        let forest = fit_forest(&data, &params).unwrap();
        let k = forest.proximity(&data).unwrap();
        for i in 0..data.n() {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..data.n() {
                let v = k.get(i, j);
                assert_eq!(v, k.get(j, i));
                assert!((0.0..=1.0).contains(&v));
                let grid = v * params.n_trees as f64;
                assert!((grid - grid.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_tree_proximity_is_binary(){
        let data = corrupted(20, 1);
        let mut params = small_params(20, 2);
        params.n_trees = 1;
        let forest = fit_forest(&data, &params).unwrap();
        let k = forest.proximity(&data).unwrap();
        for i in 0..data.n() {
            for j in 0..data.n() {
                let v = k.get(i, j);
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn identical_rows_have_unit_proximity() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            let v = i as f64 / 20.0;
            rows.push(vec![Some(v), Some(1.0 - v)]);
            y.push(v * 3.0);
        }
        // Duplicate row 4 exactly, response included.
        rows.push(rows[4].clone());
        y.push(y[4]);
        let data = Dataset::from_rows(2, rows, y).unwrap();
        let params = ForestParams {
            n_trees: 9,
            subsample_size: default_subsample_size(data.n()),
            tree: TreeParams::with_default_qn(1, 5).unwrap(),
            seed: 3,
        };
        let forest = fit_forest(&data, &params).unwrap();
        let k = forest.proximity(&data).unwrap();
        assert_eq!(k.get(4, 20), 1.0);
    }

    #[test]
    fn oversized_subsample_is_rejected() {
        let data = corrupted(10, 4);
        let mut params = small_params(10, 5);
        params.subsample_size = 11;
        assert!(matches!(
            fit_forest(&data, &params),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn shifting_responses_shifts_predictions() {
        let clean = generate_sample(80, 1.0, 31).unwrap();
        let rates = MissRates::new(vec![0.2, 0.0, 0.1, 0.2, 0.0]).unwrap();
        let data = inject_mcar(&clean, &rates, 32).unwrap();
        let shift = 100.0;
        let shifted = Dataset::new(
            data.p(),
            data.raw_features(),
            (0..data.n() * data.p())
                .map(|idx| data.is_missing(idx / data.p(), idx % data.p()))
                .collect(),
            data.responses().iter().map(|y| y + shift).collect(),
            None,
        )
        .unwrap();
        let params = small_params(80, 77);
        let base = fit_forest(&data, &params).unwrap();
        let moved = fit_forest(&shifted, &params).unwrap();
        for i in 0..20 {
            let x = clean.row_query(i);
            let a = base.predict_fractional(&x).unwrap();
            let b = moved.predict_fractional(&x).unwrap();
            assert!((b - (a + shift)).abs() < 1e-9, "{b} vs {}", a + shift);
        }
    }
}
