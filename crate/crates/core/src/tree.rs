//! Single-tree growth and prediction.
//!
//! Growth runs a breadth-first worklist over cells: a cell whose member
//! count lies in `[q_n, nodesize]` becomes a leaf; otherwise `mtry`
//! candidate directions are drawn and the best (cut, assignation) found.
//! Query points with a missing coordinate at an internal node are routed by
//! the probability learned from the training assignments, either
//! fractionally (weighted average of both children) or stochastically.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_mean, Scalar};
use crate::split::{best_split, split_members, Cell, Cut};

/// Tree hyperparameters. `q_n` is the minimum and `nodesize` the maximum
/// member count of a final cell, constrained by `2*q_n - 1 <= nodesize`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub mtry: usize,
    pub nodesize: usize,
    pub q_n: usize,
}

impl TreeParams {
    pub fn new(mtry: usize, nodesize: usize, q_n: usize) -> Result<Self> {
        if mtry == 0 {
            return Err(Error::Config("mtry must be at least 1".into()));
        }
        if q_n == 0 {
            return Err(Error::Config("q_n must be at least 1".into()));
        }
        if 2 * q_n - 1 > nodesize {
            return Err(Error::Config(format!(
                "nodesize {nodesize} violates 2*q_n - 1 <= nodesize for q_n = {q_n}"
            )));
        }
        Ok(Self {
            mtry,
            nodesize,
            q_n,
        })
    }

    /// Largest `q_n` permitted for the given `nodesize`.
    pub fn default_qn(nodesize: usize) -> usize {
        ((nodesize + 1) / 2).max(1)
    }

    /// Constructs with `q_n` at its largest permitted value.
    pub fn with_default_qn(mtry: usize, nodesize: usize) -> Result<Self> {
        Self::new(mtry, nodesize, Self::default_qn(nodesize))
    }

    pub(crate) fn check_against(&self, subsample_size: usize, p: usize) -> Result<()> {
        if self.mtry > p {
            return Err(Error::Config(format!(
                "mtry {} exceeds feature count {p}",
                self.mtry
            )));
        }
        if self.nodesize > subsample_size {
            return Err(Error::Config(format!(
                "nodesize {} exceeds subsample size {subsample_size}",
                self.nodesize
            )));
        }
        Ok(())
    }
}

/// Split rule for the missing-together strategy: members missing in the
/// direction stay on one designated side, or are separated from the
/// observed members outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiaRule {
    /// `x < z` or missing goes left; `x >= z` goes right.
    MissingLeft,
    /// `x < z` goes left; `x >= z` or missing goes right.
    MissingRight,
    /// Observed goes left; missing goes right. Carries no threshold.
    SeparateMissing,
}

/// A missing-together split: direction, rule, and a threshold for the two
/// threshold-based rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MiaSplit<S: Scalar> {
    pub direction: usize,
    pub rule: MiaRule,
    pub threshold: Option<S>,
}

impl<S: Scalar> MiaSplit<S> {
    pub fn new(direction: usize, rule: MiaRule, threshold: Option<S>) -> Result<Self> {
        match (rule, threshold) {
            (MiaRule::SeparateMissing, Some(_)) => Err(Error::InvalidInput(
                "the observed-versus-missing rule carries no threshold".into(),
            )),
            (MiaRule::SeparateMissing, None) => Ok(Self {
                direction,
                rule,
                threshold,
            }),
            (_, None) => Err(Error::InvalidInput(
                "threshold rules require a threshold".into(),
            )),
            (_, Some(_)) => Ok(Self {
                direction,
                rule,
                threshold,
            }),
        }
    }

    /// Routes a query coordinate; `None` means the coordinate is missing.
    pub fn goes_left(&self, coordinate: Option<S>) -> bool {
        match (self.rule, coordinate) {
            (MiaRule::MissingLeft, None) => true,
            (MiaRule::MissingRight, None) => false,
            (MiaRule::SeparateMissing, None) => false,
            (MiaRule::SeparateMissing, Some(_)) => true,
            (_, Some(x)) => x < self.threshold.expect("threshold rules carry a threshold"),
        }
    }
}

/// Routing payload of an internal node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[serde(bound = "")]
pub enum NodeRule<S: Scalar> {
    /// Threshold cut; `p_left` is the learned probability that a member
    /// missing in the cut direction belongs to the left child, `None` when
    /// no training member was missing there.
    Assigned { cut: Cut<S>, p_left: Option<S> },
    /// Missing-together cut.
    Mia(MiaSplit<S>),
}

/// Recursive tree over `[0,1]^p`. Internal nodes keep the cell estimate so
/// prediction can stop early when no routing information applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "")]
pub enum TreeNode<S: Scalar> {
    Leaf {
        estimate: S,
        count: usize,
    },
    Internal {
        rule: NodeRule<S>,
        estimate: S,
        left: Box<TreeNode<S>>,
        right: Box<TreeNode<S>>,
    },
}

/// How to resolve a missing coordinate at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    /// Weight both children by `(p_left, 1 - p_left)`; deterministic and
    /// equal to the expectation of the stochastic mode.
    Fractional,
    /// Draw the child from a Bernoulli(`p_left`) variable.
    Stochastic,
}

impl<S: Scalar> TreeNode<S> {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    pub fn estimate(&self) -> S {
        match self {
            TreeNode::Leaf { estimate, .. } => *estimate,
            TreeNode::Internal { estimate, .. } => *estimate,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn node_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => 1 + left.node_count() + right.node_count(),
        }
    }

    pub fn predict_fractional(&self, x: &[Option<S>]) -> Result<S> {
        self.predict_impl(x, None)
    }

    pub fn predict_stochastic<R: Rng>(&self, x: &[Option<S>], rng: &mut R) -> Result<S> {
        self.predict_impl(x, Some(rng))
    }

    pub fn predict<R: Rng>(&self, x: &[Option<S>], mode: PredictMode, rng: &mut R) -> Result<S> {
        match mode {
            PredictMode::Fractional => self.predict_fractional(x),
            PredictMode::Stochastic => self.predict_stochastic(x, rng),
        }
    }

    fn predict_impl(&self, x: &[Option<S>], mut rng: Option<&mut dyn RngCore>) -> Result<S> {
        match self {
            TreeNode::Leaf { estimate, .. } => Ok(*estimate),
            TreeNode::Internal {
                rule,
                estimate,
                left,
                right,
            } => match rule {
                NodeRule::Assigned { cut, p_left } => {
                    if cut.direction >= x.len() {
                        return Err(Error::InvalidInput(format!(
                            "query point has {} coordinates, node cuts direction {}",
                            x.len(),
                            cut.direction
                        )));
                    }
                    match x[cut.direction] {
                        Some(v) => {
                            if v < cut.threshold {
                                left.predict_impl(x, rng)
                            } else {
                                right.predict_impl(x, rng)
                            }
                        }
                        None => match p_left {
                            None => Ok(*estimate),
                            Some(p) => match rng.as_deref_mut() {
                                None => {
                                    let l = left.predict_impl(x, None)?;
                                    let r = right.predict_impl(x, None)?;
                                    Ok(*p * l + (S::one() - *p) * r)
                                }
                                Some(r) => {
                                    let draw = S::from_f64_lossy(r.gen::<f64>());
                                    if draw < *p {
                                        left.predict_impl(x, rng)
                                    } else {
                                        right.predict_impl(x, rng)
                                    }
                                }
                            },
                        },
                    }
                }
                NodeRule::Mia(split) => {
                    if split.direction >= x.len() {
                        return Err(Error::InvalidInput(format!(
                            "query point has {} coordinates, node cuts direction {}",
                            x.len(),
                            split.direction
                        )));
                    }
                    if split.goes_left(x[split.direction]) {
                        left.predict_impl(x, rng)
                    } else {
                        right.predict_impl(x, rng)
                    }
                }
            },
        }
    }

    /// Deterministic descent to a leaf, resolving a missing coordinate to
    /// the child with the larger routing probability (ties and nodes
    /// without routing information go left). Returns the leaf's index in
    /// left-to-right order.
    pub fn route_to_leaf(&self, x: &[Option<S>]) -> Result<usize> {
        let mut node = self;
        let mut offset = 0usize;
        loop {
            match node {
                TreeNode::Leaf { .. } => return Ok(offset),
                TreeNode::Internal {
                    rule, left, right, ..
                } => {
                    let goes_left = match rule {
                        NodeRule::Assigned { cut, p_left } => {
                            if cut.direction >= x.len() {
                                return Err(Error::InvalidInput(format!(
                                    "query point has {} coordinates, node cuts direction {}",
                                    x.len(),
                                    cut.direction
                                )));
                            }
                            match x[cut.direction] {
                                Some(v) => v < cut.threshold,
                                None => match p_left {
                                    Some(p) => *p + *p >= S::one(),
                                    None => true,
                                },
                            }
                        }
                        NodeRule::Mia(split) => split.goes_left(x[split.direction]),
                    };
                    if goes_left {
                        node = left;
                    } else {
                        offset += left.leaf_count();
                        node = right;
                    }
                }
            }
        }
    }
}

/// Final interval imputations of one leaf's members: `(row, direction,
/// interval)` for every coordinate that was missing.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafReport<S: Scalar> {
    pub members: Vec<usize>,
    pub estimate: S,
    pub intervals: Vec<(usize, usize, (S, S))>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GrowMode {
    Assigned,
    Mia,
}

enum Pending<S: Scalar> {
    Leaf {
        estimate: S,
        count: usize,
    },
    Internal {
        rule: NodeRule<S>,
        estimate: S,
        left: usize,
        right: usize,
    },
}

fn reify<S: Scalar>(arena: &mut Vec<Option<Pending<S>>>, slot: usize) -> TreeNode<S> {
    match arena[slot].take().expect("every slot is filled once") {
        Pending::Leaf { estimate, count } => TreeNode::Leaf { estimate, count },
        Pending::Internal {
            rule,
            estimate,
            left,
            right,
        } => {
            let left = reify(arena, left);
            let right = reify(arena, right);
            TreeNode::Internal {
                rule,
                estimate,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
    }
}

/// Grows one tree over the given subsample rows.
pub fn grow_tree<S: Scalar, R: Rng>(
    data: &Dataset<S>,
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<TreeNode<S>> {
    grow_tree_mode(data, rows, params, rng, GrowMode::Assigned).map(|(root, _)| root)
}

/// Grows one tree and reports the leaf membership with the final interval
/// imputation of every missing coordinate.
pub fn grow_tree_report<S: Scalar, R: Rng>(
    data: &Dataset<S>,
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
) -> Result<(TreeNode<S>, Vec<LeafReport<S>>)> {
    grow_tree_mode(data, rows, params, rng, GrowMode::Assigned)
}

pub(crate) fn grow_tree_mode<S: Scalar, R: Rng>(
    data: &Dataset<S>,
    rows: &[usize],
    params: &TreeParams,
    rng: &mut R,
    mode: GrowMode,
) -> Result<(TreeNode<S>, Vec<LeafReport<S>>)> {
    if rows.is_empty() {
        return Err(Error::Config("cannot grow a tree on an empty subsample".into()));
    }
    if rows.len() < params.q_n {
        return Err(Error::Config(format!(
            "subsample of {} rows is smaller than q_n = {}",
            rows.len(),
            params.q_n
        )));
    }
    params.check_against(rows.len(), data.p())?;

    let root_cell = match mode {
        GrowMode::Assigned => Cell::root(data, rows.to_vec()),
        GrowMode::Mia => Cell::root_plain(data, rows.to_vec()),
    };

    let mut arena: Vec<Option<Pending<S>>> = vec![None];
    let mut reports = Vec::new();
    let mut queue: VecDeque<(Cell<S>, usize)> = VecDeque::new();
    queue.push_back((root_cell, 0));

    while let Some((cell, slot)) = queue.pop_front() {
        let count = cell.members().len();
        let responses: Vec<S> = cell.members().iter().map(|&r| data.response(r)).collect();
        let estimate = pairwise_mean(&responses);

        let mut make_leaf = count <= params.nodesize;
        let mut split_result = None;
        if !make_leaf {
            let mut directions =
                rand::seq::index::sample(rng, data.p(), params.mtry).into_vec();
            directions.sort_unstable();
            split_result = match mode {
                GrowMode::Assigned => best_split(&cell, data, &directions, params.q_n)
                    .map(|decision| {
                        let (left_rows, _) =
                            split_members(&cell, data, &decision.cut, &decision.assignation)
                                .expect("decision covers the cell");
                        let left_set: HashSet<usize> = left_rows.into_iter().collect();
                        let (left_cell, right_cell) =
                            cell.split_assigned(data, &decision.cut, &left_set);
                        (
                            NodeRule::Assigned {
                                cut: decision.cut,
                                p_left: decision.p_left,
                            },
                            left_cell,
                            right_cell,
                        )
                    }),
                GrowMode::Mia => crate::baselines::best_mia_split(&cell, data, &directions, params.q_n)
                    .map(|decision| {
                        let left_set: HashSet<usize> =
                            decision.left_rows.iter().copied().collect();
                        let (left_cell, right_cell) = cell.split_with_bounds(
                            decision.bounds_left,
                            decision.bounds_right,
                            &left_set,
                        );
                        (NodeRule::Mia(decision.split), left_cell, right_cell)
                    }),
            };
            // No q_n-feasible cut exists; close the cell rather than loop.
            make_leaf = split_result.is_none();
        }

        if make_leaf {
            arena[slot] = Some(Pending::Leaf { estimate, count });
            let mut intervals = Vec::new();
            for (pos, &row) in cell.members().iter().enumerate() {
                for &(dir, interval) in cell.member_imputations(pos) {
                    intervals.push((row, dir, interval));
                }
            }
            reports.push(LeafReport {
                members: cell.members().to_vec(),
                estimate,
                intervals,
            });
            continue;
        }

        let (rule, left_cell, right_cell) = split_result.expect("checked above");
        let left_slot = arena.len();
        arena.push(None);
        let right_slot = arena.len();
        arena.push(None);
        arena[slot] = Some(Pending::Internal {
            rule,
            estimate,
            left: left_slot,
            right: right_slot,
        });
        queue.push_back((left_cell, left_slot));
        queue.push_back((right_cell, right_slot));
    }

    Ok((reify(&mut arena, 0), reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn four_point_instance() -> Dataset<f64> {
        Dataset::from_rows(
            1,
            vec![vec![Some(0.1)], vec![Some(0.9)], vec![None], vec![None]],
            vec![0.0, 10.0, 1.0, 9.0],
        )
        .unwrap()
    }

    fn depth_one_tree(p_left: Option<f64>) -> TreeNode<f64> {
        TreeNode::Internal {
            rule: NodeRule::Assigned {
                cut: Cut {
                    direction: 0,
                    threshold: 0.5,
                },
                p_left,
            },
            estimate: 6.0,
            left: Box::new(TreeNode::Leaf {
                estimate: 0.0,
                count: 1,
            }),
            right: Box::new(TreeNode::Leaf {
                estimate: 8.0,
                count: 3,
            }),
        }
    }

    #[test]
    fn params_enforce_constraint_chain() {
        assert!(TreeParams::new(1, 5, 3).is_ok());
        assert!(TreeParams::new(1, 5, 4).is_err());
        assert!(TreeParams::new(0, 5, 3).is_err());
        assert!(TreeParams::new(1, 5, 0).is_err());
        assert_eq!(TreeParams::default_qn(5), 3);
        assert_eq!(TreeParams::default_qn(6), 3);
        assert_eq!(TreeParams::default_qn(1), 1);
    }

    #[test]
    fn subsample_of_nodesize_becomes_single_leaf() {
        let data = four_point_instance();
        let params = TreeParams::new(1, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow_tree(&data, &[0, 1, 2, 3], &params, &mut rng).unwrap();
        assert!(tree.is_leaf());
        assert_eq!(tree.estimate(), 5.0);
    }

    #[test]
    fn hand_instance_grows_expected_depth_one_tree() {
        let data = four_point_instance();
        let params = TreeParams::new(1, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (tree, reports) = grow_tree_report(&data, &[0, 1, 2, 3], &params, &mut rng).unwrap();
        match &tree {
            TreeNode::Internal {
                rule: NodeRule::Assigned { cut, p_left },
                left,
                right,
                ..
            } => {
                assert_eq!(cut.direction, 0);
                assert_eq!(cut.threshold, 0.5);
                assert_eq!(*p_left, Some(0.5));
                assert_eq!(left.estimate(), 0.5);
                assert_eq!(right.estimate(), 9.5);
            }
            other => panic!("expected an internal root, got {other:?}"),
        }
        assert_eq!(reports.len(), 2);
        let assigned_left = reports.iter().find(|r| r.members.contains(&2)).unwrap();
        assert!(assigned_left
            .intervals
            .contains(&(2, 0, (0.0, 0.5))));
    }

    #[test]
    fn rejects_subsample_below_qn() {
        let data = four_point_instance();
        let params = TreeParams::new(1, 5, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            grow_tree(&data, &[0, 1], &params, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forced_leaf_on_duplicate_coordinates() {
        // Five identical observed coordinates admit no threshold, yet the
        // cell exceeds nodesize; growth must close it instead of looping.
        let data = Dataset::from_rows(
            1,
            vec![vec![Some(0.5)]; 5],
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let params = TreeParams::new(1, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tree = grow_tree(&data, &[0, 1, 2, 3, 4], &params, &mut rng).unwrap();
        assert!(tree.is_leaf());
        assert_eq!(tree.estimate(), 3.0);
    }

    #[test]
    fn fractional_prediction_weights_children() {
        let tree = depth_one_tree(Some(0.25));
        assert_eq!(tree.predict_fractional(&[None]).unwrap(), 6.0);
        assert_eq!(tree.predict_fractional(&[Some(0.2)]).unwrap(), 0.0);
        assert_eq!(tree.predict_fractional(&[Some(0.7)]).unwrap(), 8.0);
    }

    #[test]
    fn stochastic_prediction_matches_fractional_mean() {
        let tree = depth_one_tree(Some(0.25));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let reps = 10_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            sum += tree.predict_stochastic(&[None], &mut rng).unwrap();
        }
        let mean = sum / reps as f64;
        // Values are 0 or 8 with P(left) = 1/4: sd = sqrt(1/4*3/4*64).
        let se = (0.25f64 * 0.75 * 64.0).sqrt() / (reps as f64).sqrt();
        assert!((mean - 6.0).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn complete_query_is_mode_independent() {
        let tree = depth_one_tree(Some(0.25));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frac = tree.predict_fractional(&[Some(0.9)]).unwrap();
        let stoch = tree.predict_stochastic(&[Some(0.9)], &mut rng).unwrap();
        assert_eq!(frac, stoch);
    }

    #[test]
    fn missing_at_unrouted_node_falls_back_to_estimate() {
        let tree = depth_one_tree(None);
        assert_eq!(tree.predict_fractional(&[None]).unwrap(), 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(tree.predict_stochastic(&[None], &mut rng).unwrap(), 6.0);
    }

    #[test]
    fn prediction_rejects_dimension_mismatch() {
        let tree = depth_one_tree(Some(0.5));
        assert!(tree.predict_fractional(&[]).is_err());
    }

    #[test]
    fn mia_split_shape_is_validated() {
        assert!(MiaSplit::<f64>::new(0, MiaRule::SeparateMissing, None).is_ok());
        assert!(MiaSplit::<f64>::new(0, MiaRule::SeparateMissing, Some(0.5)).is_err());
        assert!(MiaSplit::<f64>::new(0, MiaRule::MissingLeft, None).is_err());
        let s = MiaSplit::new(0, MiaRule::MissingLeft, Some(0.5)).unwrap();
        assert!(s.goes_left(None));
        assert!(s.goes_left(Some(0.4)));
        assert!(!s.goes_left(Some(0.6)));
    }

    #[test]
    fn tree_json_shape_is_stable() {
        let tree = depth_one_tree(Some(0.25));
        let json = serde_json::to_value(&tree).unwrap();
        assert_eq!(json["kind"], "internal");
        assert_eq!(json["rule"]["type"], "assigned");
        assert_eq!(json["rule"]["cut"]["direction"], 0);
        assert_eq!(json["rule"]["p_left"], 0.25);
        assert_eq!(json["left"]["kind"], "leaf");
        assert_eq!(json["left"]["estimate"], 0.0);
        let back: TreeNode<f64> = serde_json::from_value(json).unwrap();
        assert_eq!(back, tree);
    }

    #[test]
    fn route_to_leaf_numbers_left_to_right() {
        let tree = depth_one_tree(Some(0.75));
        assert_eq!(tree.route_to_leaf(&[Some(0.1)]).unwrap(), 0);
        assert_eq!(tree.route_to_leaf(&[Some(0.9)]).unwrap(), 1);
        // Missing coordinate follows the larger probability.
        assert_eq!(tree.route_to_leaf(&[None]).unwrap(), 0);
        let tree = depth_one_tree(Some(0.25));
        assert_eq!(tree.route_to_leaf(&[None]).unwrap(), 1);
        let tree = depth_one_tree(Some(0.5));
        assert_eq!(tree.route_to_leaf(&[None]).unwrap(), 0);
        let tree = depth_one_tree(None);
        assert_eq!(tree.route_to_leaf(&[None]).unwrap(), 0);
    }
}
