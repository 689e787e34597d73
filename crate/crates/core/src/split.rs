//! CART criterion evaluation and the joint search for the best
//! (cut, assignation) couple.
//!
//! A cut compares an observed coordinate against a threshold; members whose
//! coordinate is missing in the cut direction are not compared but assigned
//! to a child, and the assignment is optimized jointly with the cut. Only
//! prefix assignments of the response-sorted missing members can maximize
//! the criterion, so the search is linear in the number of missing members.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::{pairwise_mean, Scalar};

/// Hyperrectangular region holding its member rows and, per member, the
/// current interval imputation of each missing coordinate. Intervals start
/// at `[0,1]` and narrow to one side of every cut the member is assigned
/// through.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<S: Scalar> {
    bounds: Vec<(S, S)>,
    members: Vec<usize>,
    imputations: Vec<Vec<(usize, (S, S))>>,
}

impl<S: Scalar> Cell<S> {
    /// Root cell `[0,1]^p` over the given rows, with interval imputations
    /// initialized to `[0,1]` for every masked coordinate.
    pub fn root(data: &Dataset<S>, members: Vec<usize>) -> Self {
        let bounds = vec![(S::zero(), S::one()); data.p()];
        let imputations = members
            .iter()
            .map(|&row| {
                (0..data.p())
                    .filter(|&h| data.is_missing(row, h))
                    .map(|h| (h, (S::zero(), S::one())))
                    .collect()
            })
            .collect();
        Self {
            bounds,
            members,
            imputations,
        }
    }

    /// Root cell without interval bookkeeping; used by split rules that keep
    /// missing members together instead of imputing them.
    pub(crate) fn root_plain(data: &Dataset<S>, members: Vec<usize>) -> Self {
        let imputations = vec![Vec::new(); members.len()];
        Self {
            bounds: vec![(S::zero(), S::one()); data.p()],
            members,
            imputations,
        }
    }

    pub fn bounds(&self) -> &[(S, S)] {
        &self.bounds
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Interval imputation of `row` in `direction`, when one is tracked.
    pub fn imputation(&self, row: usize, direction: usize) -> Option<(S, S)> {
        let pos = self.members.iter().position(|&r| r == row)?;
        self.imputations[pos]
            .iter()
            .find(|(h, _)| *h == direction)
            .map(|(_, iv)| *iv)
    }

    pub(crate) fn member_imputations(&self, pos: usize) -> &[(usize, (S, S))] {
        &self.imputations[pos]
    }

    /// Splits into children along `cut`; rows in `left_rows` go left, the
    /// rest right. Members missing in the cut direction get their interval
    /// narrowed to the side they were assigned to.
    pub(crate) fn split_assigned(
        &self,
        data: &Dataset<S>,
        cut: &Cut<S>,
        left_rows: &HashSet<usize>,
    ) -> (Cell<S>, Cell<S>) {
        let (a, b) = self.bounds[cut.direction];
        let mut bounds_left = self.bounds.clone();
        bounds_left[cut.direction] = (a, cut.threshold);
        let mut bounds_right = self.bounds.clone();
        bounds_right[cut.direction] = (cut.threshold, b);

        let mut left = Cell {
            bounds: bounds_left,
            members: Vec::new(),
            imputations: Vec::new(),
        };
        let mut right = Cell {
            bounds: bounds_right,
            members: Vec::new(),
            imputations: Vec::new(),
        };
        for (pos, &row) in self.members.iter().enumerate() {
            let goes_left = left_rows.contains(&row);
            let mut intervals = self.imputations[pos].clone();
            if data.is_missing(row, cut.direction) {
                let narrowed = if goes_left {
                    (a, cut.threshold)
                } else {
                    (cut.threshold, b)
                };
                for entry in intervals.iter_mut() {
                    if entry.0 == cut.direction {
                        entry.1 = narrowed;
                    }
                }
            }
            let target = if goes_left { &mut left } else { &mut right };
            target.members.push(row);
            target.imputations.push(intervals);
        }
        (left, right)
    }

    /// Splits with explicit child bounds and member lists, carrying interval
    /// bookkeeping through unchanged.
    pub(crate) fn split_with_bounds(
        &self,
        bounds_left: Vec<(S, S)>,
        bounds_right: Vec<(S, S)>,
        left_rows: &HashSet<usize>,
    ) -> (Cell<S>, Cell<S>) {
        let mut left = Cell {
            bounds: bounds_left,
            members: Vec::new(),
            imputations: Vec::new(),
        };
        let mut right = Cell {
            bounds: bounds_right,
            members: Vec::new(),
            imputations: Vec::new(),
        };
        for (pos, &row) in self.members.iter().enumerate() {
            let target = if left_rows.contains(&row) {
                &mut left
            } else {
                &mut right
            };
            target.members.push(row);
            target.imputations.push(self.imputations[pos].clone());
        }
        (left, right)
    }

    /// Checks the geometric invariants: observed member coordinates and all
    /// tracked imputation intervals lie within the cell bounds.
    pub fn validate(&self, data: &Dataset<S>) -> Result<()> {
        for (pos, &row) in self.members.iter().enumerate() {
            for h in 0..data.p() {
                let (a, b) = self.bounds[h];
                if let Some(v) = data.value(row, h) {
                    if v < a || v > b {
                        return Err(Error::Internal(format!(
                            "row {row} coordinate {h} = {v} outside cell bounds [{a}, {b}]"
                        )));
                    }
                }
            }
            for &(h, (lo, hi)) in &self.imputations[pos] {
                let (a, b) = self.bounds[h];
                if lo < a || hi > b || lo > hi {
                    return Err(Error::Internal(format!(
                        "row {row} imputation [{lo}, {hi}] in direction {h} \
                         outside cell bounds [{a}, {b}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A cut: feature direction plus a threshold strictly inside the cell's
/// bounds in that direction. Observed coordinates route left when strictly
/// below the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Cut<S: Scalar> {
    pub direction: usize,
    pub threshold: S,
}

/// Which end of the response-sorted missing members a prefix is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// The `prefix_len` smallest responses go to the left child.
    SmallestLeft,
    /// The `prefix_len` smallest responses go to the right child.
    SmallestRight,
}

/// Compact encoding of a child assignment for the members missing in the
/// cut direction: a prefix of the response-sorted members goes to one child,
/// the remainder to the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignation {
    pub orientation: Orientation,
    pub prefix_len: usize,
}

impl Assignation {
    pub const EMPTY: Assignation = Assignation {
        orientation: Orientation::SmallestLeft,
        prefix_len: 0,
    };

    /// Left/right flags for `count` missing members listed in ascending
    /// response order (`true` = left child).
    pub fn left_flags(&self, count: usize) -> Vec<bool> {
        let k = self.prefix_len.min(count);
        match self.orientation {
            Orientation::SmallestLeft => (0..count).map(|i| i < k).collect(),
            Orientation::SmallestRight => (0..count).map(|i| i >= k).collect(),
        }
    }
}

/// Outcome of the joint (cut, assignation) search.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision<S: Scalar> {
    pub cut: Cut<S>,
    pub assignation: Assignation,
    /// Fraction of the missing-in-direction members assigned left; `None`
    /// when the cell had no member missing in the cut direction.
    pub p_left: Option<S>,
    pub score: S,
    pub child_counts: (usize, usize),
}

impl<S: Scalar> SplitDecision<S> {
    pub fn p_right(&self) -> Option<S> {
        self.p_left.map(|p| S::one() - p)
    }
}

/// Variance-reduction criterion for a two-way partition of responses:
/// `N_L * N_R / N^2 * (mean_L - mean_R)^2`, zero when either side is empty.
pub(crate) fn criterion_from_partition<S: Scalar>(left: &[S], right: &[S]) -> S {
    if left.is_empty() || right.is_empty() {
        return S::zero();
    }
    let n = S::from_count(left.len() + right.len());
    let diff = pairwise_mean(left) - pairwise_mean(right);
    S::from_count(left.len()) * S::from_count(right.len()) / (n * n) * diff * diff
}

/// Criterion on a complete cell: `left_membership[i]` marks the child of
/// `responses[i]`.
pub fn cart_complete<S: Scalar>(responses: &[S], left_membership: &[bool]) -> Result<S> {
    if responses.is_empty() {
        return Err(Error::InvalidInput("criterion over an empty cell".into()));
    }
    if responses.len() != left_membership.len() {
        return Err(Error::InvalidInput(format!(
            "{} responses but {} membership flags",
            responses.len(),
            left_membership.len()
        )));
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (&y, &is_left) in responses.iter().zip(left_membership) {
        if is_left {
            left.push(y);
        } else {
            right.push(y);
        }
    }
    Ok(criterion_from_partition(&left, &right))
}

/// Cell members missing in `direction`, sorted ascending by response with
/// ties broken by row index.
pub fn missing_sorted_by_response<S: Scalar>(
    data: &Dataset<S>,
    members: &[usize],
    direction: usize,
) -> Vec<usize> {
    let mut rows: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&row| data.is_missing(row, direction))
        .collect();
    rows.sort_by(|&a, &b| {
        data.response(a)
            .partial_cmp(&data.response(b))
            .expect("responses are finite")
            .then(a.cmp(&b))
    });
    rows
}

/// Materializes the member partition induced by a cut and an assignation,
/// preserving the cell's member order in both children.
pub fn split_members<S: Scalar>(
    cell: &Cell<S>,
    data: &Dataset<S>,
    cut: &Cut<S>,
    assignation: &Assignation,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let missing = missing_sorted_by_response(data, cell.members(), cut.direction);
    if assignation.prefix_len > missing.len() {
        return Err(Error::InvalidInput(format!(
            "assignation prefix {} exceeds {} missing members",
            assignation.prefix_len,
            missing.len()
        )));
    }
    let flags = assignation.left_flags(missing.len());
    let left_missing: HashSet<usize> = missing
        .iter()
        .zip(&flags)
        .filter(|(_, &left)| left)
        .map(|(&row, _)| row)
        .collect();
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &row in cell.members() {
        let goes_left = match data.value(row, cut.direction) {
            Some(x) => x < cut.threshold,
            None => left_missing.contains(&row),
        };
        if goes_left {
            left.push(row);
        } else {
            right.push(row);
        }
    }
    Ok((left, right))
}

/// Criterion of a cell under a cut and an assignation of its missing
/// members: observed members route by threshold comparison, missing members
/// by the expanded assignation.
pub fn cart_with_assignation<S: Scalar>(
    cell: &Cell<S>,
    data: &Dataset<S>,
    cut: &Cut<S>,
    assignation: &Assignation,
) -> Result<S> {
    if cut.direction >= data.p() {
        return Err(Error::InvalidInput(format!(
            "cut direction {} out of range for p = {}",
            cut.direction,
            data.p()
        )));
    }
    let (a, b) = cell.bounds()[cut.direction];
    if !(cut.threshold > a && cut.threshold < b) {
        return Err(Error::InvalidInput(format!(
            "threshold {} not strictly inside [{a}, {b}]",
            cut.threshold
        )));
    }
    cell.validate(data)?;
    let (left, right) = split_members(cell, data, cut, assignation)?;
    let left_y: Vec<S> = left.iter().map(|&r| data.response(r)).collect();
    let right_y: Vec<S> = right.iter().map(|&r| data.response(r)).collect();
    Ok(criterion_from_partition(&left_y, &right_y))
}

/// Prefix assignations of the response-sorted missing members, in both
/// orientations, with the duplicated all-left/all-right pairs removed. Every
/// criterion-maximizing assignation lies in this set.
pub fn admissible_assignations<S: Scalar>(missing_responses: &[S]) -> Vec<Assignation> {
    let n = missing_responses.len();
    let mut out: Vec<Assignation> = (0..=n)
        .map(|k| Assignation {
            orientation: Orientation::SmallestLeft,
            prefix_len: k,
        })
        .collect();
    // SmallestRight with k = 0 repeats all-left, k = n repeats all-right.
    for k in 1..n {
        out.push(Assignation {
            orientation: Orientation::SmallestRight,
            prefix_len: k,
        });
    }
    out
}

/// Threshold plan for one direction: candidate thresholds with the count and
/// response sum of the observed members routed left.
/// Thresholds are midpoints between consecutive distinct observed values; a
/// direction with no observed coordinate admits the midpoint of the cell's
/// bounds. Candidates that cannot separate their generating values (adjacent
/// floats) or that touch the cell bounds are dropped.
pub(crate) fn threshold_plan<S: Scalar>(
    observed: &[(S, S)],
    bounds: (S, S),
) -> Vec<(S, usize, S)> {
    let (a, b) = bounds;
    let two = S::from_f64_lossy(2.0);
    if observed.is_empty() {
        let mid = (a + b) / two;
        if mid > a && mid < b {
            return vec![(mid, 0, S::zero())];
        }
        return Vec::new();
    }
    let mut plan = Vec::new();
    let mut cum_sum = S::zero();
    let mut i = 0;
    while i < observed.len() {
        let v = observed[i].0;
        let mut j = i;
        while j < observed.len() && observed[j].0 == v {
            cum_sum += observed[j].1;
            j += 1;
        }
        if j < observed.len() {
            let next = observed[j].0;
            let z = (v + next) / two;
            if z > v && z <= next && z > a && z < b {
                plan.push((z, j, cum_sum));
            }
        }
        i = j;
    }
    plan
}

/// Candidate thresholds considered by [`best_split`] in one direction.
pub fn candidate_thresholds<S: Scalar>(
    cell: &Cell<S>,
    data: &Dataset<S>,
    direction: usize,
) -> Vec<S> {
    let mut observed: Vec<(S, S)> = cell
        .members()
        .iter()
        .filter_map(|&row| data.value(row, direction).map(|x| (x, data.response(row))))
        .collect();
    observed.sort_by(|u, v| u.0.partial_cmp(&v.0).expect("features are finite"));
    threshold_plan(&observed, cell.bounds()[direction])
        .into_iter()
        .map(|(z, _, _)| z)
        .collect()
}

struct Scored<S: Scalar> {
    score: S,
    direction: usize,
    threshold: S,
    assignation: Assignation,
    n_left_missing: usize,
    n_missing: usize,
    n_left: usize,
    n_right: usize,
    flags_by_row: Vec<bool>,
}

/// Left flags of the missing members listed in ascending row order; the
/// final tie-breaking key.
fn flags_by_row<S: Scalar>(assignation: &Assignation, missing: &[(S, usize)]) -> Vec<bool> {
    let flags = assignation.left_flags(missing.len());
    let mut pairs: Vec<(usize, bool)> = missing
        .iter()
        .map(|&(_, row)| row)
        .zip(flags)
        .collect();
    pairs.sort_by_key(|&(row, _)| row);
    pairs.into_iter().map(|(_, f)| f).collect()
}

/// Ties on the score resolve to the smallest direction, then the smallest
/// threshold, then the fewest members assigned left, then the
/// lexicographically smallest assignment of the missing members by row.
fn beats<S: Scalar>(new: &Scored<S>, old: &Scored<S>) -> bool {
    if new.score != old.score {
        return new.score > old.score;
    }
    if new.direction != old.direction {
        return new.direction < old.direction;
    }
    if new.threshold != old.threshold {
        return new.threshold < old.threshold;
    }
    if new.n_left_missing != old.n_left_missing {
        return new.n_left_missing < old.n_left_missing;
    }
    new.flags_by_row < old.flags_by_row
}

/// Searches every candidate cut in the given directions and every admissible
/// assignation leaving at least `q_n` members in each child, and returns the
/// criterion maximizer. `None` when no (cut, assignation) satisfies the
/// floor — in particular whenever the cell has fewer than `2 q_n` members.
pub fn best_split<S: Scalar>(
    cell: &Cell<S>,
    data: &Dataset<S>,
    candidate_directions: &[usize],
    q_n: usize,
) -> Option<SplitDecision<S>> {
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
    let mut best: Option<Scored<S>> = None;

    for h in directions {
        let mut observed: Vec<(S, S)> = Vec::new();
        let mut missing: Vec<(S, usize)> = Vec::new();
        for &row in cell.members() {
            match data.value(row, h) {
                Some(x) => observed.push((x, data.response(row))),
                None => missing.push((data.response(row), row)),
            }
        }
        observed.sort_by(|u, v| u.0.partial_cmp(&v.0).expect("features are finite"));
        missing.sort_by(|u, v| {
            u.0.partial_cmp(&v.0)
                .expect("responses are finite")
                .then(u.1.cmp(&v.1))
        });

        let n_missing = missing.len();
        let mut miss_prefix = Vec::with_capacity(n_missing + 1);
        miss_prefix.push(S::zero());
        for m in &missing {
            let last = *miss_prefix.last().unwrap();
            miss_prefix.push(last + m.0);
        }
        let miss_total = *miss_prefix.last().unwrap();

        // (assignation, members sent left, response sum sent left)
        let mut assignations: Vec<(Assignation, usize, S)> = admissible_assignations(
            &missing.iter().map(|m| m.0).collect::<Vec<_>>(),
        )
        .into_iter()
        .map(|a| {
            let (cnt, sum) = match a.orientation {
                Orientation::SmallestLeft => (a.prefix_len, miss_prefix[a.prefix_len]),
                Orientation::SmallestRight => (
                    n_missing - a.prefix_len,
                    miss_total - miss_prefix[a.prefix_len],
                ),
            };
            (a, cnt, sum)
        })
        .collect();
        // Stable candidate order for tie-breaking on equal scores.
        assignations.sort_by_key(|&(_, cnt, _)| cnt);

        let obs_total: S = {
            let ys: Vec<S> = observed.iter().map(|o| o.1).collect();
            crate::scalar::pairwise_sum(&ys)
        };
        let cell_total = obs_total + miss_total;

        for (z, obs_left_count, obs_left_sum) in threshold_plan(&observed, cell.bounds()[h]) {
            for &(assignation, miss_left_count, miss_left_sum) in &assignations {
                let n_left = obs_left_count + miss_left_count;
                let n_right = total - n_left;
                if n_left < q_n || n_right < q_n {
                    continue;
                }
                let sum_left = obs_left_sum + miss_left_sum;
                let sum_right = cell_total - sum_left;
                let diff =
                    sum_left / S::from_count(n_left) - sum_right / S::from_count(n_right);
                let score =
                    S::from_count(n_left) * S::from_count(n_right) / (n_total * n_total)
                        * diff
                        * diff;

                let needs_flags = match &best {
                    Some(old) => {
                        score == old.score
                            && h == old.direction
                            && z == old.threshold
                            && miss_left_count == old.n_left_missing
                    }
                    None => false,
                };
                let candidate = Scored {
                    score,
                    direction: h,
                    threshold: z,
                    assignation,
                    n_left_missing: miss_left_count,
                    n_missing,
                    n_left,
                    n_right,
                    flags_by_row: if needs_flags {
                        flags_by_row(&assignation, &missing)
                    } else {
                        Vec::new()
                    },
                };
                let replace = match &best {
                    None => true,
                    Some(old) => beats(&candidate, old),
                };
                if replace {
                    let mut winner = candidate;
                    if winner.flags_by_row.is_empty() && winner.n_missing > 0 {
                        winner.flags_by_row = flags_by_row(&winner.assignation, &missing);
                    }
                    best = Some(winner);
                }
            }
        }
    }

    let best = best?;
    let cut = Cut {
        direction: best.direction,
        threshold: best.threshold,
    };
    let (left_rows, right_rows) = split_members(cell, data, &cut, &best.assignation)
        .expect("winning assignation covers the missing members");
    debug_assert_eq!((left_rows.len(), right_rows.len()), (best.n_left, best.n_right));
    let score = cart_with_assignation(cell, data, &cut, &best.assignation)
        .expect("winning candidate rescoring cannot fail");
    let p_left = if best.n_missing > 0 {
        Some(S::from_count(best.n_left_missing) / S::from_count(best.n_missing))
    } else {
        None
    };
    Some(SplitDecision {
        cut,
        assignation: best.assignation,
        p_left,
        score,
        child_counts: (left_rows.len(), right_rows.len()),
    })
}
