//! eRRH and RRB assignment of device clusters by alternating optimization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::game::{utility_with, BrsOptions, ClusterAllocationProblem, LinkScheme, RrbProblem};
use crate::hungarian::{max_weight_assignment, min_cost_assignment};
use crate::rate::cluster_channels;
use crate::topology::ChannelRealization;

pub const MAX_ALTERNATIONS: usize = 50;

/// `u[j][l][n]`: clipped utility of cluster `j` served by eRRH `l` on RRB `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTensor {
    pub u: Vec<Vec<Vec<f64>>>,
}

impl UtilityTensor {
    pub fn from_fn(clusters: usize, errhs: usize, rrbs: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let u = (0..clusters).map(|j| (0..errhs).map(|l| (0..rrbs).map(|n| f(j, l, n)).collect()).collect()).collect();
        Self { u }
    }

    pub fn num_clusters(&self) -> usize {
        self.u.len()
    }

    pub fn num_errhs(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    pub fn num_rrbs(&self) -> usize {
        self.u.first().and_then(|e| e.first()).map_or(0, Vec::len)
    }

    pub fn get(&self, j: usize, l: usize, n: usize) -> f64 {
        self.u[j][l][n]
    }

    fn validate(&self) -> Result<()> {
        let (l, n) = (self.num_errhs(), self.num_rrbs());
        let ragged = self.u.iter().any(|e| e.len() != l || e.iter().any(|r| r.len() != n));
        if ragged {
            return Err(Error::Shape("ragged utility tensor".into()));
        }
        if self.u.iter().flatten().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain("utility entries must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Power problem of cluster `members` on eRRH `l` over `rrbs`.
pub fn build_cluster_problem(
    members: &[usize],
    l: usize,
    rrbs: &[usize],
    prices: &[f64],
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> ClusterAllocationProblem {
    let rrbs = rrbs
        .iter()
        .map(|&n| {
            let (ch, cbs, links) = cluster_channels(members, l, n, channels, config);
            RrbProblem { rrb: n, price: prices[n], channels: ch, cbs, links }
        })
        .collect();
    ClusterAllocationProblem {
        errh: l,
        rrbs,
        caps: [config.p_max_du_w, config.p_max_du_w, config.errh_cap_per_cluster()],
    }
}

/// Fills the tensor from `entry(j, l, n)`, clipping at zero.
///
/// Entries are evaluated in parallel and stored in index order.
pub fn build_utility_tensor<F>(clusters: usize, errhs: usize, rrbs: usize, entry: F) -> Result<UtilityTensor>
where
    F: Fn(usize, usize, usize) -> Result<f64> + Sync,
{
    let flat: Vec<f64> = (0..clusters * errhs * rrbs)
        .into_par_iter()
        .map(|k| {
            let (j, rest) = (k / (errhs * rrbs), k % (errhs * rrbs));
            entry(j, rest / rrbs, rest % rrbs).map(|v| v.max(0.0))
        })
        .collect::<Result<_>>()?;
    let t = UtilityTensor::from_fn(clusters, errhs, rrbs, |j, l, n| flat[(j * errhs + l) * rrbs + n]);
    t.validate()?;
    Ok(t)
}

/// Tensor of single-RRB best-response utilities `[sum e2e - mu P]^+`.
pub fn brs_utility_tensor(
    members: &[Vec<usize>],
    prices: &[f64],
    channels: &ChannelRealization,
    config: &NetworkConfig,
    scheme: &dyn LinkScheme,
    opts: &BrsOptions,
) -> Result<UtilityTensor> {
    build_utility_tensor(members.len(), channels.num_errhs(), channels.num_rrbs(), |j, l, n| {
        let problem = build_cluster_problem(&members[j], l, &[n], prices, channels, config);
        let out = crate::game::solve_brs_with(scheme, &problem, opts, None)?;
        Ok(utility_with(scheme, &problem, &out.powers))
    })
}

/// Cluster-to-eRRH map `x` and RRB-to-cluster map `y` (RRB `n` is served by
/// cluster `cluster_of[n]` on eRRH `errh_of[cluster_of[n]]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationState {
    pub errh_of: Vec<usize>,
    pub cluster_of: Vec<usize>,
}

impl AllocationState {
    /// `x[l][j]`.
    pub fn x_matrix(&self, errhs: usize) -> Vec<Vec<bool>> {
        (0..errhs).map(|l| self.errh_of.iter().map(|&e| e == l).collect()).collect()
    }

    /// `y[n][l][j]`.
    pub fn y_tensor(&self, errhs: usize) -> Vec<Vec<Vec<bool>>> {
        self.cluster_of
            .iter()
            .map(|&c| (0..errhs).map(|l| (0..self.errh_of.len()).map(|j| j == c && self.errh_of[j] == l).collect()).collect())
            .collect()
    }

    pub fn rrbs_of(&self, j: usize) -> Vec<usize> {
        (0..self.cluster_of.len()).filter(|&n| self.cluster_of[n] == j).collect()
    }

    /// Capacity, one eRRH per cluster, one cluster per RRB and coverage.
    pub fn check(&self, errhs: usize, capacity: usize) -> Result<()> {
        let mut load = vec![0usize; errhs];
        for &l in &self.errh_of {
            if l >= errhs {
                return Err(Error::Infeasible(format!("eRRH index {l} out of range")));
            }
            load[l] += 1;
        }
        if let Some(l) = load.iter().position(|&c| c > capacity) {
            return Err(Error::Infeasible(format!("eRRH {l} serves {} clusters, capacity {capacity}", load[l])));
        }
        let mut covered = vec![false; self.errh_of.len()];
        for &j in &self.cluster_of {
            if j >= covered.len() {
                return Err(Error::Infeasible(format!("cluster index {j} out of range")));
            }
            covered[j] = true;
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(Error::Infeasible(format!("cluster {j} has no RRB")));
        }
        Ok(())
    }
}

/// Summed utility of an allocation.
pub fn assignment_objective(utility: &UtilityTensor, state: &AllocationState) -> f64 {
    state.cluster_of.iter().enumerate().map(|(n, &j)| utility.get(j, state.errh_of[j], n)).sum()
}

/// Optimal eRRH per cluster for a fixed RRB map, `capacity` clusters per eRRH.
pub fn solve_x_given_y(utility: &UtilityTensor, cluster_of: &[usize], capacity: usize) -> Result<Vec<usize>> {
    let (jn, ln) = (utility.num_clusters(), utility.num_errhs());
    if jn > ln * capacity {
        return Err(Error::Infeasible(format!("{jn} clusters exceed {ln} eRRHs x {capacity} slots")));
    }
    // summed[l][j] over the RRBs the cluster holds.
    let mut summed = vec![vec![0.0; jn]; ln];
    for (n, &j) in cluster_of.iter().enumerate() {
        for (l, row) in summed.iter_mut().enumerate() {
            row[j] += utility.get(j, l, n);
        }
    }
    let weight: Vec<Vec<f64>> = (0..jn)
        .map(|j| (0..ln * capacity).map(|slot| summed[slot / capacity][j]).collect())
        .collect();
    Ok(max_weight_assignment(&weight)?.into_iter().map(|slot| slot / capacity).collect())
}

/// Optimal RRB map for fixed eRRHs with every cluster holding an RRB.
///
/// Each RRB goes to its best cluster (lowest index on ties). When that leaves
/// a cluster empty, each cluster is first given one RRB by a minimum-loss
/// assignment and the remaining RRBs keep their best cluster.
pub fn solve_y_given_x(utility: &UtilityTensor, errh_of: &[usize]) -> Result<Vec<usize>> {
    let (jn, nn) = (utility.num_clusters(), utility.num_rrbs());
    if nn < jn {
        return Err(Error::Infeasible(format!("{nn} RRBs cannot cover {jn} clusters")));
    }
    let value = |n: usize, j: usize| utility.get(j, errh_of[j], n);
    let mut best = vec![0usize; nn];
    for (n, b) in best.iter_mut().enumerate() {
        for j in 1..jn {
            if value(n, j) > value(n, *b) {
                *b = j;
            }
        }
    }
    let mut covered = vec![false; jn];
    best.iter().for_each(|&j| covered[j] = true);
    if covered.iter().all(|&c| c) {
        return Ok(best);
    }
    let loss: Vec<Vec<f64>> = (0..jn).map(|j| (0..nn).map(|n| value(n, best[n]) - value(n, j)).collect()).collect();
    let mut out = best;
    for (j, n) in min_cost_assignment(&loss)?.into_iter().enumerate() {
        out[n] = j;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRun {
    pub state: AllocationState,
    /// Objective after every half step, starting from the initial state.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Round-robin RRB deal used as the starting point.
pub fn initial_rrb_map(clusters: usize, rrbs: usize) -> Vec<usize> {
    (0..rrbs).map(|n| n % clusters.max(1)).collect()
}

/// Alternating x/y optimization from several starts; returns the best run.
///
/// Starts: the round-robin RRB deal, and eRRH maps that are optimal when each
/// cluster is scored by its summed and by its best per-RRB utility.
pub fn alternate_assignment(utility: &UtilityTensor, capacity: usize) -> Result<AssignmentRun> {
    utility.validate()?;
    let (jn, ln, nn) = (utility.num_clusters(), utility.num_errhs(), utility.num_rrbs());
    if jn == 0 {
        return Err(Error::Empty("no clusters to assign".into()));
    }
    if nn < jn {
        return Err(Error::Infeasible(format!("{nn} RRBs cannot cover {jn} clusters")));
    }
    let round_robin = initial_rrb_map(jn, nn);
    let mut starts = vec![solve_x_given_y(utility, &round_robin, capacity)?];
    for score in [|v: &[f64]| v.iter().sum::<f64>(), |v: &[f64]| v.iter().copied().fold(0.0, f64::max)] {
        let weight = UtilityTensor::from_fn(jn, ln, 1, |j, l, _| score(&utility.u[j][l]));
        starts.push(best_errhs(&weight, capacity)?);
    }
    let mut best: Option<AssignmentRun> = None;
    for (k, x0) in starts.into_iter().enumerate() {
        let y0 = if k == 0 { round_robin.clone() } else { solve_y_given_x(utility, &x0)? };
        let run = alternate_from(utility, capacity, AllocationState { errh_of: x0, cluster_of: y0 })?;
        let better = best.as_ref().is_none_or(|b| {
            assignment_objective(utility, &run.state) > assignment_objective(utility, &b.state)
        });
        if better {
            best = Some(run);
        }
    }
    let run = best.expect("at least one start");
    run.state.check(ln, capacity)?;
    Ok(run)
}

/// eRRH map maximizing `weight[j][l][0]` under the capacity.
fn best_errhs(weight: &UtilityTensor, capacity: usize) -> Result<Vec<usize>> {
    let (jn, ln) = (weight.num_clusters(), weight.num_errhs());
    if jn > ln * capacity {
        return Err(Error::Infeasible(format!("{jn} clusters exceed {ln} eRRHs x {capacity} slots")));
    }
    let w: Vec<Vec<f64>> = (0..jn).map(|j| (0..ln * capacity).map(|s| weight.get(j, s / capacity, 0)).collect()).collect();
    Ok(max_weight_assignment(&w)?.into_iter().map(|s| s / capacity).collect())
}

/// First move of one cluster to another eRRH, swap of the eRRHs of two
/// clusters, or exchange of the whole cluster sets of two eRRHs that, with the RRB map re-optimized, strictly raises the objective.
fn improving_move(utility: &UtilityTensor, capacity: usize, state: &AllocationState) -> Result<Option<AllocationState>> {
    let (jn, ln) = (utility.num_clusters(), utility.num_errhs());
    let current = assignment_objective(utility, state);
    let mut load = vec![0usize; ln];
    state.errh_of.iter().for_each(|&l| load[l] += 1);
    let mut candidates = Vec::new();
    for j in 0..jn {
        for l in 0..ln {
            if l != state.errh_of[j] && load[l] < capacity {
                let mut x = state.errh_of.clone();
                x[j] = l;
                candidates.push(x);
            }
        }
        for k in j + 1..jn {
            if state.errh_of[j] != state.errh_of[k] {
                let mut x = state.errh_of.clone();
                x.swap(j, k);
                candidates.push(x);
            }
        }
    }
    for a in 0..ln {
        for b in a + 1..ln {
            let x = state.errh_of.iter().map(|&l| if l == a { b } else if l == b { a } else { l }).collect();
            candidates.push(x);
        }
    }
    for errh_of in candidates {
        let cluster_of = solve_y_given_x(utility, &errh_of)?;
        let next = AllocationState { errh_of, cluster_of };
        if assignment_objective(utility, &next) > current + 1e-12 * current.abs().max(1.0) {
            return Ok(Some(next));
        }
    }
    Ok(None)
}

fn alternate_from(utility: &UtilityTensor, capacity: usize, mut state: AllocationState) -> Result<AssignmentRun> {
    let mut objectives = vec![assignment_objective(utility, &state)];
    let mut converged = false;
    let mut iterations = 0;
    for t in 1..=MAX_ALTERNATIONS {
        iterations = t;
        let before = state.clone();
        state.cluster_of = solve_y_given_x(utility, &state.errh_of)?;
        objectives.push(assignment_objective(utility, &state));
        let errh_of = solve_x_given_y(utility, &state.cluster_of, capacity)?;
        // Keep the incumbent eRRHs unless the new ones are strictly better.
        let candidate = AllocationState { errh_of, cluster_of: state.cluster_of.clone() };
        if assignment_objective(utility, &candidate) > assignment_objective(utility, &state) {
            state = candidate;
        }
        objectives.push(assignment_objective(utility, &state));
        if state == before {
            match improving_move(utility, capacity, &state)? {
                Some(next) => {
                    state = next;
                    objectives.push(assignment_objective(utility, &state));
                }
                None => {
                    converged = true;
                    break;
                }
            }
        }
    }
    Ok(AssignmentRun { state, objectives, iterations, converged })
}
