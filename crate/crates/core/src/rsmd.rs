//! The three-stage allocation: clustering, assignment, then power and price
//! refinement until the interference threshold holds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{alternate_assignment, brs_utility_tensor, build_cluster_problem, AllocationState};
use crate::clustering::{
    cluster_devices, distance_matrix, exhaustive_cluster, features_from_training, global_csi_features,
    DeviceClusterSet, FeatureMatrix,
};
use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::game::{
    caps_respected, solve_brs_with, utility_with, AuxiliaryState, BrsOptions, ClusterAllocationProblem, LinkScheme,
};
use crate::pricing::{bisect_prices, measure_interference, PriceState, PricingOptions};
use crate::rate::HopPowers;
use crate::schemes::SchemeKind;
use crate::topology::{generate_topology, sample_training_set, ChannelRealization, NetworkTopology};

/// One Monte Carlo drop: topology plus fading history, the last sample being
/// the realization used for allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDrop {
    pub config: NetworkConfig,
    pub seed: u64,
    pub topology: NetworkTopology,
    pub training: Vec<ChannelRealization>,
}

impl NetworkDrop {
    pub fn generate(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let topology = generate_topology(config, seed)?;
        let training = sample_training_set(&topology, config, seed);
        Ok(Self { config: config.clone(), seed, topology, training })
    }

    pub fn channels(&self) -> &ChannelRealization {
        self.training.last().expect("validated configs have training samples")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Per-cluster solves in the price loop.
    pub full: BrsOptions,
    /// Single-RRB solves behind the utility tensor.
    pub tensor: BrsOptions,
    pub pricing: PricingOptions,
    /// Start each price sweep's solves from the previous sweep's state.
    pub warm_start: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { full: BrsOptions::default(), tensor: BrsOptions::reduced(), pricing: PricingOptions::default(), warm_start: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClusteringMode {
    Pca,
    Exhaustive,
    GlobalCsi,
}

/// Fronthaul exchanges: utility reports for the tensor plus one price per RRB
/// per price sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub assignment: u64,
    pub pricing: u64,
    pub total: u64,
}

impl MessageCounts {
    pub fn new(assignment: u64, sweeps: usize, rrbs: usize) -> Self {
        let pricing = (sweeps * rrbs) as u64;
        Self { assignment, pricing, total: assignment + pricing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub scheme: SchemeKind,
    /// Link members of each served cluster (single links for FRA/WF-PA).
    pub members: Vec<Vec<usize>>,
    /// Pairing from Stage I; `None` for schemes without clustering.
    pub clusters: Option<DeviceClusterSet>,
    /// Largest intra-pair feature distance of the clustering.
    pub clustering_objective: f64,
    pub allocation: AllocationState,
    pub problems: Vec<ClusterAllocationProblem>,
    pub powers: Vec<Vec<HopPowers>>,
    pub aux: Vec<AuxiliaryState>,
    pub prices: Vec<f64>,
    pub sum_rate: f64,
    pub total_power: f64,
    pub per_rrb_interference: Vec<f64>,
    pub converged: bool,
    /// Price sweeps (cluster re-solves) in Stage III.
    pub iterations: usize,
    pub message_counts: MessageCounts,
    /// Assignment objective after every alternation half step.
    pub assignment_objectives: Vec<f64>,
}

impl AllocationOutcome {
    /// Sum of `min(R_U, R_D)` over every cluster and RRB.
    pub fn recompute_sum_rate(&self) -> f64 {
        let scheme = self.scheme.link_scheme();
        self.problems
            .iter()
            .zip(&self.powers)
            .flat_map(|(p, pw)| p.rrbs.iter().zip(pw).map(|(r, q)| scheme.e2e(q, &r.channels)))
            .sum()
    }
}

/// Stage I for the given mode.
pub fn stage_one(drop: &NetworkDrop, mode: ClusteringMode) -> Result<(DeviceClusterSet, f64)> {
    let cfg = &drop.config;
    let features: Vec<FeatureMatrix> = match mode {
        ClusteringMode::GlobalCsi => global_csi_features(drop.channels()),
        _ => features_from_training(&drop.training, cfg.pca_components)?,
    };
    let clusters = match mode {
        ClusteringMode::Exhaustive => exhaustive_cluster(&features, cfg.pca_weight)?,
        _ => cluster_devices(&features, cfg.pca_weight)?,
    };
    let objective = clusters.max_pair_distance(&distance_matrix(&features, cfg.pca_weight)?);
    Ok((clusters, objective))
}

pub(crate) struct StageThree {
    pub problems: Vec<ClusterAllocationProblem>,
    pub powers: Vec<Vec<HopPowers>>,
    pub aux: Vec<AuxiliaryState>,
    pub prices: Vec<f64>,
    pub interference: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Re-solves every cluster at the current prices and bisects the prices
/// until the interference threshold holds. `cap3` is the per-cluster eRRH budget.
pub(crate) fn stage_three(
    scheme: &dyn LinkScheme,
    members: &[Vec<usize>],
    errh_of: &[usize],
    rrbs_of: &[Vec<usize>],
    cap3: f64,
    drop: &NetworkDrop,
    opts: &RunOptions,
) -> Result<StageThree> {
    let (cfg, ch) = (&drop.config, drop.channels());
    let nn = ch.num_rrbs();
    let build = |prices: &[f64]| -> Vec<ClusterAllocationProblem> {
        (0..members.len())
            .map(|j| {
                let mut p = build_cluster_problem(&members[j], errh_of[j], &rrbs_of[j], prices, ch, cfg);
                p.caps[2] = cap3;
                p
            })
            .collect()
    };
    let mut state: Option<(Vec<ClusterAllocationProblem>, Vec<Vec<HopPowers>>, Vec<AuxiliaryState>)> = None;
    let probe = |prices: &[f64]| -> Result<Vec<f64>> {
        let problems = build(prices);
        let solved: Vec<(Vec<HopPowers>, AuxiliaryState)> = problems
            .par_iter()
            .enumerate()
            .map(|(j, p)| {
                if let Some((prev, pw, aux)) = &state {
                    // Cold solves depend only on the problem: reuse the last
                    // response while this cluster's prices are unchanged.
                    let same = prev[j].rrbs.iter().zip(&p.rrbs).all(|(a, b)| a.price == b.price);
                    if same && !opts.warm_start {
                        return Ok((pw[j].clone(), aux[j].clone()));
                    }
                }
                let warm = state.as_ref().filter(|_| opts.warm_start).map(|(_, pw, aux)| (pw[j].as_slice(), &aux[j]));
                solve_brs_with(scheme, p, &opts.full, warm).map(|o| (o.powers, o.aux))
            })
            .collect::<Result<_>>()?;
        let (powers, aux): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        let interference = measure_interference(nn, &problems, &powers);
        state = Some((problems, powers, aux));
        Ok(interference)
    };
    let pricing = bisect_prices(PriceState::new(nn, &opts.pricing), probe, cfg.interference_threshold_w, &opts.pricing)?;
    let (problems, powers, aux) = state.expect("the price loop probes at least once");
    Ok(StageThree {
        problems,
        powers,
        aux,
        prices: pricing.state.price,
        interference: pricing.interference,
        sweeps: pricing.sweeps,
        converged: pricing.converged,
    })
}

pub(crate) fn finish(
    scheme: SchemeKind,
    members: Vec<Vec<usize>>,
    clusters: Option<DeviceClusterSet>,
    clustering_objective: f64,
    allocation: AllocationState,
    s3: StageThree,
    message_counts: MessageCounts,
    assignment_objectives: Vec<f64>,
) -> AllocationOutcome {
    let mut out = AllocationOutcome {
        scheme,
        members,
        clusters,
        clustering_objective,
        allocation,
        total_power: s3.powers.iter().flatten().map(HopPowers::total).sum(),
        problems: s3.problems,
        powers: s3.powers,
        aux: s3.aux,
        prices: s3.prices,
        sum_rate: 0.0,
        per_rrb_interference: s3.interference,
        converged: s3.converged,
        iterations: s3.sweeps,
        message_counts,
        assignment_objectives,
    };
    out.sum_rate = out.recompute_sum_rate();
    out
}

/// Clustered pipeline shared by RSMD, its clustering variants, PD-NOMA/OPT
/// and TIN/Multicast.
pub fn run_clustered(kind: SchemeKind, drop: &NetworkDrop, mode: ClusteringMode, opts: &RunOptions) -> Result<AllocationOutcome> {
    if kind == SchemeKind::FraWf {
        return Err(Error::Config("FRA/WF-PA does not use device clusters".into()));
    }
    let (cfg, ch) = (&drop.config, drop.channels());
    let scheme = kind.link_scheme();
    let (clusters, objective) = stage_one(drop, mode)?;
    let members = clusters.clusters();

    let prices0 = vec![opts.pricing.mu_low; ch.num_rrbs()];
    let tensor = brs_utility_tensor(&members, &prices0, ch, cfg, scheme, &opts.tensor)?;
    let run = alternate_assignment(&tensor, cfg.max_clusters_per_errh)?;
    let allocation = run.state;
    let rrbs_of: Vec<Vec<usize>> = (0..members.len()).map(|j| allocation.rrbs_of(j)).collect();

    let s3 = stage_three(scheme, &members, &allocation.errh_of, &rrbs_of, cfg.errh_cap_per_cluster(), drop, opts)?;
    let reports = (members.len() * ch.num_errhs() * ch.num_rrbs()) as u64;
    let counts = MessageCounts::new(reports, s3.sweeps, ch.num_rrbs());
    Ok(finish(kind, members, Some(clusters), objective, allocation, s3, counts, run.objectives))
}

pub fn run_rsmd(drop: &NetworkDrop, opts: &RunOptions) -> Result<AllocationOutcome> {
    run_clustered(SchemeKind::Rsmd, drop, ClusteringMode::Pca, opts)
}

/// Runs any scheme on a drop.
pub fn run_scheme(kind: SchemeKind, drop: &NetworkDrop, opts: &RunOptions) -> Result<AllocationOutcome> {
    match kind {
        SchemeKind::Rsmd | SchemeKind::PdNoma | SchemeKind::TinMulticast => {
            run_clustered(kind, drop, ClusteringMode::Pca, opts)
        }
        SchemeKind::RsmdExhaustive => run_clustered(kind, drop, ClusteringMode::Exhaustive, opts),
        SchemeKind::RsmdGlobalCsi => run_clustered(kind, drop, ClusteringMode::GlobalCsi, opts),
        SchemeKind::FraWf => crate::baselines::run_fra_wf(drop, opts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCheck {
    pub cluster: usize,
    pub utility: f64,
    pub resolved_utility: f64,
    pub improvement: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackelbergReport {
    pub clusters: Vec<ClusterCheck>,
    /// RRBs above the interference band at the final prices.
    pub violating_rrbs: Vec<usize>,
    pub followers_ok: bool,
    pub leader_ok: bool,
}

impl StackelbergReport {
    pub fn pass(&self) -> bool {
        self.followers_ok && self.leader_ok
    }
}

/// Re-solves every cluster at the final prices, starting from its final
/// state, and checks the interference band.
pub fn check_stackelberg_stationarity(
    result: &AllocationOutcome,
    config: &NetworkConfig,
    opts: &RunOptions,
    tol: f64,
) -> Result<StackelbergReport> {
    let scheme = result.scheme.link_scheme();
    let clusters = result
        .problems
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let before = utility_with(scheme, p, &result.powers[j]);
            let out = solve_brs_with(scheme, p, &opts.full, Some((&result.powers[j], &result.aux[j])))?;
            let after = if caps_respected(p, &out.powers, 1e-9) { utility_with(scheme, p, &out.powers) } else { before };
            let improvement = after - before;
            Ok(ClusterCheck { cluster: j, utility: before, resolved_utility: after, improvement, pass: improvement <= tol })
        })
        .collect::<Result<Vec<_>>>()?;
    let limit = config.interference_threshold_w * (1.0 + opts.pricing.band);
    let violating_rrbs: Vec<usize> =
        (0..result.per_rrb_interference.len()).filter(|&n| result.per_rrb_interference[n] > limit).collect();
    Ok(StackelbergReport {
        followers_ok: clusters.iter().all(|c| c.pass),
        clusters,
        leader_ok: violating_rrbs.is_empty(),
        violating_rrbs,
    })
}
