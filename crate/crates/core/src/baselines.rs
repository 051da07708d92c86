//! Benchmark schemes run through the same machinery as RSMD.

use crate::assignment::AllocationState;
use crate::error::{Error, Result};
use crate::rsmd::{finish, run_clustered, stage_three, AllocationOutcome, ClusteringMode, MessageCounts, NetworkDrop, RunOptions};
use crate::schemes::SchemeKind;
use crate::topology::ChannelRealization;

pub fn run_pd_noma_opt(drop: &NetworkDrop, opts: &RunOptions) -> Result<AllocationOutcome> {
    run_clustered(SchemeKind::PdNoma, drop, ClusteringMode::Pca, opts)
}

pub fn run_tin_multicast(drop: &NetworkDrop, opts: &RunOptions) -> Result<AllocationOutcome> {
    run_clustered(SchemeKind::TinMulticast, drop, ClusteringMode::Pca, opts)
}

/// Contiguous RRB blocks for `links` active links, sizes differing by at most one.
pub fn split_rrbs(rrbs: usize, links: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (rrbs / links, rrbs % links);
    let mut next = 0;
    (0..links)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let block = (next..next + len).collect();
            next += len;
            block
        })
        .collect()
}

/// Greedy many-to-one matching of links to eRRHs by descending mean
/// first-hop gain, at most `capacity` links per eRRH.
pub fn greedy_errh_matching(ch: &ChannelRealization, links: &[usize], capacity: usize) -> Result<Vec<usize>> {
    let ln = ch.num_errhs();
    if links.len() > ln * capacity {
        return Err(Error::Infeasible(format!("{} links exceed {ln} eRRHs x {capacity}", links.len())));
    }
    let mut edges: Vec<(f64, usize, usize)> = Vec::with_capacity(links.len() * ln);
    for (k, &m) in links.iter().enumerate() {
        for l in 0..ln {
            let mean = ch.h[m][l].iter().sum::<f64>() / ch.num_rrbs() as f64;
            edges.push((mean, k, l));
        }
    }
    // Stable sort keeps index order on ties.
    edges.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut errh_of = vec![usize::MAX; links.len()];
    let mut load = vec![0usize; ln];
    for (_, k, l) in edges {
        if errh_of[k] == usize::MAX && load[l] < capacity {
            errh_of[k] = l;
            load[l] += 1;
        }
    }
    Ok(errh_of)
}

/// Fixed resource allocation with water-filling: each active link alone on
/// an even share of the RRBs.
pub fn run_fra_wf(drop: &NetworkDrop, opts: &RunOptions) -> Result<AllocationOutcome> {
    let (cfg, ch) = (&drop.config, drop.channels());
    let nn = ch.num_rrbs();
    let active: Vec<usize> = (0..cfg.num_d2d_links.min(nn)).collect();
    let capacity = 2 * cfg.max_clusters_per_errh;
    let errh_of = greedy_errh_matching(ch, &active, capacity)?;
    let rrbs_of = split_rrbs(nn, active.len());
    let members: Vec<Vec<usize>> = active.iter().map(|&m| vec![m]).collect();
    let mut cluster_of = vec![0; nn];
    for (k, block) in rrbs_of.iter().enumerate() {
        block.iter().for_each(|&n| cluster_of[n] = k);
    }
    let allocation = AllocationState { errh_of: errh_of.clone(), cluster_of };
    let cap3 = cfg.p_max_errh_w / capacity as f64;
    let s3 = stage_three(SchemeKind::FraWf.link_scheme(), &members, &errh_of, &rrbs_of, cap3, drop, opts)?;
    let counts = MessageCounts::new(0, s3.sweeps, nn);
    Ok(finish(SchemeKind::FraWf, members, None, 0.0, allocation, s3, counts, Vec::new()))
}
