//! Random network drops and Rayleigh-faded channel realizations.
//!
//! Every entity (D2D link, eRRH, CUE) draws from its own ChaCha stream keyed
//! by the seed, so growing `M` appends links without disturbing the ones
//! already present. Sweeps over `M` therefore see common random numbers.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::error::{Error, Result};

const TOPO_LINK: u64 = 1;
const TOPO_ERRH: u64 = 2;
const TOPO_CUE: u64 = 3;
const TOPO_RRB_MAP: u64 = 4;
const CHAN_LINK: u64 = 11;
const CHAN_ERRH: u64 = 12;

fn stream(seed: u64, class: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((class << 40) | index as u64);
    rng
}

/// Mixes an index into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 3GPP-style path loss `131.1 + 42.8 log10(d)` in dB, `d` in kilometres.
pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) || !distance_km.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {distance_km}")));
    }
    Ok(131.1 + 42.8 * distance_km.log10())
}

/// Linear power attenuation for a distance in metres.
pub fn path_gain(distance_m: f64) -> f64 {
    let db = path_loss_db(distance_m / 1000.0).expect("distances are clamped to >= 1 m");
    10f64.powf(-db / 10.0)
}

fn poisson_distance<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    let d: f64 = Poisson::new(mean).expect("validated positive mean").sample(rng);
    d.max(1.0)
}

/// Node separations (metres) for one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    /// `[m][l]`, CH-DU of link `m` to eRRH `l`.
    pub errh_chdu: Vec<Vec<f64>>,
    /// `[m][l]`, eRRH `l` to CR-DU of link `m`.
    pub errh_crdu: Vec<Vec<f64>>,
    /// `[l]`
    pub errh_cbs: Vec<f64>,
    /// `[m]`
    pub chdu_cbs: Vec<f64>,
    /// `[c][l]`
    pub errh_cue: Vec<Vec<f64>>,
    /// `[c][m]`
    pub cue_crdu: Vec<Vec<f64>>,
    /// CUE index to the RRB it occupies.
    pub cue_rrb: Vec<usize>,
    /// Inverse of `cue_rrb`.
    pub rrb_cue: Vec<usize>,
}

impl NetworkTopology {
    pub fn num_links(&self) -> usize {
        self.errh_chdu.len()
    }

    pub fn num_errhs(&self) -> usize {
        self.errh_cbs.len()
    }

    pub fn num_rrbs(&self) -> usize {
        self.rrb_cue.len()
    }
}

/// Draws node distances from per-class Poisson laws (integer metres, at least 1).
pub fn generate_topology(config: &NetworkConfig, seed: u64) -> Result<NetworkTopology> {
    config.validate()?;
    let (m_links, l_errh, c_cues) = (config.num_d2d_links, config.num_errhs, config.num_cues());
    let dist = &config.distances;

    let mut errh_chdu = Vec::with_capacity(m_links);
    let mut errh_crdu = Vec::with_capacity(m_links);
    let mut chdu_cbs = Vec::with_capacity(m_links);
    let mut cue_crdu = vec![vec![0.0; m_links]; c_cues];
    for m in 0..m_links {
        let mut rng = stream(seed, TOPO_LINK, m);
        errh_chdu.push((0..l_errh).map(|_| poisson_distance(&mut rng, dist.errh_chdu_m)).collect());
        errh_crdu.push((0..l_errh).map(|_| poisson_distance(&mut rng, dist.errh_crdu_m)).collect());
        chdu_cbs.push(poisson_distance(&mut rng, dist.chdu_cbs_m));
        for row in cue_crdu.iter_mut() {
            row[m] = poisson_distance(&mut rng, dist.cue_crdu_m);
        }
    }
    let errh_cbs = (0..l_errh)
        .map(|l| poisson_distance(&mut stream(seed, TOPO_ERRH, l), dist.errh_cbs_m))
        .collect();
    let errh_cue = (0..c_cues)
        .map(|c| {
            let mut rng = stream(seed, TOPO_CUE, c);
            (0..l_errh).map(|_| poisson_distance(&mut rng, dist.errh_cue_m)).collect()
        })
        .collect();

    let mut cue_rrb: Vec<usize> = (0..c_cues).collect();
    cue_rrb.shuffle(&mut stream(seed, TOPO_RRB_MAP, 0));
    let mut rrb_cue = vec![0; c_cues];
    for (c, &n) in cue_rrb.iter().enumerate() {
        rrb_cue[n] = c;
    }

    Ok(NetworkTopology { errh_chdu, errh_crdu, errh_cbs, chdu_cbs, errh_cue, cue_crdu, cue_rrb, rrb_cue })
}

/// Squared channel gains for one fading realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// `[m][l][n]` CH-DU `m` to eRRH `l`.
    pub h: Vec<Vec<Vec<f64>>>,
    /// `[m][l][n]` eRRH `l` to CR-DU `m`.
    pub g: Vec<Vec<Vec<f64>>>,
    /// `[l][n]` CUE on RRB `n` to eRRH `l`.
    pub h_cue_errh: Vec<Vec<f64>>,
    /// `[m][n]` CUE on RRB `n` to CR-DU `m`.
    pub g_cue_crdu: Vec<Vec<f64>>,
    /// `[m][n]` CH-DU `m` to the CBS.
    pub h_cbs_du: Vec<Vec<f64>>,
    /// `[l][n]` eRRH `l` to the CBS.
    pub h_cbs_errh: Vec<Vec<f64>>,
}

impl ChannelRealization {
    pub fn num_links(&self) -> usize {
        self.h.len()
    }

    pub fn num_errhs(&self) -> usize {
        self.h_cbs_errh.len()
    }

    pub fn num_rrbs(&self) -> usize {
        self.h_cbs_errh.first().map_or(0, Vec::len)
    }

    /// FNV-1a over the bit patterns of every gain. Used to check that paired
    /// schemes saw the same realization.
    pub fn fingerprint(&self) -> u64 {
        let mut acc = 0xcbf2_9ce4_8422_2325u64;
        let mut eat = |row: &[f64]| {
            for x in row {
                for b in x.to_bits().to_le_bytes() {
                    acc ^= b as u64;
                    acc = acc.wrapping_mul(0x0100_0000_01b3);
                }
            }
        };
        for grid in [&self.h, &self.g] {
            grid.iter().flatten().for_each(|r| eat(r));
        }
        for table in [&self.h_cue_errh, &self.g_cue_crdu, &self.h_cbs_du, &self.h_cbs_errh] {
            table.iter().for_each(|r| eat(r));
        }
        acc
    }
}

fn faded<R: Rng>(rng: &mut R, distance_m: f64) -> f64 {
    let fade: f64 = Exp1.sample(rng);
    path_gain(distance_m) * fade.max(f64::MIN_POSITIVE)
}

/// Draws one fading realization on a fixed topology.
pub fn sample_channels(topology: &NetworkTopology, config: &NetworkConfig, seed: u64) -> ChannelRealization {
    let (m_links, l_errh, n_rrb) = (topology.num_links(), topology.num_errhs(), topology.num_rrbs());
    debug_assert_eq!(m_links, config.num_d2d_links);

    let mut h = Vec::with_capacity(m_links);
    let mut g = Vec::with_capacity(m_links);
    let mut g_cue_crdu = Vec::with_capacity(m_links);
    let mut h_cbs_du = Vec::with_capacity(m_links);
    for m in 0..m_links {
        let mut rng = stream(seed, CHAN_LINK, m);
        let hm: Vec<Vec<f64>> = (0..l_errh)
            .map(|l| (0..n_rrb).map(|_| faded(&mut rng, topology.errh_chdu[m][l])).collect())
            .collect();
        let gm: Vec<Vec<f64>> = (0..l_errh)
            .map(|l| (0..n_rrb).map(|_| faded(&mut rng, topology.errh_crdu[m][l])).collect())
            .collect();
        h.push(hm);
        g.push(gm);
        g_cue_crdu.push(
            (0..n_rrb)
                .map(|n| faded(&mut rng, topology.cue_crdu[topology.rrb_cue[n]][m]))
                .collect(),
        );
        h_cbs_du.push((0..n_rrb).map(|_| faded(&mut rng, topology.chdu_cbs[m])).collect());
    }
    let mut h_cue_errh = Vec::with_capacity(l_errh);
    let mut h_cbs_errh = Vec::with_capacity(l_errh);
    for l in 0..l_errh {
        let mut rng = stream(seed, CHAN_ERRH, l);
        h_cue_errh.push(
            (0..n_rrb)
                .map(|n| faded(&mut rng, topology.errh_cue[topology.rrb_cue[n]][l]))
                .collect(),
        );
        h_cbs_errh.push((0..n_rrb).map(|_| faded(&mut rng, topology.errh_cbs[l])).collect());
    }
    ChannelRealization { h, g, h_cue_errh, g_cue_crdu, h_cbs_du, h_cbs_errh }
}

/// `I` fading realizations on one topology. The last element is the
/// realization seen at allocation time; the others are its history.
pub fn sample_training_set(
    topology: &NetworkTopology,
    config: &NetworkConfig,
    seed: u64,
) -> Vec<ChannelRealization> {
    let count = config.training_samples;
    (0..count)
        .map(|k| {
            let s = if k + 1 == count { seed } else { derive_seed(seed, k as u64 + 1) };
            sample_channels(topology, config, s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(0.1).unwrap() - 88.3).abs() < 1e-12);
        assert!((path_loss_db(1.0).unwrap() - 131.1).abs() < 1e-12);
        // 131.1 + 42.8 * log10(0.2) = 131.1 - 42.8 * 0.698970 = 101.1841
        assert!((path_loss_db(0.2).unwrap() - 101.18).abs() < 0.01);
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-1.0).is_err());
    }

    #[test]
    fn topology_is_deterministic() {
        let cfg = NetworkConfig::default();
        assert_eq!(generate_topology(&cfg, 7).unwrap(), generate_topology(&cfg, 7).unwrap());
        assert_ne!(generate_topology(&cfg, 7).unwrap(), generate_topology(&cfg, 8).unwrap());
    }

    #[test]
    fn infeasible_config_rejected() {
        let cfg = NetworkConfig { num_d2d_links: 3, num_errhs: 1, max_clusters_per_errh: 1, ..Default::default() };
        assert!(matches!(generate_topology(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn poisson_distance_mean() {
        let mut rng = stream(3, 99, 0);
        let mean = (0..10_000).map(|_| poisson_distance(&mut rng, 100.0)).sum::<f64>() / 1e4;
        assert!((97.0..=103.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn fade_has_unit_mean() {
        let mut rng = stream(5, 99, 1);
        let mean = (0..100_000).map(|_| -> f64 { Exp1.sample(&mut rng) }).sum::<f64>() / 1e5;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
    }

    #[test]
    fn gain_at_100m_matches_path_loss() {
        let mut rng = stream(11, 99, 2);
        let mut twin = stream(11, 99, 2);
        let gain = faded(&mut rng, 100.0);
        let fade: f64 = Exp1.sample(&mut twin);
        let expected = 10f64.powf(-88.3 / 10.0) * fade;
        assert!((gain / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn channels_deterministic_and_positive() {
        let cfg = NetworkConfig { num_d2d_links: 6, num_rrbs: 8, ..Default::default() };
        let topo = generate_topology(&cfg, 1).unwrap();
        let a = sample_channels(&topo, &cfg, 42);
        let b = sample_channels(&topo, &cfg, 42);
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), sample_channels(&topo, &cfg, 43).fingerprint());
        let grids = a.h.iter().chain(a.g.iter()).flatten();
        let tables = [&a.h_cue_errh, &a.g_cue_crdu, &a.h_cbs_du, &a.h_cbs_errh];
        for row in grids.chain(tables.into_iter().flatten()) {
            assert!(row.iter().all(|&x| x > 0.0 && x.is_finite()));
        }
    }

    #[test]
    fn cue_map_is_bijection() {
        let topo = generate_topology(&NetworkConfig::default(), 3).unwrap();
        let mut seen = topo.cue_rrb.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..36).collect::<Vec<_>>());
    }

    #[test]
    fn growing_m_keeps_existing_links() {
        let small = NetworkConfig { num_d2d_links: 10, ..Default::default() };
        let large = NetworkConfig { num_d2d_links: 20, ..Default::default() };
        let ts = generate_topology(&small, 9).unwrap();
        let tl = generate_topology(&large, 9).unwrap();
        assert_eq!(ts.errh_chdu[..], tl.errh_chdu[..10]);
        let cs = sample_channels(&ts, &small, 4);
        let cl = sample_channels(&tl, &large, 4);
        assert_eq!(cs.h[..], cl.h[..10]);
        assert_eq!(cs.h_cue_errh, cl.h_cue_errh);
    }

    #[test]
    fn training_set_ends_with_current() {
        let cfg = NetworkConfig { num_d2d_links: 4, num_rrbs: 6, training_samples: 3, ..Default::default() };
        let topo = generate_topology(&cfg, 1).unwrap();
        let set = sample_training_set(&topo, &cfg, 77);
        assert_eq!(set.len(), 3);
        assert_eq!(set[2], sample_channels(&topo, &cfg, 77));
        assert_ne!(set[0], set[1]);
    }
}
