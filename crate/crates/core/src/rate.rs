//! Two-hop rate-splitting rate expressions.
//!
//! All rates are in bits/s/Hz per RRB and carry the half-duplex factor 1/2.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::topology::ChannelRealization;

/// `0.5 * log2(1 + num / den)`.
#[inline]
pub fn half_log2_1p(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return 0.0;
    }
    0.5 * (num / den).ln_1p() / LN_2
}

/// Channels seen by one device cluster on one (eRRH, RRB).
///
/// Link 1 is the one whose CH-DU has the larger first-hop gain. A cluster
/// holding a single link has `single = true` and zero second-link gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterChannels {
    pub h1: f64,
    pub h2: f64,
    pub g1: f64,
    pub g2: f64,
    /// CUE power times the CUE-to-eRRH gain.
    pub i_up: f64,
    pub i_dn1: f64,
    pub i_dn2: f64,
    pub noise: f64,
    pub single: bool,
}

impl ClusterChannels {
    pub fn pair(h: [f64; 2], g: [f64; 2], i_up: f64, i_dn: [f64; 2], noise: f64) -> Self {
        Self { h1: h[0], h2: h[1], g1: g[0], g2: g[1], i_up, i_dn1: i_dn[0], i_dn2: i_dn[1], noise, single: false }
    }

    pub fn single(h: f64, g: f64, i_up: f64, i_dn: f64, noise: f64) -> Self {
        Self { h1: h, h2: 0.0, g1: g, g2: 0.0, i_up, i_dn1: i_dn, i_dn2: 0.0, noise, single: true }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.h1, self.h2, self.g1, self.g2, self.i_up, self.i_dn1, self.i_dn2, self.noise]
            .iter()
            .all(|x| x.is_finite());
        let second = if self.single { self.h2 == 0.0 && self.g2 == 0.0 } else { self.h2 > 0.0 && self.g2 > 0.0 };
        finite
            && self.h1 > 0.0
            && self.g1 > 0.0
            && self.h1 >= self.h2
            && second
            && self.i_up >= 0.0
            && self.i_dn1 >= 0.0
            && self.i_dn2 >= 0.0
            && self.noise > 0.0
    }

    /// Interference-plus-noise at the eRRH.
    #[inline]
    pub fn ic(&self) -> f64 {
        self.i_up + self.noise
    }

    #[inline]
    pub fn i1(&self) -> f64 {
        self.i_dn1 + self.noise
    }

    #[inline]
    pub fn i2(&self) -> f64 {
        self.i_dn2 + self.noise
    }

    /// CR-DU that decodes the common message at the lower rate (1 or 2).
    /// Ties go to 1.
    pub fn kappa(&self) -> usize {
        if self.single {
            return 1;
        }
        if self.g2 / self.i2() < self.g1 / self.i1() {
            2
        } else {
            1
        }
    }

    /// `(g_kappa, I_kappa)` for the common-message decoder.
    #[inline]
    pub fn common_decoder(&self) -> (f64, f64) {
        if self.kappa() == 1 {
            (self.g1, self.i1())
        } else {
            (self.g2, self.i2())
        }
    }
}

/// CBS-side squared gains used by the uplink interference terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CbsGains {
    pub du1: f64,
    pub du2: f64,
    pub errh: f64,
}

/// Builds the channels of a cluster `links` (one or two link indices) on
/// eRRH `l`, RRB `n`, relabelling so that link 1 has the stronger CH-DU.
/// Returns the channels, the CBS gains and the link order used.
pub fn cluster_channels(
    links: &[usize],
    l: usize,
    n: usize,
    ch: &ChannelRealization,
    config: &NetworkConfig,
) -> (ClusterChannels, CbsGains, [usize; 2]) {
    let pc = config.cue_power_w;
    let noise = config.noise_power_w;
    let i_up = pc * ch.h_cue_errh[l][n];
    let errh = ch.h_cbs_errh[l][n];
    match *links {
        [m] => (
            ClusterChannels::single(ch.h[m][l][n], ch.g[m][l][n], i_up, pc * ch.g_cue_crdu[m][n], noise),
            CbsGains { du1: ch.h_cbs_du[m][n], du2: 0.0, errh },
            [m, m],
        ),
        [a, b] => {
            let (s, w) = if ch.h[b][l][n] > ch.h[a][l][n] { (b, a) } else { (a, b) };
            (
                ClusterChannels::pair(
                    [ch.h[s][l][n], ch.h[w][l][n]],
                    [ch.g[s][l][n], ch.g[w][l][n]],
                    i_up,
                    [pc * ch.g_cue_crdu[s][n], pc * ch.g_cue_crdu[w][n]],
                    noise,
                ),
                CbsGains { du1: ch.h_cbs_du[s][n], du2: ch.h_cbs_du[w][n], errh },
                [s, w],
            )
        }
        _ => panic!("a device cluster holds one or two links, got {}", links.len()),
    }
}

/// Powers of one cluster on one RRB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HopPowers {
    pub p11: f64,
    pub p12: f64,
    pub p2: f64,
    pub qc: f64,
    pub q1: f64,
    pub q2: f64,
}

impl HopPowers {
    pub fn uniform(du_share: f64, errh_share: f64) -> Self {
        Self { p11: du_share, p12: du_share, p2: du_share, qc: errh_share, q1: errh_share, q2: errh_share }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.p11, self.p12, self.p2, self.qc, self.q1, self.q2]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { p11: a[0], p12: a[1], p2: a[2], qc: a[3], q1: a[4], q2: a[5] }
    }

    pub fn total(&self) -> f64 {
        self.p11 + self.p12 + self.p2 + self.qc + self.q1 + self.q2
    }

    /// Sums per budget group: strong CH-DU, weak CH-DU, eRRH.
    pub fn group_sums(&self) -> [f64; 3] {
        [self.p11 + self.p12, self.p2, self.qc + self.q1 + self.q2]
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::from_array(self.as_array().map(|x| x * k))
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|x| *x >= 0.0 && x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstHopRates {
    pub r11: f64,
    pub r2: f64,
    pub r12: f64,
    pub r_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondHopRates {
    pub r_c: f64,
    pub r_p1: f64,
    pub r_p2: f64,
    pub r_d: f64,
    pub kappa: usize,
}

/// Uplink with SIC order s11, s2, s12.
pub fn first_hop_rates(pw: &HopPowers, ch: &ClusterChannels) -> FirstHopRates {
    let ic = ch.ic();
    let a1 = pw.p11 * ch.h1;
    let b1 = pw.p12 * ch.h1 + pw.p2 * ch.h2 + ic;
    let a2 = pw.p2 * ch.h2;
    let b2 = pw.p12 * ch.h1 + ic;
    let r11 = half_log2_1p(a1, b1);
    let r2 = half_log2_1p(a2, b2);
    let r12 = half_log2_1p(pw.p12 * ch.h1, ic);
    FirstHopRates { r11, r2, r12, r_u: r11 + r2 + r12 }
}

/// Downlink: common message decoded at CR-DU kappa, then the private streams.
pub fn second_hop_rates(pw: &HopPowers, ch: &ClusterChannels) -> SecondHopRates {
    let kappa = ch.kappa();
    let (gk, ik) = ch.common_decoder();
    let r_c = half_log2_1p(pw.qc * gk, (pw.q1 + pw.q2) * gk + ik);
    let r_p1 = half_log2_1p(pw.q1 * ch.g1, pw.q2 * ch.g1 + ch.i1());
    let r_p2 = half_log2_1p(pw.q2 * ch.g2, pw.q1 * ch.g2 + ch.i2());
    SecondHopRates { r_c, r_p1, r_p2, r_d: r_c + r_p1 + r_p2, kappa }
}

pub fn e2e_rate(pw: &HopPowers, ch: &ClusterChannels) -> f64 {
    first_hop_rates(pw, ch).r_u.min(second_hop_rates(pw, ch).r_d)
}

/// End-to-end rate minus the RRB price times the total power.
pub fn cluster_utility_term(pw: &HopPowers, ch: &ClusterChannels, price: f64) -> f64 {
    e2e_rate(pw, ch) - price * pw.total()
}

/// `(I1, I2)`: CBS interference from the CH-DUs and from the eRRH.
pub fn uplink_interference(pw: &HopPowers, cbs: &CbsGains) -> (f64, f64) {
    (
        (pw.p11 + pw.p12) * cbs.du1 + pw.p2 * cbs.du2,
        (pw.qc + pw.q1 + pw.q2) * cbs.errh,
    )
}
