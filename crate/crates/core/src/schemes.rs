//! Benchmark transmission schemes on the same two-hop cluster model.

use serde::{Deserialize, Serialize};

use crate::game::{fp_coef, fp_term, rate, ratio_sq, water_level, LinkScheme, RateSplitting, RrbAux, Weights};
use crate::rate::{ClusterChannels, HopPowers};

/// Scheme tags used in results and experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "RSMD")]
    Rsmd,
    #[serde(rename = "PD-NOMA/OPT")]
    PdNoma,
    #[serde(rename = "TIN/Multicast")]
    TinMulticast,
    #[serde(rename = "FRA/WF-PA")]
    FraWf,
    #[serde(rename = "RSMD/exhaustive")]
    RsmdExhaustive,
    #[serde(rename = "RSMD/global-CSI")]
    RsmdGlobalCsi,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::Rsmd,
        SchemeKind::PdNoma,
        SchemeKind::TinMulticast,
        SchemeKind::FraWf,
        SchemeKind::RsmdExhaustive,
        SchemeKind::RsmdGlobalCsi,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::Rsmd => "RSMD",
            SchemeKind::PdNoma => "PD-NOMA/OPT",
            SchemeKind::TinMulticast => "TIN/Multicast",
            SchemeKind::FraWf => "FRA/WF-PA",
            SchemeKind::RsmdExhaustive => "RSMD/exhaustive",
            SchemeKind::RsmdGlobalCsi => "RSMD/global-CSI",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }

    /// Per-cluster rate model.
    pub fn link_scheme(self) -> &'static dyn LinkScheme {
        match self {
            SchemeKind::Rsmd | SchemeKind::RsmdExhaustive | SchemeKind::RsmdGlobalCsi => &RateSplitting,
            SchemeKind::PdNoma => &PdNoma,
            SchemeKind::TinMulticast => &TinMulticast,
            SchemeKind::FraWf => &SingleLink,
        }
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Weak/strong roles on the second hop. Returns
/// `(q_weak, q_strong, g_weak, g_strong, I_weak, I_strong)`; the strong
/// entries are zero for a singleton.
fn downlink_roles(pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64, f64, f64, f64, f64) {
    if ch.single {
        (pw.q1, 0.0, ch.g1, 0.0, ch.i1(), 1.0)
    } else if ch.kappa() == 1 {
        (pw.q1, pw.q2, ch.g1, ch.g2, ch.i1(), ch.i2())
    } else {
        (pw.q2, pw.q1, ch.g2, ch.g1, ch.i2(), ch.i1())
    }
}

/// Power-domain NOMA on both hops without message splitting.
///
/// Uplink: strong CH-DU decoded first against the weak one, weak decoded
/// interference-free. Downlink: the CR-DU with the smaller effective gain
/// decodes its message treating the other as noise; the stronger one
/// removes it by SIC first.
#[derive(Debug, Clone, Copy, Default)]
pub struct PdNoma;

impl PdNoma {
    fn place(ch: &ClusterChannels, weak: f64, strong: f64) -> (f64, f64) {
        if ch.single || ch.kappa() == 1 {
            (weak, strong)
        } else {
            (strong, weak)
        }
    }
}

impl LinkScheme for PdNoma {
    fn name(&self) -> &'static str {
        "PD-NOMA/OPT"
    }

    fn hop_rates(&self, pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64) {
        let ic = ch.ic();
        let up = rate(pw.p11 * ch.h1, pw.p2 * ch.h2 + ic) + rate(pw.p2 * ch.h2, ic);
        let (qw, qs, gw, gs, iw, is) = downlink_roles(pw, ch);
        let down = rate(qw * gw, qs * gw + iw) + rate(qs * gs, is);
        (up, down)
    }

    fn ratios(&self, pw: &HopPowers, ch: &ClusterChannels) -> ([f64; 2], [f64; 3]) {
        let (qw, qs, gw, _, iw, _) = downlink_roles(pw, ch);
        ([pw.p11 * ch.h1 / (pw.p2 * ch.h2 + ch.ic()), 0.0], [qw * gw / (qs * gw + iw), 0.0, 0.0])
    }

    fn quadratic(&self, pw: &HopPowers, ch: &ClusterChannels, z: &[f64; 2], x: &[f64; 3], w: Weights)
        -> ([f64; 2], [f64; 3]) {
        let (qw, qs, gw, _, iw, _) = downlink_roles(pw, ch);
        (
            [fp_coef(w.w1, z[0], pw.p11 * ch.h1, pw.p2 * ch.h2 + ch.ic()), 0.0],
            [fp_coef(w.w2, x[0], qw * gw, qs * gw + iw), 0.0, 0.0],
        )
    }

    fn powers(&self, ch: &ClusterChannels, aux: &RrbAux, w: Weights, cost: [f64; 3]) -> HopPowers {
        let a = aux.alpha[0] * aux.alpha[0];
        let b = aux.beta[0] * aux.beta[0];
        let p11 = ratio_sq(w.w1 * (1.0 + aux.z[0]) * a * ch.h1, cost[0] + a * ch.h1);
        let zero = HopPowers::default();
        let (_, _, gw, gs, _, is) = downlink_roles(&zero, ch);
        let qw = ratio_sq(w.w2 * (1.0 + aux.x[0]) * b * gw, cost[2] + b * gw);
        if ch.single {
            return HopPowers { p11, q1: qw, ..zero };
        }
        let p2 = water_level(w.w1, cost[1] + a * ch.h2, ch.ic() / ch.h2);
        let qs = water_level(w.w2, cost[2] + b * gw, is / gs);
        let (q1, q2) = Self::place(ch, qw, qs);
        HopPowers { p11, p12: 0.0, p2, qc: 0.0, q1, q2 }
    }

    fn surrogate(&self, pw: &HopPowers, ch: &ClusterChannels, aux: &RrbAux, w: Weights) -> f64 {
        let ic = ch.ic();
        let (qw, qs, gw, gs, iw, is) = downlink_roles(pw, ch);
        fp_term(aux.alpha[0], w.w1, aux.z[0], pw.p11 * ch.h1, pw.p2 * ch.h2 + ic)
            + w.w1 * (pw.p2 * ch.h2 / ic).ln_1p()
            + fp_term(aux.beta[0], w.w2, aux.x[0], qw * gw, qs * gw + iw)
            + if ch.single { 0.0 } else { w.w2 * (qs * gs / is).ln_1p() }
    }

    fn active(&self, ch: &ClusterChannels) -> [bool; 6] {
        let pair = !ch.single;
        [true, false, pair, false, true, pair]
    }
}

/// Uplink with interference treated as noise, downlink single multicast stream
/// at the rate of the weaker CR-DU (counted once).
#[derive(Debug, Clone, Copy, Default)]
pub struct TinMulticast;

impl LinkScheme for TinMulticast {
    fn name(&self) -> &'static str {
        "TIN/Multicast"
    }

    fn hop_rates(&self, pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64) {
        let ic = ch.ic();
        let up = rate(pw.p11 * ch.h1, pw.p2 * ch.h2 + ic) + rate(pw.p2 * ch.h2, pw.p11 * ch.h1 + ic);
        let (gk, ik) = ch.common_decoder();
        (up, rate(pw.qc * gk, ik))
    }

    fn ratios(&self, pw: &HopPowers, ch: &ClusterChannels) -> ([f64; 2], [f64; 3]) {
        let ic = ch.ic();
        ([pw.p11 * ch.h1 / (pw.p2 * ch.h2 + ic), pw.p2 * ch.h2 / (pw.p11 * ch.h1 + ic)], [0.0; 3])
    }

    fn quadratic(&self, pw: &HopPowers, ch: &ClusterChannels, z: &[f64; 2], _x: &[f64; 3], w: Weights)
        -> ([f64; 2], [f64; 3]) {
        let ic = ch.ic();
        (
            [
                fp_coef(w.w1, z[0], pw.p11 * ch.h1, pw.p2 * ch.h2 + ic),
                fp_coef(w.w1, z[1], pw.p2 * ch.h2, pw.p11 * ch.h1 + ic),
            ],
            [0.0; 3],
        )
    }

    fn powers(&self, ch: &ClusterChannels, aux: &RrbAux, w: Weights, cost: [f64; 3]) -> HopPowers {
        let [a1, a2] = aux.alpha.map(|a| a * a);
        let p11 = ratio_sq(w.w1 * (1.0 + aux.z[0]) * a1 * ch.h1, cost[0] + ch.h1 * (a1 + a2));
        let p2 = if ch.single {
            0.0
        } else {
            ratio_sq(w.w1 * (1.0 + aux.z[1]) * a2 * ch.h2, cost[1] + ch.h2 * (a1 + a2))
        };
        let (gk, ik) = ch.common_decoder();
        let qc = water_level(w.w2, cost[2], ik / gk);
        HopPowers { p11, p12: 0.0, p2, qc, q1: 0.0, q2: 0.0 }
    }

    fn surrogate(&self, pw: &HopPowers, ch: &ClusterChannels, aux: &RrbAux, w: Weights) -> f64 {
        let ic = ch.ic();
        let (gk, ik) = ch.common_decoder();
        fp_term(aux.alpha[0], w.w1, aux.z[0], pw.p11 * ch.h1, pw.p2 * ch.h2 + ic)
            + fp_term(aux.alpha[1], w.w1, aux.z[1], pw.p2 * ch.h2, pw.p11 * ch.h1 + ic)
            + w.w2 * (pw.qc * gk / ik).ln_1p()
    }

    fn active(&self, ch: &ClusterChannels) -> [bool; 6] {
        [true, false, !ch.single, true, false, false]
    }
}

/// One D2D link alone on its RRBs: water-filling on both hops.
/// Uses `p11` for the CH-DU and `q1` for the eRRH.
#[derive(Debug, Clone, Copy, Default)]
pub struct SingleLink;

impl LinkScheme for SingleLink {
    fn name(&self) -> &'static str {
        "FRA/WF-PA"
    }

    fn hop_rates(&self, pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64) {
        (rate(pw.p11 * ch.h1, ch.ic()), rate(pw.q1 * ch.g1, ch.i1()))
    }

    fn ratios(&self, _pw: &HopPowers, _ch: &ClusterChannels) -> ([f64; 2], [f64; 3]) {
        ([0.0; 2], [0.0; 3])
    }

    fn quadratic(&self, _pw: &HopPowers, _ch: &ClusterChannels, _z: &[f64; 2], _x: &[f64; 3], _w: Weights)
        -> ([f64; 2], [f64; 3]) {
        ([0.0; 2], [0.0; 3])
    }

    fn powers(&self, ch: &ClusterChannels, _aux: &RrbAux, w: Weights, cost: [f64; 3]) -> HopPowers {
        HopPowers {
            p11: water_level(w.w1, cost[0], ch.ic() / ch.h1),
            q1: water_level(w.w2, cost[2], ch.i1() / ch.g1),
            ..HopPowers::default()
        }
    }

    fn surrogate(&self, pw: &HopPowers, ch: &ClusterChannels, _aux: &RrbAux, w: Weights) -> f64 {
        w.w1 * (pw.p11 * ch.h1 / ch.ic()).ln_1p() + w.w2 * (pw.q1 * ch.g1 / ch.i1()).ln_1p()
    }

    fn active(&self, _ch: &ClusterChannels) -> [bool; 6] {
        [true, false, false, false, true, false]
    }
}
