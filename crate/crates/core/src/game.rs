//! Best-response power allocation of one device cluster.
//!
//! The cluster maximizes `sum_n min(R_U, R_D) - mu_n * power` over its RRBs
//! subject to per-group power caps. The min is handled by weighting the hops
//! with `1 - lambda` and `lambda` and bisecting `lambda` until they balance;
//! each weighted problem is solved by the quadratic transform, whose power
//! updates are closed form. The cap multipliers `sigma` are computed exactly
//! per group, so every iterate is feasible.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::{
    first_hop_rates, half_log2_1p, second_hop_rates, CbsGains, ClusterChannels, HopPowers,
};

/// Hop weights `w1 = (1 - lambda) / (2 ln 2)`, `w2 = lambda / (2 ln 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub w1: f64,
    pub w2: f64,
}

impl Weights {
    pub fn from_lambda(lambda: f64) -> Self {
        Self { w1: (1.0 - lambda) / (2.0 * LN_2), w2: lambda / (2.0 * LN_2) }
    }
}

/// Auxiliary variables of one RRB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrbAux {
    pub z: [f64; 2],
    pub x: [f64; 3],
    pub alpha: [f64; 2],
    pub beta: [f64; 3],
    pub lambda: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl Default for RrbAux {
    fn default() -> Self {
        Self { z: [0.0; 2], x: [0.0; 3], alpha: [0.0; 2], beta: [0.0; 3], lambda: 0.5, lambda_lo: 0.0, lambda_hi: 1.0 }
    }
}

impl RrbAux {
    pub fn weights(&self) -> Weights {
        Weights::from_lambda(self.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryState {
    pub rrbs: Vec<RrbAux>,
    /// Cap multipliers for the strong CH-DU, weak CH-DU and eRRH budgets.
    pub sigma: [f64; 3],
}

impl AuxiliaryState {
    pub fn new(num_rrbs: usize) -> Self {
        Self { rrbs: vec![RrbAux::default(); num_rrbs], sigma: [0.0; 3] }
    }
}

/// One RRB of a cluster's sub-problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrbProblem {
    pub rrb: usize,
    pub price: f64,
    pub channels: ClusterChannels,
    pub cbs: CbsGains,
    /// Link indices in channel order (strong CH-DU first); equal for a singleton.
    pub links: [usize; 2],
}

/// Power allocation problem of one cluster on its eRRH and RRB set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAllocationProblem {
    pub errh: usize,
    pub rrbs: Vec<RrbProblem>,
    /// Budgets for `p11 + p12`, `p2` and `qc + q1 + q2` summed over the RRBs.
    pub caps: [f64; 3],
}

impl ClusterAllocationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.rrbs.is_empty() {
            return Err(Error::Domain("cluster problem without RRBs".into()));
        }
        if self.rrbs.iter().any(|r| !(r.price >= 0.0) || !r.channels.is_valid()) {
            return Err(Error::Domain("negative price or invalid channels".into()));
        }
        if self.caps.iter().any(|c| !(*c > 0.0)) {
            return Err(Error::Domain("power caps must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn fp_term(coef: f64, omega: f64, ratio: f64, a: f64, b: f64) -> f64 {
    2.0 * coef * (omega * (1.0 + ratio) * a).sqrt() - coef * coef * (a + b)
}

#[inline]
pub(crate) fn fp_coef(omega: f64, ratio: f64, a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    (omega * (1.0 + ratio) * a).sqrt() / (a + b)
}

/// `num / den^2` with `0` for a vanishing numerator.
#[inline]
pub(crate) fn ratio_sq(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else {
        num / (den * den)
    }
}

/// `[omega / den - offset]^+`, infinite when `den` is zero.
#[inline]
pub(crate) fn water_level(omega: f64, den: f64, offset: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    (omega / den - offset).max(0.0)
}

/// A two-hop transmission scheme expressed through the quadratic transform.
///
/// Power vectors always use the [`HopPowers`] slots; schemes leave unused
/// slots at zero. Budget groups are `{p11, p12}`, `{p2}`, `{qc, q1, q2}`.
pub trait LinkScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// `(R_U, R_D)` in bits/s/Hz.
    fn hop_rates(&self, pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64);

    /// SINR auxiliaries `(Z, X)` at the given powers.
    fn ratios(&self, pw: &HopPowers, ch: &ClusterChannels) -> ([f64; 2], [f64; 3]);

    /// Quadratic-transform multipliers `(alpha, beta)` maximizing the surrogate.
    fn quadratic(&self, pw: &HopPowers, ch: &ClusterChannels, z: &[f64; 2], x: &[f64; 3], w: Weights)
        -> ([f64; 2], [f64; 3]);

    /// Stationary powers of the surrogate for per-group marginal costs `cost`.
    /// Entries may be infinite when a cost is zero.
    fn powers(&self, ch: &ClusterChannels, aux: &RrbAux, w: Weights, cost: [f64; 3]) -> HopPowers;

    /// Surrogate objective without price terms.
    fn surrogate(&self, pw: &HopPowers, ch: &ClusterChannels, aux: &RrbAux, w: Weights) -> f64;

    fn e2e(&self, pw: &HopPowers, ch: &ClusterChannels) -> f64 {
        let (u, d) = self.hop_rates(pw, ch);
        u.min(d)
    }

    /// Slots this scheme may use on the given channels.
    fn active(&self, ch: &ClusterChannels) -> [bool; 6];
}

/// Rate splitting on both hops.
#[derive(Debug, Clone, Copy, Default)]
pub struct RateSplitting;

impl LinkScheme for RateSplitting {
    fn name(&self) -> &'static str {
        "RSMD"
    }

    fn hop_rates(&self, pw: &HopPowers, ch: &ClusterChannels) -> (f64, f64) {
        (first_hop_rates(pw, ch).r_u, second_hop_rates(pw, ch).r_d)
    }

    fn ratios(&self, pw: &HopPowers, ch: &ClusterChannels) -> ([f64; 2], [f64; 3]) {
        let t = RsTerms::new(pw, ch);
        (
            [t.a[0] / t.b[0], t.a[1] / t.b[1]],
            [t.ah[0] / t.bh[0], t.ah[1] / t.bh[1], t.ah[2] / t.bh[2]],
        )
    }

    fn quadratic(&self, pw: &HopPowers, ch: &ClusterChannels, z: &[f64; 2], x: &[f64; 3], w: Weights)
        -> ([f64; 2], [f64; 3]) {
        let t = RsTerms::new(pw, ch);
        (
            [0, 1].map(|i| fp_coef(w.w1, z[i], t.a[i], t.b[i])),
            [0, 1, 2].map(|i| fp_coef(w.w2, x[i], t.ah[i], t.bh[i])),
        )
    }

    fn powers(&self, ch: &ClusterChannels, aux: &RrbAux, w: Weights, cost: [f64; 3]) -> HopPowers {
        let [a1, a2] = aux.alpha.map(|a| a * a);
        let [b1, b2, b3] = aux.beta.map(|b| b * b);
        let (gk, _) = ch.common_decoder();
        let p11 = ratio_sq(w.w1 * (1.0 + aux.z[0]) * a1 * ch.h1, cost[0] + a1 * ch.h1);
        let p12 = water_level(w.w1, cost[0] + ch.h1 * (a1 + a2), ch.ic() / ch.h1);
        let qc = ratio_sq(w.w2 * (1.0 + aux.x[0]) * b1 * gk, cost[2] + b1 * gk);
        if ch.single {
            let q1 = ratio_sq(w.w2 * (1.0 + aux.x[1]) * b2 * ch.g1, cost[2] + b1 * gk + b2 * ch.g1);
            return HopPowers { p11, p12, p2: 0.0, qc, q1, q2: 0.0 };
        }
        let p2 = ratio_sq(w.w1 * (1.0 + aux.z[1]) * a2 * ch.h2, cost[1] + ch.h2 * (a1 + a2));
        let shared = cost[2] + b1 * gk + b2 * ch.g1 + b3 * ch.g2;
        let q1 = ratio_sq(w.w2 * (1.0 + aux.x[1]) * b2 * ch.g1, shared);
        let q2 = ratio_sq(w.w2 * (1.0 + aux.x[2]) * b3 * ch.g2, shared);
        HopPowers { p11, p12, p2, qc, q1, q2 }
    }

    fn surrogate(&self, pw: &HopPowers, ch: &ClusterChannels, aux: &RrbAux, w: Weights) -> f64 {
        let t = RsTerms::new(pw, ch);
        let mut s = w.w1 * (pw.p12 * ch.h1 / ch.ic()).ln_1p();
        for i in 0..2 {
            s += fp_term(aux.alpha[i], w.w1, aux.z[i], t.a[i], t.b[i]);
        }
        for i in 0..3 {
            s += fp_term(aux.beta[i], w.w2, aux.x[i], t.ah[i], t.bh[i]);
        }
        s
    }

    fn active(&self, ch: &ClusterChannels) -> [bool; 6] {
        let pair = !ch.single;
        [true, true, pair, true, true, pair]
    }
}

/// Signal and interference-plus-noise terms of the rate-splitting SINRs.
struct RsTerms {
    a: [f64; 2],
    b: [f64; 2],
    ah: [f64; 3],
    bh: [f64; 3],
}

impl RsTerms {
    fn new(pw: &HopPowers, ch: &ClusterChannels) -> Self {
        let ic = ch.ic();
        let (gk, ik) = ch.common_decoder();
        Self {
            a: [pw.p11 * ch.h1, pw.p2 * ch.h2],
            b: [pw.p12 * ch.h1 + pw.p2 * ch.h2 + ic, pw.p12 * ch.h1 + ic],
            ah: [pw.qc * gk, pw.q1 * ch.g1, pw.q2 * ch.g2],
            bh: [(pw.q1 + pw.q2) * gk + ik, pw.q2 * ch.g1 + ch.i1(), pw.q1 * ch.g2 + ch.i2()],
        }
    }
}

const LAMBDA_REOPEN: f64 = 0.1;
const MAX_REOPENS: u32 = 2;

/// How the cap multipliers are obtained inside [`solve_brs_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaRule {
    /// Smallest multiplier per group that makes the closed-form powers meet the cap.
    ExactDual,
    /// Projected subgradient with diminishing step `step / t`; powers are clipped
    /// to their group cap so that zero marginal cost stays bounded.
    Subgradient { step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrsOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative change of the weighted objective that ends an inner pass.
    pub inner_tol: f64,
    /// Absolute payoff change that, with balanced hops, ends the solve.
    pub payoff_tol: f64,
    /// `|R_U - R_D|` below which an RRB counts as balanced.
    pub balance_tol: f64,
    /// Bracket width at which lambda stops moving.
    pub lambda_tol: f64,
    pub sigma_rule: SigmaRule,
    /// Scale the faster hop down to the slower one after the solve.
    pub trim: bool,
    /// Warm restarts from the best point while a solve is unconverged or
    /// still improving.
    pub restarts: usize,
}

impl Default for BrsOptions {
    fn default() -> Self {
        Self {
            max_outer: 200,
            max_inner: 40,
            inner_tol: 1e-10,
            payoff_tol: 1e-5,
            balance_tol: 1e-5,
            lambda_tol: 1e-6,
            sigma_rule: SigmaRule::ExactDual,
            trim: true,
            restarts: 10,
        }
    }
}

impl BrsOptions {
    /// Budget used for utility-tensor entries.
    pub fn reduced() -> Self {
        Self { max_outer: 50, inner_tol: 1e-6, payoff_tol: 1e-4, balance_tol: 1e-4, lambda_tol: 1e-3, restarts: 1, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrsOutcome {
    pub powers: Vec<HopPowers>,
    pub aux: AuxiliaryState,
    pub payoff: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Payoff after each outer iteration.
    pub trajectory: Vec<f64>,
}

/// Payoff of a cluster: e2e rates minus price and cap-multiplier charges.
pub fn payoff_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    sigma: &[f64; 3],
) -> f64 {
    let mut total = 0.0;
    let mut groups = [0.0; 3];
    for (r, pw) in problem.rrbs.iter().zip(powers) {
        total += scheme.e2e(pw, &r.channels) - r.price * pw.total();
        let g = pw.group_sums();
        for k in 0..3 {
            groups[k] += g[k];
        }
    }
    total - (0..3).map(|k| sigma[k] * groups[k]).sum::<f64>()
}

/// Rate-splitting payoff.
pub fn payoff(problem: &ClusterAllocationProblem, powers: &[HopPowers], aux: &AuxiliaryState) -> f64 {
    payoff_with(&RateSplitting, problem, powers, &aux.sigma)
}

/// Follower utility without multiplier charges: `sum e2e - mu * power`.
pub fn utility_with<S: LinkScheme + ?Sized>(scheme: &S, problem: &ClusterAllocationProblem, powers: &[HopPowers]) -> f64 {
    payoff_with(scheme, problem, powers, &[0.0; 3])
}

/// `sum_n (1 - lambda_n) R_U + lambda_n R_D - mu_n P_n` minus multiplier charges.
pub fn weighted_payoff_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    aux: &AuxiliaryState,
) -> f64 {
    let mut total = 0.0;
    for ((r, pw), a) in problem.rrbs.iter().zip(powers).zip(&aux.rrbs) {
        let (u, d) = scheme.hop_rates(pw, &r.channels);
        total += (1.0 - a.lambda) * u + a.lambda * d - r.price * pw.total();
    }
    total - sigma_charge(powers, &aux.sigma)
}

fn sigma_charge(powers: &[HopPowers], sigma: &[f64; 3]) -> f64 {
    let sums = group_totals(powers);
    (0..3).map(|k| sigma[k] * sums[k]).sum()
}

pub fn group_totals(powers: &[HopPowers]) -> [f64; 3] {
    let mut s = [0.0; 3];
    for pw in powers {
        let g = pw.group_sums();
        for k in 0..3 {
            s[k] += g[k];
        }
    }
    s
}

/// Quadratic-transform objective at fixed auxiliaries, prices and multipliers.
pub fn surrogate_objective_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    aux: &AuxiliaryState,
) -> f64 {
    let mut total = 0.0;
    for ((r, pw), a) in problem.rrbs.iter().zip(powers).zip(&aux.rrbs) {
        total += scheme.surrogate(pw, &r.channels, a, a.weights()) - r.price * pw.total();
    }
    total - sigma_charge(powers, &aux.sigma)
}

/// Rate-splitting quadratic-transform objective.
pub fn quadratic_transform_objective(
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    aux: &AuxiliaryState,
) -> f64 {
    surrogate_objective_with(&RateSplitting, problem, powers, aux)
}

/// `sum w (ln(1 + Z) - Z)` over every ratio auxiliary. Added to the surrogate
/// at optimal multipliers this recovers the weighted log-rates exactly.
pub fn ratio_offset(aux: &AuxiliaryState) -> f64 {
    aux.rrbs
        .iter()
        .map(|a| {
            let w = a.weights();
            a.z.iter().map(|z| w.w1 * (z.ln_1p() - z)).sum::<f64>()
                + a.x.iter().map(|x| w.w2 * (x.ln_1p() - x)).sum::<f64>()
        })
        .sum()
}

/// Rate-splitting closed-form powers at the current auxiliaries, charging
/// `mu_n + sigma_g` per watt.
pub fn update_powers_closed_form(problem: &ClusterAllocationProblem, aux: &AuxiliaryState) -> Result<Vec<HopPowers>> {
    problem
        .rrbs
        .iter()
        .zip(&aux.rrbs)
        .map(|(r, a)| {
            let cost = aux.sigma.map(|s| r.price + s);
            let pw = RateSplitting.powers(&r.channels, a, a.weights(), cost);
            if pw.is_valid() {
                Ok(pw)
            } else {
                Err(Error::DivisionGuard(format!(
                    "RRB {}: zero marginal cost {cost:?} with vanishing auxiliaries",
                    r.rrb
                )))
            }
        })
        .collect()
}

/// Quadratic-transform multipliers for the given powers, ratios and weights in `aux`.
pub fn update_aux_quadratic(
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    aux: &AuxiliaryState,
) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
    problem
        .rrbs
        .iter()
        .zip(powers)
        .zip(&aux.rrbs)
        .map(|((r, pw), a)| RateSplitting.quadratic(pw, &r.channels, &a.z, &a.x, a.weights()))
        .unzip()
}

/// SINR ratios at the given powers.
pub fn update_aux_ratio(problem: &ClusterAllocationProblem, powers: &[HopPowers]) -> (Vec<[f64; 2]>, Vec<[f64; 3]>) {
    problem.rrbs.iter().zip(powers).map(|(r, pw)| RateSplitting.ratios(pw, &r.channels)).unzip()
}

/// One projected subgradient step on the cap multipliers.
pub fn update_sigma(problem: &ClusterAllocationProblem, powers: &[HopPowers], sigma: [f64; 3], step: f64) -> [f64; 3] {
    let sums = group_totals(powers);
    [0, 1, 2].map(|k| (sigma[k] + step * (sums[k] - problem.caps[k])).max(0.0))
}

fn group_of(pw: &HopPowers, g: usize) -> f64 {
    pw.group_sums()[g]
}

/// Closed-form powers with the exact multiplier per budget group.
fn project_exact<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    aux: &AuxiliaryState,
) -> ([f64; 3], Vec<HopPowers>) {
    let mut sigma = [0.0; 3];
    for g in 0..3 {
        let sum_at = |s: f64| -> f64 {
            problem
                .rrbs
                .iter()
                .zip(&aux.rrbs)
                .map(|(r, a)| {
                    let mut cost = [r.price; 3];
                    cost[g] += s;
                    group_of(&scheme.powers(&r.channels, a, a.weights(), cost), g)
                })
                .sum()
        };
        let cap = problem.caps[g];
        let fits = |v: f64| v.is_finite() && v <= cap;
        if fits(sum_at(0.0)) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, aux.sigma[g].max(1e-6));
        let mut f_hi = sum_at(hi) - cap;
        while !(f_hi.is_finite() && f_hi <= 0.0) {
            lo = hi;
            hi *= 4.0;
            f_hi = sum_at(hi) - cap;
        }
        // Illinois false position on the decreasing excess, bisecting while
        // the low end is unbounded.
        let mut f_lo = sum_at(lo) - cap;
        let mut side = 0i8;
        let mut slack = -f_hi;
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi || slack <= 1e-12 * cap {
                break;
            }
            let mid = if f_lo.is_finite() {
                let m = hi - f_hi * (hi - lo) / (f_hi - f_lo);
                if m > lo && m < hi { m } else { 0.5 * (lo + hi) }
            } else {
                0.5 * (lo + hi)
            };
            let f_mid = sum_at(mid) - cap;
            if f_mid.is_finite() && f_mid <= 0.0 {
                hi = mid;
                f_hi = f_mid;
                slack = -f_mid;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            } else {
                lo = mid;
                f_lo = f_mid;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            }
        }
        sigma[g] = hi;
    }
    let powers = problem
        .rrbs
        .iter()
        .zip(&aux.rrbs)
        .map(|(r, a)| scheme.powers(&r.channels, a, a.weights(), sigma.map(|s| r.price + s)))
        .collect();
    (sigma, powers)
}

fn clipped_powers<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    aux: &AuxiliaryState,
) -> Vec<HopPowers> {
    let [c0, c1, c2] = problem.caps;
    problem
        .rrbs
        .iter()
        .zip(&aux.rrbs)
        .map(|(r, a)| {
            let p = scheme.powers(&r.channels, a, a.weights(), aux.sigma.map(|s| r.price + s));
            let caps = [c0, c0, c1, c2, c2, c2];
            HopPowers::from_array(
                std::array::from_fn(|k| if p.as_array()[k].is_nan() { 0.0 } else { p.as_array()[k].min(caps[k]) }),
            )
        })
        .collect()
}

fn refresh_aux<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    aux: &mut AuxiliaryState,
) {
    for ((r, pw), a) in problem.rrbs.iter().zip(powers).zip(aux.rrbs.iter_mut()) {
        let (z, x) = scheme.ratios(pw, &r.channels);
        a.z = z;
        a.x = x;
        let (alpha, beta) = scheme.quadratic(pw, &r.channels, &z, &x, a.weights());
        a.alpha = alpha;
        a.beta = beta;
    }
}

/// Uniform feasible start: each active slot gets `cap / (3 |N_j|)` of its group.
pub fn initial_powers<S: LinkScheme + ?Sized>(scheme: &S, problem: &ClusterAllocationProblem) -> Vec<HopPowers> {
    let n = problem.rrbs.len() as f64;
    let [c0, c1, c2] = problem.caps.map(|c| c / (3.0 * n));
    problem
        .rrbs
        .iter()
        .map(|r| {
            let act = scheme.active(&r.channels);
            let base = [c0, c0, c1, c2, c2, c2];
            HopPowers::from_array(std::array::from_fn(|k| if act[k] { base[k] } else { 0.0 }))
        })
        .collect()
}

/// One inner pass: powers, then ratios, then multipliers, at fixed lambda.
fn inner_step<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    aux: &mut AuxiliaryState,
    rule: SigmaRule,
) -> Vec<HopPowers> {
    let powers = match rule {
        SigmaRule::ExactDual => {
            let (sigma, powers) = project_exact(scheme, problem, aux);
            aux.sigma = sigma;
            powers
        }
        SigmaRule::Subgradient { .. } => clipped_powers(scheme, problem, aux),
    };
    refresh_aux(scheme, problem, &powers, aux);
    powers
}

/// Best response of one cluster under the rate-splitting model.
pub fn solve_brs(problem: &ClusterAllocationProblem) -> Result<BrsOutcome> {
    solve_brs_with(&RateSplitting, problem, &BrsOptions::default(), None)
}

/// Best response under `scheme`, optionally warm-started from a previous
/// allocation (powers plus auxiliaries, including lambda brackets and sigma).
///
/// The response never has a lower utility than a feasible warm start: a
/// solve is kept only if it beats the incumbent by more than `payoff_tol`.
/// Restarts from the incumbent, with fresh brackets around its lambdas, run
/// until one fails to improve it.
pub fn solve_brs_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    opts: &BrsOptions,
    warm: Option<(&[HopPowers], &AuxiliaryState)>,
) -> Result<BrsOutcome> {
    problem.validate()?;
    let utility = |pw: &[HopPowers]| utility_with(scheme, problem, pw);
    let mut incumbent = match warm {
        Some((p, a)) if p.len() == problem.rrbs.len() && a.rrbs.len() == problem.rrbs.len() => {
            Some(Run { powers: p.to_vec(), aux: a.clone(), converged: true, iterations: 0, trajectory: Vec::new() })
                .filter(|r| caps_respected(problem, &r.powers, CAP_SLACK))
        }
        _ => None,
    };
    let mut iterations = 0;
    let mut trajectory = Vec::new();
    for _ in 0..=opts.restarts {
        let (powers, mut aux) = match &incumbent {
            Some(r) => (r.powers.clone(), reopened(&r.aux)),
            None => match warm {
                Some((p, a)) if p.len() == problem.rrbs.len() && a.rrbs.len() == problem.rrbs.len() => {
                    (p.to_vec(), reopened(a))
                }
                _ => (initial_powers(scheme, problem), AuxiliaryState::new(problem.rrbs.len())),
            },
        };
        refresh_aux(scheme, problem, &powers, &mut aux);
        let mut run = outer_loop(scheme, problem, opts, aux);
        iterations += run.iterations;
        trajectory.append(&mut run.trajectory);
        for (r, pw) in problem.rrbs.iter().zip(run.powers.iter_mut()).filter(|_| opts.trim) {
            *pw = trim_surplus_hop(scheme, pw, &r.channels);
        }
        let better = match &incumbent {
            None => true,
            // An unconverged incumbent gives way to any converged solve.
            Some(inc) => {
                (run.converged && !inc.converged)
                    || (run.converged >= inc.converged && utility(&run.powers) > utility(&inc.powers) + opts.payoff_tol)
            }
        };
        if !better {
            break;
        }
        incumbent = Some(run);
    }

    let Run { powers, aux, converged, .. } = incumbent.expect("the first solve always becomes the incumbent");
    let payoff = payoff_with(scheme, problem, &powers, &aux.sigma);
    Ok(BrsOutcome { powers, aux, payoff, converged, iterations, trajectory })
}

/// Relative cap overshoot tolerated in returned powers.
const CAP_SLACK: f64 = 1e-9;

struct Run {
    powers: Vec<HopPowers>,
    aux: AuxiliaryState,
    converged: bool,
    iterations: usize,
    trajectory: Vec<f64>,
}

fn reopened(aux: &AuxiliaryState) -> AuxiliaryState {
    let mut a = aux.clone();
    for r in &mut a.rrbs {
        r.lambda_lo = (r.lambda - 0.05).max(0.0);
        r.lambda_hi = (r.lambda + 0.05).min(1.0);
    }
    a
}

/// Outer lambda/sigma iterations from `aux`, whose ratios match the start.
fn outer_loop<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    opts: &BrsOptions,
    mut aux: AuxiliaryState,
) -> Run {
    let mut powers = Vec::new();
    let mut trajectory = Vec::new();
    let mut best: Option<(f64, Vec<HopPowers>, AuxiliaryState)> = None;
    let mut prev_payoff = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut reopens = vec![0u32; problem.rrbs.len()];

    for t in 1..=opts.max_outer {
        iterations = t;
        let mut prev = f64::NEG_INFINITY;
        // A pass budget that runs out means the fixed point is still creeping
        // upward, which a small payoff change alone does not reveal.
        let mut settled = false;
        for _ in 0..opts.max_inner {
            powers = inner_step(scheme, problem, &mut aux, opts.sigma_rule);
            let obj = weighted_payoff_with(scheme, problem, &powers, &aux);
            if (obj - prev).abs() <= opts.inner_tol * obj.abs().max(1.0) {
                settled = true;
                break;
            }
            prev = obj;
        }
        if let SigmaRule::Subgradient { step } = opts.sigma_rule {
            let sums = group_totals(&powers);
            for k in 0..3 {
                aux.sigma[k] = (aux.sigma[k] + step / t as f64 * (sums[k] - problem.caps[k])).max(0.0);
            }
        }

        let value = payoff_with(scheme, problem, &powers, &aux.sigma);
        trajectory.push(value);
        let utility = utility_with(scheme, problem, &powers);
        if caps_respected(problem, &powers, 0.01) && best.as_ref().is_none_or(|(b, _, _)| utility > *b) {
            best = Some((utility, powers.clone(), aux.clone()));
        }

        let mut balanced = true;
        for (i, (r, (pw, a))) in problem.rrbs.iter().zip(powers.iter().zip(aux.rrbs.iter_mut())).enumerate() {
            let (u, d) = scheme.hop_rates(pw, &r.channels);
            let gap = u - d;
            if gap.abs() <= opts.balance_tol {
                continue;
            }
            if a.lambda_hi - a.lambda_lo <= opts.lambda_tol {
                // Against the edge of [0, 1] one hop is short even with all
                // weight on it; trimming the other hop settles the rest.
                let pinned = (gap > 0.0 && a.lambda_hi >= 1.0) || (gap < 0.0 && a.lambda_lo <= 0.0);
                if pinned || reopens[i] >= MAX_REOPENS {
                    // Rate jumps across the root; trimming settles the rest.
                    continue;
                }
                // The root moved out of the bracket while other RRBs or sigma
                // shifted; reopen on the side the gap points to.
                reopens[i] += 1;
                if gap > 0.0 {
                    a.lambda_hi = (a.lambda + LAMBDA_REOPEN).min(1.0);
                } else {
                    a.lambda_lo = (a.lambda - LAMBDA_REOPEN).max(0.0);
                }
            }
            balanced = false;
            // A faster first hop shifts weight to the second hop.
            if gap > 0.0 {
                a.lambda_lo = a.lambda;
            } else {
                a.lambda_hi = a.lambda;
            }
            a.lambda = 0.5 * (a.lambda_lo + a.lambda_hi);
        }
        if balanced && settled && (value - prev_payoff).abs() <= opts.payoff_tol {
            converged = true;
            break;
        }
        prev_payoff = value;
    }

    if !(converged && caps_respected(problem, &powers, 0.01)) {
        converged = false;
        if let Some((_, p, a)) = best {
            powers = p;
            aux = a;
        }
    }
    Run { powers, aux, converged, iterations, trajectory }
}

/// Scales down the faster hop until both hops carry the same rate.
///
/// The end-to-end rate is unchanged and the power spent only drops.
pub fn trim_surplus_hop<S: LinkScheme + ?Sized>(scheme: &S, powers: &HopPowers, ch: &ClusterChannels) -> HopPowers {
    let (u, d) = scheme.hop_rates(powers, ch);
    if (u - d).abs() <= 1e-12 * u.max(d).max(1.0) {
        return *powers;
    }
    let first = u > d;
    let at = |t: f64| {
        let mut p = *powers;
        if first {
            p.p11 *= t;
            p.p12 *= t;
            p.p2 *= t;
        } else {
            p.qc *= t;
            p.q1 *= t;
            p.q2 *= t;
        }
        p
    };
    let target = u.min(d);
    // Smallest scale whose faster hop still reaches the slower hop's rate.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let (u, d) = scheme.hop_rates(&at(mid), ch);
        let r = if first { u } else { d };
        if r >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

/// Group sums within `(1 + slack)` of the caps.
pub fn caps_respected(problem: &ClusterAllocationProblem, powers: &[HopPowers], slack: f64) -> bool {
    let sums = group_totals(powers);
    (0..3).all(|k| sums[k] <= problem.caps[k] * (1.0 + slack))
}

/// Hop-balancing weight of RRB `n` by bisection down to bracket width `tol`.
///
/// Starts from `powers`; returns 0.5 when they are already balanced or zero.
/// At each candidate the RRB's weighted problem is re-solved with the other
/// RRBs held at their current powers.
pub fn balance_lambda(problem: &ClusterAllocationProblem, powers: &[HopPowers], n: usize, tol: f64) -> f64 {
    balance_lambda_with(&RateSplitting, problem, powers, n, tol)
}

pub fn balance_lambda_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    powers: &[HopPowers],
    n: usize,
    tol: f64,
) -> f64 {
    const BALANCED: f64 = 1e-9;
    let rrb = &problem.rrbs[n];
    let (u, d) = scheme.hop_rates(&powers[n], &rrb.channels);
    if powers[n].total() == 0.0 || (u - d).abs() <= BALANCED {
        return 0.5;
    }
    let used = group_totals(powers);
    let own = powers[n].group_sums();
    let caps = [0, 1, 2].map(|k| (problem.caps[k] - (used[k] - own[k])).max(1e-300));
    let sub = ClusterAllocationProblem { errh: problem.errh, rrbs: vec![*rrb], caps };
    let mut aux = AuxiliaryState::new(1);
    let mut pw = vec![powers[n]];
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut lambda = 0.5;
    while hi - lo > tol {
        aux.rrbs[0].lambda = lambda;
        refresh_aux(scheme, &sub, &pw, &mut aux);
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..200 {
            pw = inner_step(scheme, &sub, &mut aux, SigmaRule::ExactDual);
            let obj = weighted_payoff_with(scheme, &sub, &pw, &aux);
            if (obj - prev).abs() <= 1e-12 * obj.abs().max(1.0) {
                break;
            }
            prev = obj;
        }
        let (u, d) = scheme.hop_rates(&pw[0], &rrb.channels);
        if (u - d).abs() <= BALANCED {
            break;
        }
        if u > d {
            lo = lambda;
        } else {
            hi = lambda;
        }
        lambda = 0.5 * (lo + hi);
    }
    lambda
}

/// Weighted objective after each block update at fixed lambda and sigma.
/// Marginal costs `mu_n + sigma_g` must be positive.
pub fn ascent_trajectory<S: LinkScheme + ?Sized>(
    scheme: &S,
    problem: &ClusterAllocationProblem,
    lambdas: &[f64],
    sigma: [f64; 3],
    iterations: usize,
) -> Vec<f64> {
    let mut aux = AuxiliaryState::new(problem.rrbs.len());
    aux.sigma = sigma;
    for (a, &l) in aux.rrbs.iter_mut().zip(lambdas) {
        a.lambda = l;
    }
    let mut powers = initial_powers(scheme, problem);
    refresh_aux(scheme, problem, &powers, &mut aux);
    let mut out = vec![weighted_payoff_with(scheme, problem, &powers, &aux)];
    for _ in 0..iterations {
        powers = problem
            .rrbs
            .iter()
            .zip(&aux.rrbs)
            .map(|(r, a)| scheme.powers(&r.channels, a, a.weights(), sigma.map(|s| r.price + s)))
            .collect();
        refresh_aux(scheme, problem, &powers, &mut aux);
        out.push(weighted_payoff_with(scheme, problem, &powers, &aux));
    }
    out
}

/// Sum over clusters and RRBs of the per-RRB payoff shares. Clusters occupy
/// disjoint RRBs, so a unilateral change moves this by exactly the deviator's
/// payoff change.
pub fn potential_value_with<S: LinkScheme + ?Sized>(
    scheme: &S,
    problems: &[ClusterAllocationProblem],
    powers: &[Vec<HopPowers>],
    sigmas: &[[f64; 3]],
) -> f64 {
    let mut w = 0.0;
    for ((prob, pws), sigma) in problems.iter().zip(powers).zip(sigmas) {
        for (r, pw) in prob.rrbs.iter().zip(pws) {
            let g = pw.group_sums();
            w += scheme.e2e(pw, &r.channels) - r.price * pw.total() - (0..3).map(|k| sigma[k] * g[k]).sum::<f64>();
        }
    }
    w
}

pub fn potential_value(problems: &[ClusterAllocationProblem], powers: &[Vec<HopPowers>], sigmas: &[[f64; 3]]) -> f64 {
    potential_value_with(&RateSplitting, problems, powers, sigmas)
}

/// Half-log helper shared by the baseline schemes.
#[inline]
pub(crate) fn rate(num: f64, den: f64) -> f64 {
    half_log2_1p(num, den)
}
