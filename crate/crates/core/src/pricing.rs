//! RRB prices driven by bisection on the CBS uplink interference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::ClusterAllocationProblem;
use crate::rate::{uplink_interference, HopPowers};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingOptions {
    pub max_sweeps: usize,
    /// Relative band around the threshold that counts as met.
    pub band: f64,
    pub mu_low: f64,
    pub mu_high: f64,
    /// Bracket width, relative to its upper end, at which an RRB stops moving.
    pub width_rel: f64,
    /// Absolute floor on that width.
    pub width_abs: f64,
    /// Extra re-solves allowed to push violators below the band.
    pub max_repairs: usize,
}

impl Default for PricingOptions {
    fn default() -> Self {
        Self { max_sweeps: 100, band: 0.05, mu_low: 0.0, mu_high: 1e3, width_rel: 1e-3, width_abs: 1e-9, max_repairs: 40 }
    }
}

/// Per-RRB price and bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceState {
    pub price: Vec<f64>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl PriceState {
    pub fn new(num_rrbs: usize, opts: &PricingOptions) -> Self {
        Self { price: vec![opts.mu_low; num_rrbs], low: vec![opts.mu_low; num_rrbs], high: vec![opts.mu_high; num_rrbs] }
    }

    pub fn is_valid(&self) -> bool {
        self.price.len() == self.low.len()
            && self.price.len() == self.high.len()
            && (0..self.price.len()).all(|n| 0.0 <= self.low[n] && self.low[n] <= self.price[n] && self.price[n] <= self.high[n])
    }
}

/// Per-RRB CBS interference `max(I1, I2)` of the cluster holding it.
pub fn measure_interference(num_rrbs: usize, problems: &[ClusterAllocationProblem], powers: &[Vec<HopPowers>]) -> Vec<f64> {
    let mut out = vec![0.0; num_rrbs];
    for (prob, pw) in problems.iter().zip(powers) {
        for (r, p) in prob.rrbs.iter().zip(pw) {
            let (i1, i2) = uplink_interference(p, &r.cbs);
            out[r.rrb] += i1.max(i2);
        }
    }
    out
}

/// Prices span many decades, so brackets are split geometrically.
fn midpoint(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        (lo * hi).sqrt()
    } else {
        hi / 16.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Bisect,
    /// Doubling the upper end until the response drops below the band.
    Expand,
    /// Re-probing the low end of a collapsed bracket.
    Recheck,
    /// Stepping down from a stale low end, `2^k` percent at a time.
    Descend(i32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingOutcome {
    pub state: PriceState,
    /// Interference at the returned prices.
    pub interference: Vec<f64>,
    /// Number of probe evaluations.
    pub sweeps: usize,
    pub converged: bool,
    pub non_monotone_events: usize,
}

/// Drives every RRB's interference into `[(1 - band), (1 + band)] * threshold`
/// or below it at the lowest price, re-probing all RRBs after each update.
///
/// An RRB whose response jumps across the band settles just above the jump,
/// below the band, but only once the two sides were measured on consecutive
/// probes. A low end measured under older prices is probed again first.
///
/// When the sweep budget runs out, violating RRBs are moved to their upper
/// bracket (raising it geometrically as needed) until none exceeds the band; the outcome
/// is then flagged as not converged.
pub fn bisect_prices<P>(mut state: PriceState, mut probe: P, threshold: f64, opts: &PricingOptions) -> Result<PricingOutcome>
where
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !state.is_valid() {
        return Err(Error::Domain("price state violates low <= price <= high".into()));
    }
    if !(threshold > 0.0) || !(opts.band >= 0.0) {
        return Err(Error::Domain("threshold must be positive and band non-negative".into()));
    }
    let nn = state.price.len();
    let upper = threshold * (1.0 + opts.band);
    let lower = threshold * (1.0 - opts.band);
    let collapsed = |lo: f64, hi: f64| hi - lo <= opts.width_rel * hi + opts.width_abs;
    let mut sweeps = 0;
    let mut events = 0;
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut mode = vec![Mode::Bisect; nn];
    let mut high_seen = vec![false; nn];
    // Probe at which the low end was last seen above the band.
    let mut low_seen: Vec<Option<usize>> = vec![None; nn];
    // Collapsed below the band with both ends measured one probe apart.
    let mut verified = vec![false; nn];

    while sweeps < opts.max_sweeps {
        let interference = probe(&state.price)?;
        sweeps += 1;
        if interference.len() != nn {
            return Err(Error::Shape(format!("probe returned {} values for {nn} RRBs", interference.len())));
        }
        if let Some((mu0, i0)) = &last {
            for n in 0..nn {
                if state.price[n] > mu0[n] && interference[n] > i0[n] * (1.0 + opts.band) {
                    events += 1;
                    log::warn!(
                        "interference on RRB {n} rose from {:.3e} to {:.3e} W as its price rose to {:.4}",
                        i0[n],
                        interference[n],
                        state.price[n]
                    );
                }
            }
        }
        for n in 0..nn {
            let (lo, hi, i) = (state.low[n], state.high[n], interference[n]);
            if i > upper {
                verified[n] = false;
            } else if i < lower && collapsed(lo, hi) && low_seen[n].is_some_and(|k| sweeps - k <= 1) {
                verified[n] = true;
            }
        }
        let settled: Vec<bool> = (0..nn)
            .map(|n| {
                let (mu, i) = (state.price[n], interference[n]);
                (lower..=upper).contains(&i) || (i < lower && (mu <= opts.mu_low || verified[n]))
            })
            .collect();
        if settled.iter().all(|&s| s) {
            return Ok(PricingOutcome { state, interference, sweeps, converged: true, non_monotone_events: events });
        }
        last = Some((state.price.clone(), interference.clone()));
        for n in 0..nn {
            if settled[n] {
                continue;
            }
            let (mu, i) = (state.price[n], interference[n]);
            if i > upper {
                if mode[n] != Mode::Expand {
                    mode[n] = Mode::Bisect;
                }
                state.low[n] = mu;
                low_seen[n] = Some(sweeps);
                if collapsed(mu, state.high[n]) && high_seen[n] && mu < state.high[n] {
                    // The response jumps inside the collapsed bracket; take
                    // the side last seen below the band.
                    high_seen[n] = false;
                    state.price[n] = state.high[n];
                    continue;
                }
                if mode[n] == Mode::Expand || collapsed(mu, state.high[n]) {
                    // The root sits above the bracket (or moved there as
                    // other prices changed): probe upward geometrically.
                    mode[n] = Mode::Expand;
                    state.high[n] = 2.0 * mu + opts.width_abs;
                    state.price[n] = state.high[n];
                    continue;
                }
            } else {
                high_seen[n] = true;
                let next = match mode[n] {
                    Mode::Descend(d) => Some(d + 1),
                    // Collapsed with a low end measured under older prices:
                    // measure it again before calling this a jump.
                    _ if collapsed(state.low[n], state.high[n]) && mu > state.low[n] => {
                        mode[n] = Mode::Recheck;
                        state.high[n] = mu;
                        state.price[n] = state.low[n];
                        continue;
                    }
                    // The low end is below the band too: the root moved down.
                    Mode::Recheck => Some(0),
                    _ => None,
                };
                state.high[n] = mu;
                if let Some(d) = next {
                    mode[n] = Mode::Descend(d);
                    let step = (0.01 * mu).max(opts.width_abs) * 2f64.powi(d);
                    state.price[n] = (mu - step).max(opts.mu_low);
                    state.low[n] = state.price[n];
                    continue;
                }
                mode[n] = Mode::Bisect;
            }
            state.price[n] = midpoint(state.low[n], state.high[n]);
        }
    }

    let mut interference = probe(&state.price)?;
    sweeps += 1;
    for _ in 0..opts.max_repairs {
        let violators: Vec<usize> = (0..nn).filter(|&n| interference[n] > upper).collect();
        if violators.is_empty() {
            break;
        }
        for n in violators {
            if state.price[n] >= state.high[n] {
                // Brackets near the absolute floor would need dozens of
                // doublings to reach a useful price.
                state.high[n] = (4.0 * state.high[n]).max(1e-6 * opts.mu_high);
            }
            state.low[n] = state.price[n];
            state.price[n] = state.high[n];
        }
        interference = probe(&state.price)?;
        sweeps += 1;
    }
    Ok(PricingOutcome { state, interference, sweeps, converged: false, non_monotone_events: events })
}
