//! Acceptance criteria. Each prints one PASS/FAIL line; the process fails if
//! any criterion fails. Pass criterion numbers to run a subset:
//! `cargo test -p rsmd-core --test acceptance -- 1 4 8`.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rsmd_core::assignment::{alternate_assignment, build_cluster_problem, UtilityTensor};
use rsmd_core::clustering::{cluster_devices, features_from_training, is_pareto_efficient};
use rsmd_core::game::{
    payoff_with, potential_value, quadratic_transform_objective, ratio_offset, solve_brs_with, weighted_payoff_with,
    AuxiliaryState, BrsOptions, ClusterAllocationProblem, LinkScheme, RateSplitting, RrbAux, RrbProblem, Weights,
};
use rsmd_core::harness::gain_pct;
use rsmd_core::hungarian::{assignment_value, brute_force_max, max_weight_assignment};
use rsmd_core::rate::{first_hop_rates, CbsGains};
use rsmd_core::rsmd::check_stackelberg_stationarity;
use rsmd_core::{run_scheme, AllocationOutcome, ClusterChannels, HopPowers, NetworkConfig, NetworkDrop, RunOptions, SchemeKind};

const POTENTIAL_TOL: f64 = 1e-10;
const EQUIVALENCE_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-4;
const TELESCOPE_TOL: f64 = 1e-10;
const BALANCE_TOL: f64 = 1e-3;
const CLUSTERING_RATIO: f64 = 0.88;
const MONOTONE_SLACK: f64 = 1e-12;
const PRICE_BAND: f64 = 0.05;
const STATIONARITY_TOL: f64 = 1e-4;
const STATIONARITY_SHARE: f64 = 0.95;
const TIN_BAND: (f64, f64) = (7.0, 25.0);
const FRA_BAND: (f64, f64) = (12.0, 32.0);
const PCV_SPREAD: f64 = 0.05;
const FRA_FLAT: f64 = 0.03;
const DROPS: usize = 100;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn drop_for(cfg: &NetworkConfig, seed: u64) -> NetworkDrop {
    NetworkDrop::generate(cfg, seed).expect("valid drop")
}

fn rates(kind: SchemeKind, cfg: &NetworkConfig, seeds: std::ops::Range<u64>) -> Vec<f64> {
    let opts = RunOptions::default();
    seeds.into_par_iter().map(|s| run_scheme(kind, &drop_for(cfg, s), &opts).expect("scheme runs").sum_rate).collect()
}

fn random_channels(r: &mut ChaCha8Rng) -> ClusterChannels {
    let (a, b): (f64, f64) = (r.random_range(0.05..20.0), r.random_range(0.05..20.0));
    ClusterChannels::pair(
        [a.max(b), a.min(b)],
        [r.random_range(0.05..20.0), r.random_range(0.05..20.0)],
        r.random_range(0.0..2.0),
        [r.random_range(0.0..2.0), r.random_range(0.0..2.0)],
        r.random_range(0.05..2.0),
    )
}

fn random_powers(r: &mut ChaCha8Rng) -> HopPowers {
    HopPowers::from_array(std::array::from_fn(|_| r.random_range(0.0..2.0)))
}

fn random_problem(r: &mut ChaCha8Rng, first_rrb: usize, rrbs: usize) -> ClusterAllocationProblem {
    ClusterAllocationProblem {
        errh: 0,
        rrbs: (0..rrbs)
            .map(|k| RrbProblem {
                rrb: first_rrb + k,
                price: r.random_range(0.0..0.5),
                channels: random_channels(r),
                cbs: CbsGains::default(),
                links: [0, 1],
            })
            .collect(),
        caps: std::array::from_fn(|_| r.random_range(0.2..3.0)),
    }
}

/// Auxiliaries at their optimum for the given powers and lambdas.
fn optimal_aux(problem: &ClusterAllocationProblem, powers: &[HopPowers], lambdas: &[f64], sigma: [f64; 3]) -> AuxiliaryState {
    let rrbs = problem
        .rrbs
        .iter()
        .zip(powers)
        .zip(lambdas)
        .map(|((r, pw), &lambda)| {
            let w = Weights::from_lambda(lambda);
            let (z, x) = RateSplitting.ratios(pw, &r.channels);
            let (alpha, beta) = RateSplitting.quadratic(pw, &r.channels, &z, &x, w);
            RrbAux { z, x, alpha, beta, lambda, ..RrbAux::default() }
        })
        .collect();
    AuxiliaryState { rrbs, sigma }
}

fn c1_potential() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(2..6);
        let problems: Vec<_> = (0..k)
            .map(|j| {
                let n = r.random_range(1..4);
                random_problem(&mut r, 4 * j, n)
            })
            .collect();
        let sigmas: Vec<[f64; 3]> = (0..k).map(|_| std::array::from_fn(|_| r.random_range(0.0..0.5))).collect();
        let mut powers: Vec<Vec<HopPowers>> =
            problems.iter().map(|p| p.rrbs.iter().map(|_| random_powers(&mut r)).collect()).collect();
        let j = r.random_range(0..k);
        let w0 = potential_value(&problems, &powers, &sigmas);
        let g0 = payoff_with(&RateSplitting, &problems[j], &powers[j], &sigmas[j]);
        powers[j] = problems[j].rrbs.iter().map(|_| random_powers(&mut r)).collect();
        let w1 = potential_value(&problems, &powers, &sigmas);
        let g1 = payoff_with(&RateSplitting, &problems[j], &powers[j], &sigmas[j]);
        worst = worst.max(((g1 - g0) - (w1 - w0)).abs() / w1.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= POTENTIAL_TOL && secs < 10.0, format!("max scaled gap {worst:.2e} (tol {POTENTIAL_TOL:.0e}), {secs:.2}s of 10s"))
}

fn c2_equivalence() -> Verdict {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(1..4);
        let problem = random_problem(&mut r, 0, n);
        let out = solve_brs_with(&RateSplitting, &problem, &BrsOptions::default(), None).expect("solve");
        let lambdas: Vec<f64> = out.aux.rrbs.iter().map(|a| a.lambda).collect();
        let aux = optimal_aux(&problem, &out.powers, &lambdas, out.aux.sigma);
        let transformed = quadratic_transform_objective(&problem, &out.powers, &aux) + ratio_offset(&aux);
        let direct = weighted_payoff_with(&RateSplitting, &problem, &out.powers, &aux);
        worst = worst.max((transformed - direct).abs() / direct.abs().max(1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst <= EQUIVALENCE_TOL && secs < 30.0, format!("max relative gap {worst:.2e} (tol {EQUIVALENCE_TOL:.0e}), {secs:.2}s of 30s"))
}

fn c3_kkt() -> Verdict {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..200 {
        let ch = random_channels(&mut r);
        let price = r.random_range(0.05..0.5);
        let sigma: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..0.3));
        let lambda = r.random_range(0.1..0.9);
        let w = Weights::from_lambda(lambda);
        let seed_powers = random_powers(&mut r);
        let (z, x) = RateSplitting.ratios(&seed_powers, &ch);
        let (alpha, beta) = RateSplitting.quadratic(&seed_powers, &ch, &z, &x, w);
        let aux = RrbAux { z, x, alpha, beta, lambda, ..RrbAux::default() };
        let cost = sigma.map(|s| price + s);
        let p = RateSplitting.powers(&ch, &aux, w, cost);
        let group = [0, 0, 1, 2, 2, 2];
        let f = |q: &HopPowers| RateSplitting.surrogate(q, &ch, &aux, w);
        for k in 0..6 {
            let base = p.as_array();
            let h = 1e-5 * base[k].max(1e-3);
            let at = |delta: f64| {
                let mut a = base;
                a[k] += delta;
                f(&HopPowers::from_array(a))
            };
            let c = cost[group[k]];
            if base[k] > 1e-9 {
                let h = h.min(0.5 * base[k]);
                let grad = (at(h) - at(-h)) / (2.0 * h);
                worst = worst.max((grad - c).abs() / c);
                checked += 1;
            } else {
                // Zero coordinates must not gain from moving inward.
                let grad = (at(h) - at(0.0)) / h;
                worst = worst.max(((grad - c) / c).max(0.0));
            }
        }
    }
    verdict(worst <= KKT_TOL, format!("max relative stationarity error {worst:.2e} over {checked} interior coordinates (tol {KKT_TOL:.0e})"))
}

fn c4_telescoping() -> Verdict {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ch = random_channels(&mut r);
        let pw = random_powers(&mut r);
        let rates = first_hop_rates(&pw, &ch);
        let total = 0.5 * ((pw.p11 * ch.h1 + pw.p12 * ch.h1 + pw.p2 * ch.h2 + ch.ic()) / ch.ic()).log2();
        worst = worst.max((rates.r11 + rates.r2 + rates.r12 - total).abs() / total.abs().max(f64::MIN_POSITIVE));
    }
    verdict(worst <= TELESCOPE_TOL, format!("max relative error {worst:.2e} (tol {TELESCOPE_TOL:.0e})"))
}

fn c5_balance() -> Verdict {
    let cfg = NetworkConfig::default();
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    let mut active = 0;
    for i in 0..100u64 {
        let drop = drop_for(&cfg, 1000 + i);
        let a = r.random_range(0..cfg.num_d2d_links);
        let b = (a + r.random_range(1..cfg.num_d2d_links)) % cfg.num_d2d_links;
        let k = r.random_range(1..5);
        let mut rrbs: Vec<usize> = (0..cfg.num_rrbs).collect();
        for s in 0..k {
            let t = r.random_range(s..cfg.num_rrbs);
            rrbs.swap(s, t);
        }
        rrbs.truncate(k);
        let prices: Vec<f64> = (0..cfg.num_rrbs).map(|_| r.random_range(0.0..5.0)).collect();
        let problem = build_cluster_problem(&[a, b], r.random_range(0..cfg.num_errhs), &rrbs, &prices, drop.channels(), &cfg);
        let out = solve_brs_with(&RateSplitting, &problem, &BrsOptions::default(), None).expect("solve");
        for (rp, pw) in problem.rrbs.iter().zip(&out.powers) {
            if pw.total() > 0.0 {
                let (u, d) = RateSplitting.hop_rates(pw, &rp.channels);
                worst = worst.max((u - d).abs());
                active += 1;
            }
        }
    }
    verdict(worst <= BALANCE_TOL, format!("max |R_U - R_D| {worst:.2e} over {active} active RRBs (tol {BALANCE_TOL:.0e})"))
}

fn c6_pareto() -> Verdict {
    let mut r = rng(6);
    let mut failures = 0;
    for i in 0..500u64 {
        let m = r.random_range(4..=12);
        let cfg = NetworkConfig { num_d2d_links: m, num_rrbs: 12, training_samples: 4, ..NetworkConfig::default() };
        let drop = drop_for(&cfg, 2000 + i);
        let features = features_from_training(&drop.training, cfg.pca_components).expect("features");
        let clusters = cluster_devices(&features, cfg.pca_weight).expect("clusters");
        if !is_pareto_efficient(&clusters, &features, cfg.pca_weight).expect("check") {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{failures} of 500 clusterings not Pareto-efficient"))
}

static CLUSTERING_RUNS: OnceLock<Vec<(AllocationOutcome, AllocationOutcome)>> = OnceLock::new();

fn c7_clustering_gap() -> Verdict {
    let cfg = NetworkConfig { num_d2d_links: 10, num_errhs: 5, num_rrbs: 12, ..NetworkConfig::default() };
    let runs = CLUSTERING_RUNS.get_or_init(|| {
        let opts = RunOptions::default();
        (0..50u64)
            .into_par_iter()
            .map(|s| {
                let drop = drop_for(&cfg, 3000 + s);
                (
                    run_scheme(SchemeKind::Rsmd, &drop, &opts).expect("rsmd"),
                    run_scheme(SchemeKind::RsmdExhaustive, &drop, &opts).expect("exhaustive"),
                )
            })
            .collect()
    });
    let pca = mean(&runs.iter().map(|r| r.0.sum_rate).collect::<Vec<_>>());
    let exhaustive = mean(&runs.iter().map(|r| r.1.sum_rate).collect::<Vec<_>>());
    let ratio = pca / exhaustive;
    verdict(
        ratio >= CLUSTERING_RATIO,
        format!("M=10, N=12, 50 drops: PCA {pca:.3} vs exhaustive {exhaustive:.3} bits/s/Hz, ratio {ratio:.4} (min {CLUSTERING_RATIO})"),
    )
}

fn c8_hungarian() -> Verdict {
    let mut r = rng(8);
    let mut mismatches = 0;
    for _ in 0..500 {
        let rows = r.random_range(1..=6);
        let cols = r.random_range(rows..=6);
        let w: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| r.random_range(-5.0..10.0)).collect()).collect();
        let got = assignment_value(&w, &max_weight_assignment(&w).expect("assignment"));
        let (best, _) = brute_force_max(&w).expect("brute force");
        if (got - best).abs() > 1e-9 * best.abs().max(1.0) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} of 500 instances differ from brute force"))
}

fn non_decreasing(objectives: &[f64]) -> bool {
    objectives.windows(2).all(|w| w[1] >= w[0] - MONOTONE_SLACK * w[0].abs().max(1.0))
}

fn c9_assignment_monotone() -> Verdict {
    let mut r = rng(9);
    let mut logged = 0;
    let mut bad = 0;
    for _ in 0..300 {
        let (j, l, n): (usize, usize, usize) = (r.random_range(1..6), r.random_range(1..4), r.random_range(6..12));
        let cap = j.div_ceil(l).max(1);
        let t = UtilityTensor::from_fn(j, l, n, |_, _, _| r.random_range(0.0..1.0));
        let run = alternate_assignment(&t, cap).expect("assignment");
        logged += 1;
        bad += usize::from(!non_decreasing(&run.objectives));
    }
    let pipeline = default_drops();
    let mut runs: Vec<&AllocationOutcome> = pipeline.rsmd.iter().collect();
    if let Some(c) = CLUSTERING_RUNS.get() {
        runs.extend(c.iter().flat_map(|(a, b)| [a, b]));
    }
    for out in runs {
        logged += 1;
        bad += usize::from(!non_decreasing(&out.assignment_objectives));
    }
    verdict(bad == 0, format!("{bad} of {logged} logged assignment runs decrease"))
}

struct DefaultDrops {
    /// RSMD outcomes for seeds 0.., extended until 100 have converged.
    rsmd: Vec<AllocationOutcome>,
    noma: Vec<f64>,
    tin: Vec<f64>,
    fra: Vec<f64>,
}

static DEFAULT_DROPS: OnceLock<DefaultDrops> = OnceLock::new();
static SMALL_M: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();

fn default_drops() -> &'static DefaultDrops {
    DEFAULT_DROPS.get_or_init(|| {
        let cfg = NetworkConfig::default();
        let opts = RunOptions::default();
        let run = |seeds: std::ops::Range<u64>| -> Vec<AllocationOutcome> {
            seeds.into_par_iter().map(|s| run_scheme(SchemeKind::Rsmd, &drop_for(&cfg, s), &opts).expect("rsmd")).collect()
        };
        let mut rsmd = run(0..DROPS as u64);
        while rsmd.iter().filter(|o| o.converged).count() < DROPS {
            let next = rsmd.len() as u64;
            rsmd.extend(run(next..next + 10));
        }
        let seeds = 0..DROPS as u64;
        DefaultDrops {
            rsmd,
            noma: rates(SchemeKind::PdNoma, &cfg, seeds.clone()),
            tin: rates(SchemeKind::TinMulticast, &cfg, seeds.clone()),
            fra: rates(SchemeKind::FraWf, &cfg, seeds),
        }
    })
}

fn c10_price_control() -> Verdict {
    let th = NetworkConfig::default().interference_threshold_w;
    let data = default_drops();
    let converged: Vec<&AllocationOutcome> = data.rsmd.iter().filter(|o| o.converged).collect();
    let mut binding_runs = 0;
    let mut off_band = 0;
    let mut worst_binding: f64 = 0.0;
    let (mut priced, mut priced_off) = (0, 0);
    for out in &converged {
        let binding: Vec<usize> = (0..out.prices.len()).filter(|&n| out.prices[n] > 0.0).collect();
        if binding.is_empty() {
            continue;
        }
        binding_runs += 1;
        priced += binding.len();
        priced_off += binding.iter().filter(|&&n| (out.per_rrb_interference[n] / th - 1.0).abs() > PRICE_BAND).count();
        let dev = binding.iter().map(|&n| (out.per_rrb_interference[n] / th - 1.0).abs()).fold(0.0, f64::max);
        worst_binding = worst_binding.max(dev);
        off_band += usize::from(dev > PRICE_BAND);
    }
    let peak = data.rsmd.iter().flat_map(|o| o.per_rrb_interference.iter()).map(|i| i / th).fold(0.0, f64::max);
    verdict(
        off_band == 0 && peak <= 1.0 + PRICE_BAND,
        format!(
            "{off_band} of {binding_runs} converged binding runs leave the band ({priced_off} of {priced} priced RRBs, worst |I/I_th - 1| {worst_binding:.3}); peak I/I_th over all {} runs {peak:.4} (max {})",
            data.rsmd.len(),
            1.0 + PRICE_BAND
        ),
    )
}

fn c11_stackelberg() -> Verdict {
    let cfg = NetworkConfig::default();
    let opts = RunOptions::default();
    let data = default_drops();
    let converged: Vec<&AllocationOutcome> = data.rsmd.iter().filter(|o| o.converged).take(DROPS).collect();
    let reports: Vec<_> = converged
        .par_iter()
        .map(|o| check_stackelberg_stationarity(o, &cfg, &opts, STATIONARITY_TOL).expect("check"))
        .collect();
    let mut passed = 0;
    for (o, rep) in converged.iter().zip(&reports) {
        if rep.pass() {
            passed += 1;
            continue;
        }
        let worst = rep.clusters.iter().max_by(|a, b| a.improvement.total_cmp(&b.improvement)).expect("clusters");
        eprintln!(
            "  stationarity failure: improvement {:.3e} on cluster {} (utility {:.4}), violating RRBs {:?}, {} sweeps",
            worst.improvement, worst.cluster, worst.utility, rep.violating_rrbs, o.iterations
        );
    }
    let share = passed as f64 / converged.len() as f64;
    verdict(
        converged.len() == DROPS && share >= STATIONARITY_SHARE,
        format!(
            "{passed} of {} converged drops stationary ({:.0}% needed; {} drops run to collect them)",
            converged.len(),
            100.0 * STATIONARITY_SHARE,
            data.rsmd.len()
        ),
    )
}

fn c12_trends() -> Verdict {
    let data = default_drops();
    let rsmd50: Vec<f64> = data.rsmd.iter().take(DROPS).map(|o| o.sum_rate).collect();
    let (rsmd10, noma10) = SMALL_M.get_or_init(|| {
        let cfg = NetworkConfig { num_d2d_links: 10, ..NetworkConfig::default() };
        (rates(SchemeKind::Rsmd, &cfg, 0..DROPS as u64), rates(SchemeKind::PdNoma, &cfg, 0..DROPS as u64))
    });
    let r50 = mean(&rsmd50);
    let tin = gain_pct(r50, mean(&data.tin));
    let fra = gain_pct(r50, mean(&data.fra));
    let noma10 = gain_pct(mean(rsmd10), mean(noma10));
    let noma50 = gain_pct(r50, mean(&data.noma));
    let in_band = |g: f64, b: (f64, f64)| g >= b.0 && g <= b.1;
    let ok = [in_band(tin, TIN_BAND), in_band(fra, FRA_BAND), noma10 > 0.0 && noma50 > noma10];
    let mark = |b: bool| if b { "ok" } else { "out" };
    verdict(
        ok.iter().all(|&b| b),
        format!(
            "RSMD {r50:.2} bits/s/Hz at M=50; gain over TIN {tin:.2}% [{}-{}] {}; over FRA {fra:.2}% [{}-{}] {}; over PD-NOMA {noma10:.2}% (M=10) -> {noma50:.2}% (M=50), positive and rising {}",
            TIN_BAND.0, TIN_BAND.1, mark(ok[0]), FRA_BAND.0, FRA_BAND.1, mark(ok[1]), mark(ok[2])
        ),
    )
}

fn c13_pcv() -> Verdict {
    let means: Vec<f64> = [2usize, 4, 8]
        .iter()
        .map(|&d| {
            let cfg = NetworkConfig { num_d2d_links: 40, pca_components: d, ..NetworkConfig::default() };
            mean(&rates(SchemeKind::Rsmd, &cfg, 4000..4050))
        })
        .collect();
    let (lo, hi) = means.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = (hi - lo) / lo;
    verdict(
        spread <= PCV_SPREAD,
        format!("mean sum rate for d = 2, 4, 8: {:.3}, {:.3}, {:.3}; spread {:.2}% (max {}%)", means[0], means[1], means[2], 100.0 * spread, 100.0 * PCV_SPREAD),
    )
}

fn c14_fra_saturation() -> Verdict {
    let means: Vec<f64> = [36usize, 44, 50]
        .iter()
        .map(|&m| mean(&rates(SchemeKind::FraWf, &NetworkConfig { num_d2d_links: m, ..NetworkConfig::default() }, 0..DROPS as u64)))
        .collect();
    let (lo, hi) = means.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let spread = (hi - lo) / lo;
    verdict(
        spread <= FRA_FLAT,
        format!("FRA mean sum rate for M = 36, 44, 50: {:.3}, {:.3}, {:.3}; spread {:.2}% (max {}%)", means[0], means[1], means[2], 100.0 * spread, 100.0 * FRA_FLAT),
    )
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 14] = [
    (1, "potential-game identity", c1_potential),
    (2, "quadratic-transform equivalence", c2_equivalence),
    (3, "closed-form stationarity", c3_kkt),
    (4, "first-hop SIC telescoping", c4_telescoping),
    (5, "hop balance after BRS", c5_balance),
    (6, "clustering Pareto efficiency", c6_pareto),
    (7, "clustering optimality gap", c7_clustering_gap),
    (8, "Hungarian vs brute force", c8_hungarian),
    (9, "assignment monotonicity", c9_assignment_monotone),
    (10, "price control", c10_price_control),
    (11, "Stackelberg stationarity", c11_stackelberg),
    (12, "figure trends", c12_trends),
    (13, "PCV insensitivity", c13_pcv),
    (14, "FRA saturation", c14_fra_saturation),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, check) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2} ({name}): {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
