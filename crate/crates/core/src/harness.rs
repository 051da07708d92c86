//! Monte Carlo experiment runner: sweeps, paired drops, CSV output and
//! summaries with confidence intervals.

use std::collections::HashMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{dbm_to_watts, NetworkConfig};
use crate::error::{Error, Result};
use crate::rsmd::{run_scheme, NetworkDrop, RunOptions};
use crate::schemes::SchemeKind;
use crate::topology::ChannelRealization;

/// Bumped whenever a column of rows.csv, timings.csv or manifest.json changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVariable {
    /// Number of D2D links.
    M,
    /// Number of eRRHs.
    L,
    /// Number of RRBs (and CUEs).
    N,
    /// Interference threshold in dBm.
    #[serde(rename = "I_th")]
    InterferenceThresholdDbm,
    /// Number of principal component vectors.
    #[serde(rename = "d")]
    PcaComponents,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::M => "M",
            SweepVariable::L => "L",
            SweepVariable::N => "N",
            SweepVariable::InterferenceThresholdDbm => "I_th",
            SweepVariable::PcaComponents => "d",
        }
    }

    fn is_count(self) -> bool {
        !matches!(self, SweepVariable::InterferenceThresholdDbm)
    }

    /// The base configuration with this variable set to `value`. The result
    /// is not validated.
    pub fn apply(self, base: &NetworkConfig, value: f64) -> Result<NetworkConfig> {
        if !value.is_finite() {
            return Err(Error::Config(format!("sweep value {value} is not finite")));
        }
        if self.is_count() && (value < 0.0 || value.fract() != 0.0) {
            return Err(Error::Config(format!("{} takes non-negative integers, got {value}", self.label())));
        }
        let mut cfg = base.clone();
        let n = value as usize;
        match self {
            SweepVariable::M => cfg.num_d2d_links = n,
            SweepVariable::L => cfg.num_errhs = n,
            SweepVariable::N => {
                cfg.num_rrbs = n;
                cfg.num_cues = None;
            }
            SweepVariable::InterferenceThresholdDbm => cfg.interference_threshold_w = dbm_to_watts(value),
            SweepVariable::PcaComponents => cfg.pca_components = n,
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

fn default_drops() -> usize {
    100
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schemes: Vec<SchemeKind>,
    #[serde(default = "default_drops")]
    pub num_drops: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Output directory for rows.csv, timings.csv and manifest.json.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub network: NetworkConfig,
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Structural checks. Sweep points the network cannot host are flagged
    /// per row at run time instead.
    pub fn validate(&self) -> Result<()> {
        if self.num_drops == 0 {
            return Err(Error::Config("num_drops must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes requested".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep has no values".into()));
        }
        for &v in &self.sweep.values {
            self.sweep.variable.apply(&self.network, v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scheme: String,
    pub sweep: String,
    pub value: f64,
    pub drop: usize,
    pub seed: u64,
    /// Bits/s/Hz summed over served links.
    pub sum_rate: Option<f64>,
    /// Watts, device and eRRH transmissions.
    pub total_power: Option<f64>,
    /// Mean over RRBs of `1 - I_n / I_th`.
    pub interference_margin: Option<f64>,
    pub clustering_objective: Option<f64>,
    pub channel_hash: String,
    pub converged: Option<bool>,
    /// `ok`, `infeasible: ...` or `error: ...`.
    pub status: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: String,
    pub value: f64,
    pub drop: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct HarnessOptions {
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    pub run: RunOptions,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

/// Short digest of every channel gain in a realization.
pub fn channel_hash(ch: &ChannelRealization) -> String {
    let mut h = Sha256::new();
    let cubes = [&ch.h, &ch.g];
    for cube in cubes {
        cube.iter().flatten().flatten().for_each(|x| h.update(x.to_le_bytes()));
    }
    for mat in [&ch.h_cue_errh, &ch.g_cue_crdu, &ch.h_cbs_du, &ch.h_cbs_errh] {
        mat.iter().flatten().for_each(|x| h.update(x.to_le_bytes()));
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn failure_status(e: &Error) -> String {
    match e {
        Error::Infeasible(_) | Error::Config(_) | Error::TooLarge(_) => format!("infeasible: {e}"),
        _ => format!("error: {e}"),
    }
}

fn run_point(spec: &ExperimentSpec, value: f64, drop_idx: usize, opts: &RunOptions) -> (Vec<ResultRow>, Vec<TimingRow>) {
    let seed = spec.base_seed + drop_idx as u64;
    let row = |scheme: SchemeKind, hash: &str, status: String| ResultRow {
        scheme: scheme.label().to_string(),
        sweep: spec.sweep.variable.label().to_string(),
        value,
        drop: drop_idx,
        seed,
        sum_rate: None,
        total_power: None,
        interference_margin: None,
        clustering_objective: None,
        channel_hash: hash.to_string(),
        converged: None,
        status,
    };
    let drop = spec
        .sweep
        .variable
        .apply(&spec.network, value)
        .and_then(|cfg| NetworkDrop::generate(&cfg, seed));
    let drop = match drop {
        Ok(d) => d,
        Err(e) => {
            let status = failure_status(&e);
            return (spec.schemes.iter().map(|&k| row(k, "", status.clone())).collect(), Vec::new());
        }
    };
    let hash = channel_hash(drop.channels());
    let th = drop.config.interference_threshold_w;
    let mut rows = Vec::with_capacity(spec.schemes.len());
    let mut timings = Vec::with_capacity(spec.schemes.len());
    for &kind in &spec.schemes {
        let start = Instant::now();
        let result = run_scheme(kind, &drop, opts);
        timings.push(TimingRow { scheme: kind.label().to_string(), value, drop: drop_idx, runtime_s: start.elapsed().as_secs_f64() });
        match result {
            Ok(out) => {
                let n = out.per_rrb_interference.len().max(1) as f64;
                let margin = out.per_rrb_interference.iter().map(|i| 1.0 - i / th).sum::<f64>() / n;
                let clustered = out.clusters.is_some();
                rows.push(ResultRow {
                    sum_rate: Some(out.sum_rate),
                    total_power: Some(out.total_power),
                    interference_margin: Some(margin),
                    clustering_objective: clustered.then_some(out.clustering_objective),
                    converged: Some(out.converged),
                    ..row(kind, &hash, "ok".into())
                });
            }
            Err(e) => {
                log::warn!("{} at {}={value}, drop {drop_idx}: {e}", kind.label(), spec.sweep.variable.label());
                rows.push(row(kind, &hash, failure_status(&e)));
            }
        }
    }
    (rows, timings)
}

fn run_with_sink<F>(spec: &ExperimentSpec, opts: &HarnessOptions, mut sink: F) -> Result<()>
where
    F: FnMut(Vec<ResultRow>, Vec<TimingRow>) -> Result<()>,
{
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    for &value in &spec.sweep.values {
        let points: Vec<_> = pool.install(|| {
            (0..spec.num_drops).into_par_iter().map(|d| run_point(spec, value, d, &opts.run)).collect()
        });
        let (rows, timings): (Vec<_>, Vec<_>) = points.into_iter().unzip();
        log::info!("{}={value}: {} drops done", spec.sweep.variable.label(), spec.num_drops);
        sink(rows.into_iter().flatten().collect(), timings.into_iter().flatten().collect())?;
    }
    Ok(())
}

/// Runs every sweep value and drop, all schemes sharing each drop's
/// channels. Rows come back in (value, drop, scheme) order whatever the
/// worker count.
pub fn run_experiment(spec: &ExperimentSpec, opts: &HarnessOptions) -> Result<ExperimentOutput> {
    let mut out = ExperimentOutput::default();
    run_with_sink(spec, opts, |rows, timings| {
        out.rows.extend(rows);
        out.timings.extend(timings);
        Ok(())
    })?;
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    generator: String,
    rows: &'a str,
    timings: &'a str,
    spec: &'a ExperimentSpec,
}

/// Like [`run_experiment`], streaming rows.csv and timings.csv into `dir`
/// one sweep value at a time, plus manifest.json.
pub fn run_experiment_to_dir(spec: &ExperimentSpec, opts: &HarnessOptions, dir: &Path) -> Result<ExperimentOutput> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        generator: format!("rsmd-core {}", env!("CARGO_PKG_VERSION")),
        rows: "rows.csv",
        timings: "timings.csv",
        spec,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    let mut rows_w = csv::Writer::from_path(dir.join("rows.csv"))?;
    let mut timings_w = csv::Writer::from_path(dir.join("timings.csv"))?;
    let mut out = ExperimentOutput::default();
    run_with_sink(spec, opts, |rows, timings| {
        for r in &rows {
            rows_w.serialize(r)?;
        }
        for t in &timings {
            timings_w.serialize(t)?;
        }
        rows_w.flush()?;
        timings_w.flush()?;
        out.rows.extend(rows);
        out.timings.extend(timings);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub sweep: String,
    pub value: f64,
    /// Rows with status `ok`.
    pub drops: usize,
    pub failed: usize,
    pub mean_sum_rate: f64,
    /// Half-width of the 95% Student-t interval; 0 for a single drop.
    pub ci95: f64,
    pub mean_total_power: f64,
    pub converged_fraction: f64,
    /// `(scheme - reference) / reference` in percent at the same value.
    pub gain_pct: Option<f64>,
}

/// Mean and 95% confidence half-width.
pub fn mean_ci95(xs: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() {
        return Err(Error::Empty("no samples".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok((mean, 0.0));
    }
    let t = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(0.975);
    Ok((mean, t * (var / n).sqrt()))
}

pub fn gain_pct(a: f64, b: f64) -> f64 {
    100.0 * (a - b) / b
}

/// Per (scheme, sweep, value) statistics over successful rows, in order of
/// first appearance, with gains against `reference`.
pub fn summarize(rows: &[ResultRow], reference: &str) -> Result<Vec<SummaryRow>> {
    if rows.is_empty() {
        return Err(Error::Empty("no result rows".into()));
    }
    let mut order: Vec<(String, String, u64)> = Vec::new();
    let mut groups: HashMap<(String, String, u64), Vec<&ResultRow>> = HashMap::new();
    for r in rows {
        let key = (r.scheme.clone(), r.sweep.clone(), r.value.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let mut out = Vec::with_capacity(order.len());
    for key in &order {
        let group = &groups[key];
        let ok: Vec<&&ResultRow> = group.iter().filter(|r| r.is_ok()).collect();
        let rates: Vec<f64> = ok.iter().filter_map(|r| r.sum_rate).collect();
        let (mean, ci) = if rates.is_empty() { (f64::NAN, f64::NAN) } else { mean_ci95(&rates)? };
        let powers: Vec<f64> = ok.iter().filter_map(|r| r.total_power).collect();
        let conv = ok.iter().filter(|r| r.converged == Some(true)).count();
        out.push(SummaryRow {
            scheme: key.0.clone(),
            sweep: key.1.clone(),
            value: f64::from_bits(key.2),
            drops: ok.len(),
            failed: group.len() - ok.len(),
            mean_sum_rate: mean,
            ci95: ci,
            mean_total_power: if powers.is_empty() { f64::NAN } else { powers.iter().sum::<f64>() / powers.len() as f64 },
            converged_fraction: if ok.is_empty() { 0.0 } else { conv as f64 / ok.len() as f64 },
            gain_pct: None,
        });
    }
    let reference_means: HashMap<(String, u64), f64> = out
        .iter()
        .filter(|s| s.scheme.eq_ignore_ascii_case(reference))
        .map(|s| ((s.sweep.clone(), s.value.to_bits()), s.mean_sum_rate))
        .collect();
    for s in &mut out {
        if let Some(&b) = reference_means.get(&(s.sweep.clone(), s.value.to_bits())) {
            if b.is_finite() && b != 0.0 && s.mean_sum_rate.is_finite() {
                s.gain_pct = Some(gain_pct(s.mean_sum_rate, b));
            }
        }
    }
    Ok(out)
}

pub fn write_summary(path: impl AsRef<Path>, summary: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-width text table for terminals.
pub fn format_summary(summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<16} {:>6} {:>10} {:>6} {:>12} {:>10} {:>10} {:>6} {:>9}\n",
        "scheme", "sweep", "value", "drops", "sum_rate", "ci95", "power_W", "conv", "gain"
    );
    for r in summary {
        let gain = r.gain_pct.map_or("-".to_string(), |g| format!("{g:+.2}%"));
        s += &format!(
            "{:<16} {:>6} {:>10} {:>6} {:>12.4} {:>10.4} {:>10.4} {:>6.2} {:>9}\n",
            r.scheme, r.sweep, r.value, r.drops, r.mean_sum_rate, r.ci95, r.mean_total_power, r.converged_fraction, gain
        );
    }
    s
}
