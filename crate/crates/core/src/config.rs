//! Network configuration.
//!
//! Powers in the TOML schema are given in watts except the interference
//! threshold and the noise floor, which are given in dBm and converted to
//! linear watts when the file is loaded.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts watts to dBm.
pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

mod dbm {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::watts_to_dbm(*w))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d).map(super::dbm_to_watts)
    }
}

/// Mean node separations in metres, one per link class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeanDistances {
    pub errh_chdu_m: f64,
    pub errh_crdu_m: f64,
    pub errh_cbs_m: f64,
    pub chdu_cbs_m: f64,
    pub errh_cue_m: f64,
    pub cue_crdu_m: f64,
}

impl Default for MeanDistances {
    fn default() -> Self {
        Self {
            errh_chdu_m: 100.0,
            errh_crdu_m: 100.0,
            errh_cbs_m: 200.0,
            chdu_cbs_m: 200.0,
            errh_cue_m: 160.0,
            cue_crdu_m: 230.0,
        }
    }
}

impl MeanDistances {
    fn all(&self) -> [f64; 6] {
        [
            self.errh_chdu_m,
            self.errh_crdu_m,
            self.errh_cbs_m,
            self.chdu_cbs_m,
            self.errh_cue_m,
            self.cue_crdu_m,
        ]
    }
}

/// Static configuration of one network drop.
///
/// `interference_threshold_w` and `noise_power_w` are linear; on disk they
/// appear as `interference_threshold_dbm` and `noise_power_dbm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub num_d2d_links: usize,
    pub num_errhs: usize,
    pub num_rrbs: usize,
    /// Number of cellular users. Every RRB carries exactly one, so this
    /// must equal `num_rrbs` when given.
    pub num_cues: Option<usize>,
    pub max_clusters_per_errh: usize,
    pub p_max_du_w: f64,
    pub p_max_errh_w: f64,
    pub cue_power_w: f64,
    #[serde(rename = "interference_threshold_dbm", with = "dbm")]
    pub interference_threshold_w: f64,
    #[serde(rename = "noise_power_dbm", with = "dbm")]
    pub noise_power_w: f64,
    pub distances: MeanDistances,
    pub pca_components: usize,
    pub pca_weight: f64,
    pub training_samples: usize,
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            num_d2d_links: 50,
            num_errhs: 5,
            num_rrbs: 36,
            num_cues: None,
            max_clusters_per_errh: 5,
            p_max_du_w: 0.5,
            p_max_errh_w: 0.5,
            cue_power_w: 0.5,
            interference_threshold_w: dbm_to_watts(-80.0),
            noise_power_w: dbm_to_watts(-174.0),
            distances: MeanDistances::default(),
            pca_components: 4,
            pca_weight: 0.5,
            training_samples: 10,
            rng_seed: 1,
        }
    }
}

impl NetworkConfig {
    /// Number of device clusters, `ceil(M / 2)`.
    pub fn num_clusters(&self) -> usize {
        self.num_d2d_links.div_ceil(2)
    }

    pub fn num_cues(&self) -> usize {
        self.num_cues.unwrap_or(self.num_rrbs)
    }

    /// Per-cluster eRRH budget `P_R / N_R`.
    pub fn errh_cap_per_cluster(&self) -> f64 {
        self.p_max_errh_w / self.max_clusters_per_errh as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_d2d_links < 2 {
            return bad(format!("need at least 2 D2D links, got {}", self.num_d2d_links));
        }
        if self.num_errhs == 0 || self.num_rrbs == 0 || self.max_clusters_per_errh == 0 {
            return bad("L, N and N_R must be positive".into());
        }
        if let Some(c) = self.num_cues {
            if c != self.num_rrbs {
                return bad(format!("one CUE per RRB required: C = {c}, N = {}", self.num_rrbs));
            }
        }
        for (name, p) in [
            ("p_max_du_w", self.p_max_du_w),
            ("p_max_errh_w", self.p_max_errh_w),
            ("cue_power_w", self.cue_power_w),
            ("interference threshold", self.interference_threshold_w),
            ("noise power", self.noise_power_w),
        ] {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {p}"));
            }
        }
        if self.distances.all().iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return bad("mean distances must be positive".into());
        }
        if !(self.pca_weight > 0.0 && self.pca_weight < 1.0) {
            return bad(format!("pca_weight must lie in (0, 1), got {}", self.pca_weight));
        }
        if self.pca_components == 0 || self.pca_components > self.num_rrbs {
            return bad(format!(
                "pca_components must lie in [1, N = {}], got {}",
                self.num_rrbs, self.pca_components
            ));
        }
        if self.training_samples < 2 {
            return bad("at least 2 training samples are needed".into());
        }
        let j = self.num_clusters();
        if j > self.num_errhs * self.max_clusters_per_errh {
            return bad(format!(
                "{j} clusters exceed eRRH capacity L*N_R = {}",
                self.num_errhs * self.max_clusters_per_errh
            ));
        }
        if j > self.num_rrbs {
            return bad(format!("{j} clusters exceed the {} RRBs", self.num_rrbs));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
