//! Flat `key = value` experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub k_min: i32,
    pub seed: u64,
    pub out: PathBuf,

    /// Power-weight exponents and singularity position for the A2 sweep.
    pub power_exponents: Vec<f64>,
    pub power_center: f64,
    /// Cascade-weight A2 targets; 1 means Lebesgue measure.
    pub a2_targets: Vec<f64>,
    /// petermichl, random_multiplier, extremal_multiplier, all_plus_multiplier
    pub shift_families: Vec<String>,

    pub complexity_min: u32,
    pub complexity_max: u32,
    pub complexity_a2: f64,
    /// dense, sparse
    pub complexity_families: Vec<String>,

    /// Number of random weights (or weight pairs) in the corona, jn and two-weight runs.
    pub n_weights: usize,
    pub two_weight_families: Vec<String>,
    pub stability_band: f64,

    pub weak_complexity_max: u32,
    pub spike_random: usize,
    pub spike_terms: usize,
    pub b2_samples: usize,

    pub carleson_instances: usize,
    pub carleson_k_min: i32,
    pub carleson_depth: usize,
    pub carleson_iterations: usize,

    pub cascade_k_min: i32,

    pub jn_t_max: u32,

    pub r0_values: Vec<u32>,
    pub r0: u32,
    pub gamma: f64,
    pub alpha: f64,
    pub pi_samples: u64,
    pub pi_level: i32,
    /// Monte Carlo samples for the averaged kernel.
    pub samples: usize,
    /// Window cells of the averaged kernel.
    pub kernel_cells: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    /// Relative standard error above which a Monte Carlo result is flagged.
    pub se_threshold: f64,
    pub decay_k_min: i32,
    /// (input level, output level) pairs for the decay regression.
    pub decay_levels: Vec<[i32; 2]>,
    pub decay_max_distance: f64,

    pub norm_tol: f64,
    pub norm_max_iter: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dimension: 1,
            k_min: -10,
            seed: 0,
            out: PathBuf::from("out"),
            power_exponents: vec![0.0, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99],
            power_center: 0.5,
            a2_targets: vec![1.0, 2.0, 5.0, 10.0, 30.0, 100.0, 300.0, 1000.0],
            shift_families: ["petermichl", "random_multiplier", "extremal_multiplier"]
                .map(String::from)
                .to_vec(),
            complexity_min: 0,
            complexity_max: 6,
            complexity_a2: 100.0,
            complexity_families: ["dense", "sparse"].map(String::from).to_vec(),
            n_weights: 20,
            two_weight_families: ["petermichl", "random_multiplier", "dense_2_2"]
                .map(String::from)
                .to_vec(),
            stability_band: 0.3,
            weak_complexity_max: 3,
            spike_random: 200,
            spike_terms: 8,
            b2_samples: 4,
            carleson_instances: 1000,
            carleson_k_min: -7,
            carleson_depth: 48,
            carleson_iterations: 4000,
            cascade_k_min: -18,
            jn_t_max: 40,
            r0_values: (2..=8).collect(),
            r0: 5,
            gamma: 0.25,
            alpha: 1.0,
            pi_samples: 100_000,
            pi_level: -12,
            samples: 10_000,
            kernel_cells: 256,
            band_lo: 1.0 / 64.0,
            band_hi: 0.25,
            se_threshold: 0.05,
            decay_k_min: -10,
            decay_levels: vec![[-7, -7], [-6, -6], [-7, -6], [-6, -7]],
            decay_max_distance: 0.25,
            norm_tol: 1e-8,
            norm_max_iter: 20_000,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dimension) {
            bail!("dimension must be 1 or 2");
        }
        if self.k_min >= 0
            || self.decay_k_min >= 0
            || self.cascade_k_min >= 0
            || self.carleson_k_min >= 0
        {
            bail!("k_min values must be negative");
        }
        for f in &self.shift_families {
            if ![
                "petermichl",
                "random_multiplier",
                "extremal_multiplier",
                "all_plus_multiplier",
            ]
            .contains(&f.as_str())
            {
                bail!("unknown shift family {f}");
            }
        }
        for f in &self.complexity_families {
            if !["dense", "sparse"].contains(&f.as_str()) {
                bail!("unknown complexity family {f}");
            }
        }
        for f in &self.two_weight_families {
            if !["petermichl", "random_multiplier"].contains(&f.as_str())
                && parse_dense(f).is_none()
            {
                bail!("unknown two-weight family {f}");
            }
        }
        if self.complexity_min > self.complexity_max {
            bail!("complexity_min exceeds complexity_max");
        }
        if self.a2_targets.iter().any(|&t| !(t >= 1.0)) || self.complexity_a2 < 1.0 {
            bail!("A2 targets must be at least 1");
        }
        if self
            .power_exponents
            .iter()
            .any(|a| a.abs() >= self.dimension as f64)
        {
            bail!("power exponents must satisfy |a| < dimension");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) || self.alpha <= 0.0 {
            bail!("need 0 < gamma < 1 and alpha > 0");
        }
        if !self.kernel_cells.is_power_of_two() || self.kernel_cells < 4 {
            bail!("kernel_cells must be a power of two, at least 4");
        }
        if !(self.band_lo > 0.0 && self.band_lo < self.band_hi && self.band_hi <= 0.5) {
            bail!("kernel band must satisfy 0 < band_lo < band_hi <= 1/2");
        }
        if !(self.norm_tol > 0.0) || self.norm_max_iter == 0 {
            bail!("norm tolerance and iteration cap must be positive");
        }
        Ok(())
    }

    /// Sets k_min from a cell count per side.
    pub fn set_cells(&mut self, cells: usize) -> Result<()> {
        if !cells.is_power_of_two() || cells < 2 {
            bail!("cell count must be a power of two");
        }
        self.k_min = -(cells.trailing_zeros() as i32);
        Ok(())
    }
}

/// `dense_m_n` names a dense random shift with parameters (m, n).
pub fn parse_dense(name: &str) -> Option<(u32, u32)> {
    let rest = name.strip_prefix("dense_")?;
    let (m, n) = rest.split_once('_')?;
    Some((m.parse().ok()?, n.parse().ok()?))
}
