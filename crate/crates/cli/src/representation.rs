//! Random-lattice representation: bad-cube probabilities, the averaged
//! Petermichl kernel and coefficient decay of a Calderon-Zygmund kernel.

use anyhow::{bail, Result};
use serde::Serialize;
use serde_json::json;

use dyadic_lab::fit::{fit_semilog2, FitResult};
use dyadic_lab::lattice::{estimate_pi_bad, Estimate};
use dyadic_lab::represent::{
    coefficient_decay_check, cz_coefficients, level_pairs, periodic_hilbert_kernel,
    petermichl_dilation_kernel, s0, AntisymmetryReport, AveragedKernel, Band, DecayReport,
    ProfileReport,
};
use dyadic_lab::{GoodnessParams, Lattice};

use crate::config::ExperimentConfig;
use crate::report::{col, RawTable, RunOutput, Table};

#[derive(Clone, Debug, Serialize)]
pub struct PiBadRow {
    pub r0: u32,
    pub s0: u32,
    pub estimate: Estimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct PiBadTable {
    pub rows: Vec<PiBadRow>,
    pub strictly_decreasing: bool,
    /// Slope of log2 pi_bad against r0.
    pub fit: Option<FitResult>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RepresentationReport {
    pub pi_bad: PiBadTable,
    #[serde(skip)]
    pub kernel: AveragedKernel,
    pub profile: ProfileReport,
    pub antisymmetry: AntisymmetryReport,
    pub decay: DecayReport,
    pub warnings: Vec<String>,
}

impl RepresentationReport {
    pub fn decay_exponent(&self) -> Option<f64> {
        self.decay.fit.map(|f| f.slope)
    }
}

pub fn pi_bad_table(cfg: &ExperimentConfig) -> Result<PiBadTable> {
    let mut rows = Vec::new();
    for &r0 in &cfg.r0_values {
        let p = GoodnessParams::new(r0, cfg.gamma)?;
        let e = estimate_pi_bad(1, r0, cfg.gamma, cfg.pi_level, cfg.pi_samples, cfg.seed)?;
        rows.push(PiBadRow {
            r0,
            s0: s0(&p),
            estimate: e,
        });
    }
    let strictly_decreasing = rows
        .windows(2)
        .all(|w| w[1].estimate.value < w[0].estimate.value);
    let xs: Vec<f64> = rows.iter().map(|r| r.r0 as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.estimate.value).collect();
    Ok(PiBadTable {
        rows,
        strictly_decreasing,
        fit: fit_semilog2(&xs, &ys).ok(),
    })
}

pub fn averaged_kernel(cfg: &ExperimentConfig) -> Result<AveragedKernel> {
    Ok(petermichl_dilation_kernel(
        cfg.kernel_cells,
        cfg.samples,
        cfg.seed,
        Band {
            lo: cfg.band_lo,
            hi: cfg.band_hi,
        },
    )?)
}

pub fn decay_report(cfg: &ExperimentConfig) -> Result<DecayReport> {
    let lat = Lattice::sample(1, cfg.decay_k_min, cfg.seed)?;
    let params = GoodnessParams::from_alpha(1, cfg.alpha, cfg.r0)?;
    let mut pairs = Vec::new();
    for [a, b] in &cfg.decay_levels {
        pairs.extend(
            level_pairs(&lat, *a, *b)
                .into_iter()
                .filter(|(q, r)| lat.long_distance(q, r) <= cfg.decay_max_distance),
        );
    }
    let coeffs = cz_coefficients(&periodic_hilbert_kernel, &lat, &pairs)?;
    Ok(coefficient_decay_check(&coeffs, cfg.alpha, &params)?)
}

pub fn run_representation(cfg: &ExperimentConfig) -> Result<RepresentationReport> {
    if cfg.dimension != 1 {
        bail!("representation runs are one-dimensional");
    }
    if cfg.samples == 0 || cfg.pi_samples == 0 {
        bail!("Monte Carlo sample counts must be positive");
    }
    let pi_bad = pi_bad_table(cfg)?;
    let kernel = averaged_kernel(cfg)?;
    let profile = kernel.profile();
    let antisymmetry = kernel.antisymmetry();
    let decay = decay_report(cfg)?;
    let mut warnings = Vec::new();
    for r in &pi_bad.rows {
        let e = r.estimate;
        if e.value > 0.0 && e.std_error / e.value > cfg.se_threshold {
            warnings.push(format!(
                "pi_bad at r0 = {}: relative standard error {:.3}",
                r.r0,
                e.std_error / e.value
            ));
        }
    }
    let kernel_se = antisymmetry.statistic.std_error / profile.mean.abs();
    if !(kernel_se <= cfg.se_threshold) {
        warnings.push(format!(
            "averaged kernel: relative standard error {kernel_se:.3}"
        ));
    }
    Ok(RepresentationReport {
        pi_bad,
        kernel,
        profile,
        antisymmetry,
        decay,
        warnings,
    })
}

impl RepresentationReport {
    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut pi = Table::new(
            "pi_bad",
            cfg.seed,
            vec![
                col("r0", "lattice", "estimate_pi_bad"),
                col("s0", "represent", "s0"),
                col("pi_bad", "lattice", "estimate_pi_bad"),
                col("std_error", "lattice", "estimate_pi_bad"),
                col("samples", "lattice", "estimate_pi_bad"),
            ],
        );
        for r in &self.pi_bad.rows {
            pi.push(vec![
                r.r0.into(),
                r.s0.into(),
                r.estimate.value.into(),
                r.estimate.std_error.into(),
                r.estimate.samples.into(),
            ]);
        }
        let mut prof = Table::new(
            "kernel_profile",
            cfg.seed,
            vec![
                col("separation", "represent", "profile"),
                col("scaled_kernel", "represent", "profile"),
            ],
        );
        for (t, v) in self.profile.separation.iter().zip(&self.profile.scaled) {
            prof.push(vec![(*t).into(), (*v).into()]);
        }
        let raw = vec![
            RawTable {
                name: "averaged_kernel".into(),
                seed: cfg.seed,
                module: "represent".into(),
                operation: "petermichl_dilation_kernel".into(),
                csv: self.kernel.to_csv(),
            },
            RawTable {
                name: "decay".into(),
                seed: cfg.seed,
                module: "represent".into(),
                operation: "coefficient_decay_check".into(),
                csv: self.decay.to_csv(),
            },
        ];
        RunOutput {
            command: "representation".into(),
            config: cfg.clone(),
            tables: vec![pi, prof],
            raw,
            summary: json!({
                "pi_bad": { "strictly_decreasing": self.pi_bad.strictly_decreasing, "fit": self.pi_bad.fit,
                            "gamma": cfg.gamma, "level": cfg.pi_level, "samples": cfg.pi_samples, "seed": cfg.seed },
                "kernel": { "mean": self.profile.mean, "max_relative_deviation": self.profile.max_relative_deviation,
                            "antisymmetry": self.antisymmetry, "samples": self.kernel.samples, "n": self.kernel.n,
                            "seed": cfg.seed },
                "decay": { "alpha": self.decay.alpha, "fit": self.decay.fit, "group_fits": self.decay.group_fits,
                           "max_ratio": self.decay.max_ratio, "rows": self.decay.rows.len(), "r0": cfg.r0,
                           "seed": cfg.seed },
            }),
            passed: true,
            warnings: self.warnings.clone(),
        }
    }
}
