//! Carleson embedding, corona packing and John-Nirenberg runs.

use std::collections::BTreeSet;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use dyadic_lab::decomp::{
    audit_forest, carleson_embedding_ratio, carleson_sharpness_search, jn_corona_check,
    packing_cascade_weight, packing_report, random_carleson_instance, stopping_forest,
    CarlesonTree, JnRow,
};
use dyadic_lab::shift::{b2_audit, petermichl_shift, predicted_bounds};
use dyadic_lab::signal::{a2_constant, random_a2_weight};
use dyadic_lab::{CubeId, Lattice};

use crate::config::ExperimentConfig;
use crate::report::{col, RunOutput, Table};
use crate::sweeps::norm_options;

#[derive(Clone, Debug, Serialize)]
pub struct CarlesonRow {
    pub seed: u64,
    pub carleson_ratio: f64,
    pub embedding_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlesonReport {
    pub rows: Vec<CarlesonRow>,
    pub max_ratio: f64,
    pub violations: usize,
    pub search_ratio: f64,
    pub search_initial: f64,
    pub search_depth: usize,
    pub search_iterations: usize,
}

pub fn run_carleson(cfg: &ExperimentConfig) -> Result<CarlesonReport> {
    let lat = Lattice::sample(cfg.dimension, cfg.carleson_k_min, cfg.seed)?;
    let rows: Vec<CarlesonRow> = (0..cfg.carleson_instances as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let (a, mu, f) = random_carleson_instance(&lat, seed)?;
            let tree = CarlesonTree::from_lattice(&lat, &a, &mu)?;
            Ok(CarlesonRow {
                seed,
                carleson_ratio: tree.check_carleson()?,
                embedding_ratio: carleson_embedding_ratio(&lat, &a, &mu, &f)?,
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio = rows.iter().map(|r| r.embedding_ratio).fold(0.0, f64::max);
    let violations = rows
        .iter()
        .filter(|r| r.embedding_ratio > 4.0 || r.carleson_ratio > 1.0 + 1e-12)
        .count();
    let search = carleson_sharpness_search(cfg.carleson_depth, cfg.carleson_iterations, cfg.seed)?;
    Ok(CarlesonReport {
        rows,
        max_ratio,
        violations,
        search_ratio: search.ratio,
        search_initial: search.initial_ratio,
        search_depth: search.depth,
        search_iterations: search.iterations,
    })
}

impl CarlesonReport {
    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut t = Table::new(
            "carleson",
            cfg.seed,
            vec![
                col("seed", "decomp", "random_carleson_instance"),
                col("carleson_ratio", "decomp", "check_carleson"),
                col("embedding_ratio", "decomp", "carleson_embedding_ratio"),
            ],
        );
        for r in &self.rows {
            t.push(vec![
                r.seed.into(),
                r.carleson_ratio.into(),
                r.embedding_ratio.into(),
            ]);
        }
        RunOutput {
            command: "carleson".into(),
            config: cfg.clone(),
            tables: vec![t],
            raw: vec![],
            summary: json!({
                "max_ratio": self.max_ratio,
                "violations": self.violations,
                "search": {
                    "ratio": self.search_ratio,
                    "initial_ratio": self.search_initial,
                    "depth": self.search_depth,
                    "iterations": self.search_iterations,
                    "seed": cfg.seed,
                },
            }),
            passed: self.violations == 0,
            warnings: vec![],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoronaRow {
    pub seed: u64,
    pub target: f64,
    pub a2: f64,
    pub generations: usize,
    pub lebesgue_ratio: f64,
    pub l2_overlap_ratio: f64,
    pub weighted_ratio: f64,
    pub audit_ok: bool,
    pub within_bounds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CoronaReport {
    pub rows: Vec<CoronaRow>,
    pub violations: usize,
    pub cascade_lebesgue_ratio: f64,
}

pub fn run_corona(cfg: &ExperimentConfig) -> Result<CoronaReport> {
    let lat = Lattice::sample(cfg.dimension, cfg.k_min, cfg.seed)?;
    let ambient: BTreeSet<CubeId> = lat.all_cubes().collect();
    let rows: Vec<CoronaRow> = (0..cfg.n_weights as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let target = 2.0 + (i % 10) as f64 * 20.0;
            let w = random_a2_weight(&lat, target, seed)?;
            let forest = stopping_forest(&lat, &lat.root(), &w, &ambient)?;
            let audit = audit_forest(&lat, &forest, &ambient);
            let rep = packing_report(&lat, &forest, &w)?;
            Ok(CoronaRow {
                seed,
                target,
                a2: a2_constant(&w, &lat)?.value,
                generations: forest.generations.len(),
                lebesgue_ratio: rep.lebesgue_ratio,
                l2_overlap_ratio: rep.l2_overlap_ratio,
                weighted_ratio: rep.weighted_ratio,
                audit_ok: audit.threshold_ok && audit.partition_ok && audit.nesting_ok,
                within_bounds: rep.within_bounds(),
            })
        })
        .collect::<Result<_>>()?;
    let violations = rows
        .iter()
        .filter(|r| !(r.audit_ok && r.within_bounds))
        .count();
    let deep = Lattice::standard(1, cfg.cascade_k_min)?;
    let w = packing_cascade_weight(&deep, 6, 15, 0.03)?;
    let ambient: BTreeSet<CubeId> = deep.all_cubes().collect();
    let forest = stopping_forest(&deep, &deep.root(), &w, &ambient)?;
    let cascade = packing_report(&deep, &forest, &w)?;
    Ok(CoronaReport {
        rows,
        violations,
        cascade_lebesgue_ratio: cascade.lebesgue_ratio,
    })
}

impl CoronaReport {
    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut t = Table::new(
            "corona",
            cfg.seed,
            vec![
                col("seed", "signal", "random_a2_weight"),
                col("target", "signal", "random_a2_weight"),
                col("a2", "signal", "a2_constant"),
                col("generations", "decomp", "stopping_forest"),
                col("lebesgue_ratio", "decomp", "packing_report"),
                col("l2_overlap_ratio", "decomp", "packing_report"),
                col("weighted_ratio", "decomp", "packing_report"),
                col("audit_ok", "decomp", "audit_forest"),
                col("within_bounds", "decomp", "packing_report"),
            ],
        );
        for r in &self.rows {
            t.push(vec![
                r.seed.into(),
                r.target.into(),
                r.a2.into(),
                r.generations.into(),
                r.lebesgue_ratio.into(),
                r.l2_overlap_ratio.into(),
                r.weighted_ratio.into(),
                r.audit_ok.into(),
                r.within_bounds.into(),
            ]);
        }
        RunOutput {
            command: "corona".into(),
            config: cfg.clone(),
            tables: vec![t],
            raw: vec![],
            summary: json!({
                "violations": self.violations,
                "cascade_lebesgue_ratio": self.cascade_lebesgue_ratio,
                "cascade_k_min": cfg.cascade_k_min,
            }),
            passed: self.violations == 0,
            warnings: vec![],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JnWeightRow {
    pub seed: u64,
    pub a2: f64,
    pub stopping_cubes: usize,
    pub passed: bool,
    pub max_c1: f64,
    pub max_lebesgue_ratio: f64,
    pub max_w_inverse_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct JnReport {
    pub b2: f64,
    pub b1: f64,
    pub weights: Vec<JnWeightRow>,
    #[serde(skip)]
    pub detail: Vec<(u64, JnRow)>,
}

impl JnReport {
    pub fn passed(&self) -> bool {
        self.weights.iter().all(|w| w.passed)
    }
}

pub fn run_jn(cfg: &ExperimentConfig) -> Result<JnReport> {
    let lat = Lattice::standard(1, cfg.k_min)?;
    let s = petermichl_shift(&lat)?;
    let b2 = b2_audit(&s, cfg.b2_samples, cfg.seed, &norm_options(cfg))?;
    let b1 = predicted_bounds(0.0, 0.0, b2, 1.0, 0, 0, 1)?.b1;
    let ts: Vec<f64> = (1..=cfg.jn_t_max).map(f64::from).collect();
    let results: Vec<(JnWeightRow, Vec<(u64, JnRow)>)> = (0..cfg.n_weights as u64)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed + i;
            let w = random_a2_weight(&lat, 2.0 + 10.0 * (i % 10) as f64, seed)?;
            let rep = jn_corona_check(&s, &w, b1, &ts)?;
            let row = JnWeightRow {
                seed,
                a2: a2_constant(&w, &lat)?.value,
                stopping_cubes: rep.rows.len(),
                passed: rep.passed,
                max_c1: rep.max_c1,
                max_lebesgue_ratio: rep
                    .rows
                    .iter()
                    .map(|r| r.max_lebesgue_ratio)
                    .fold(0.0, f64::max),
                max_w_inverse_ratio: rep
                    .rows
                    .iter()
                    .map(|r| r.max_w_inverse_ratio)
                    .fold(0.0, f64::max),
            };
            Ok((row, rep.rows.into_iter().map(|r| (seed, r)).collect()))
        })
        .collect::<Result<_>>()?;
    let mut weights = Vec::new();
    let mut detail = Vec::new();
    for (w, d) in results {
        weights.push(w);
        detail.extend(d);
    }
    Ok(JnReport {
        b2,
        b1,
        weights,
        detail,
    })
}

impl JnReport {
    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut t = Table::new(
            "jn_weights",
            cfg.seed,
            vec![
                col("seed", "signal", "random_a2_weight"),
                col("a2", "signal", "a2_constant"),
                col("stopping_cubes", "decomp", "jn_corona_check"),
                col("passed", "decomp", "jn_corona_check"),
                col("max_c1", "decomp", "final_norm_constant"),
                col("max_lebesgue_ratio", "decomp", "jn_distribution"),
                col("max_w_inverse_ratio", "decomp", "jn_distribution"),
            ],
        );
        for r in &self.weights {
            t.push(vec![
                r.seed.into(),
                r.a2.into(),
                r.stopping_cubes.into(),
                r.passed.into(),
                r.max_c1.into(),
                r.max_lebesgue_ratio.into(),
                r.max_w_inverse_ratio.into(),
            ]);
        }
        let mut d = Table::new(
            "jn_cubes",
            cfg.seed,
            vec![
                col("seed", "signal", "random_a2_weight"),
                col("slice", "decomp", "slice_lattice"),
                col("class", "decomp", "density_classes"),
                col("level", "decomp", "stopping_forest"),
                col("cube_index", "decomp", "stopping_forest"),
                col("partition_size", "decomp", "stopping_forest"),
                col("alpha_classes", "decomp", "p_alpha_split"),
                col("pass_lebesgue", "decomp", "jn_distribution"),
                col("pass_w_inverse", "decomp", "jn_distribution"),
                col("domination", "decomp", "jn_maximal"),
                col("max_lebesgue_ratio", "decomp", "jn_distribution"),
                col("max_w_inverse_ratio", "decomp", "jn_distribution"),
                col("c1", "decomp", "final_norm_constant"),
            ],
        );
        for (seed, r) in &self.detail {
            d.push(vec![
                (*seed).into(),
                r.slice.into(),
                r.class.into(),
                r.cube.level.into(),
                r.cube.index[0].into(),
                r.partition_size.into(),
                r.alpha_classes.into(),
                r.pass_lebesgue.into(),
                r.pass_w_inverse.into(),
                r.domination.into(),
                r.max_lebesgue_ratio.into(),
                r.max_w_inverse_ratio.into(),
                r.c1.into(),
            ]);
        }
        RunOutput {
            command: "jn".into(),
            config: cfg.clone(),
            tables: vec![t, d],
            raw: vec![],
            summary: json!({ "b2": self.b2, "b1": self.b1, "t_max": cfg.jn_t_max, "weights": self.weights.len() }),
            passed: self.passed(),
            warnings: vec![],
        }
    }
}
