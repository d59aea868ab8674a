//! Executes the property checks of every module and reports each as data.

use std::collections::BTreeSet;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use dyadic_lab::decomp::{
    audit_forest, carleson_embedding_ratio, cz_decompose, random_carleson_instance, slice_lattice,
    stopping_forest,
};
use dyadic_lab::fit::{fit_loglog, ols};
use dyadic_lab::haar::{analyze, standard_haar, synthesize};
use dyadic_lab::represent::{pi_good_given_r, representation_weight};
use dyadic_lab::shift::{
    petermichl_shift, random_haar_multiplier, random_shift, spike_corpus, ElementaryShift,
    RandomShiftKind, ShiftBlock,
};
use dyadic_lab::signal::{
    a2_constant, distribution_function, joint_a2, random_a2_weight, StepFunction,
};
use dyadic_lab::{CubeId, GoodnessParams, Lattice};

use crate::config::ExperimentConfig;
use crate::report::{col, RunOutput, Table};

#[derive(Clone, Debug, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub module: String,
    pub passed: bool,
    /// Failing case, or the detected fault for fault-injection checks.
    pub witness: Option<String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantSummary {
    pub results: Vec<InvariantResult>,
}

impl InvariantSummary {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&InvariantResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

type Outcome = Result<Option<String>>;

fn fail(msg: String) -> Outcome {
    Ok(Some(msg))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn children_partition(seed: u64) -> Outcome {
    for (d, k) in [(1, -7), (2, -4)] {
        let lat = Lattice::sample(d, k, seed)?;
        for q in lat.all_cubes().filter(|q| q.level > lat.k_min()) {
            let mut cells: Vec<usize> = Vec::new();
            for c in lat.children(&q)? {
                if lat.parent(&c)? != q {
                    return fail(format!("parent of {c} is not {q}"));
                }
                cells.extend(lat.cells(&c));
            }
            cells.sort();
            let mut want = lat.cells(&q);
            want.sort();
            if cells != want {
                return fail(format!("children of {q} do not partition it (d = {d})"));
            }
        }
    }
    Ok(None)
}

fn long_distance_symmetric(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -6, seed)?;
    let cubes: Vec<CubeId> = lat.all_cubes().collect();
    for q in &cubes {
        for r in &cubes {
            let (a, b) = (lat.long_distance(q, r), lat.long_distance(r, q));
            if a != b || a < q.side() + r.side() {
                return fail(format!("D({q}, {r}) = {a}, D({r}, {q}) = {b}"));
            }
        }
    }
    Ok(None)
}

fn badness_monotone(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -10, seed)?;
    for r0 in 1..8 {
        let lo = GoodnessParams::new(r0, 0.25)?;
        let hi = GoodnessParams::new(r0 + 1, 0.25)?;
        if let Some(q) = lat
            .all_cubes()
            .find(|q| lat.is_bad(q, &hi) && !lat.is_bad(q, &lo))
        {
            return fail(format!("{q} bad at r0 = {} but good at r0 = {r0}", r0 + 1));
        }
    }
    Ok(None)
}

fn haar_round_trip(seed: u64) -> Outcome {
    for (d, k) in [(1, -10), (2, -5)] {
        let lat = Lattice::sample(d, k, seed)?;
        let f = StepFunction::random(lat.grid(), seed)?;
        let back = synthesize(&analyze(&lat, &f)?)?;
        let err = max_abs_diff(f.values(), back.values());
        if err > 1e-10 {
            return fail(format!("round-trip error {err:e} (d = {d})"));
        }
    }
    Ok(None)
}

fn haar_parseval(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -10, seed)?;
    let f = StepFunction::random(lat.grid(), seed + 1)?;
    let err = (analyze(&lat, &f)?.energy() - f.l2_norm().powi(2)).abs();
    if err > 1e-10 {
        return fail(format!("Parseval defect {err:e}"));
    }
    Ok(None)
}

fn haar_orthonormal(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -10, seed)?;
    let picked: Vec<CubeId> = lat
        .all_cubes()
        .filter(|q| q.level > lat.k_min())
        .step_by(37)
        .collect();
    let hs: Vec<StepFunction> = picked
        .iter()
        .map(|q| standard_haar(&lat, q, 1))
        .collect::<dyadic_lab::Result<_>>()?;
    for (i, a) in hs.iter().enumerate() {
        for (j, b) in hs.iter().enumerate().skip(i) {
            let ip = a.inner(b)?;
            if (ip - (i == j) as u8 as f64).abs() > 1e-10 {
                return fail(format!("<h_{}, h_{}> = {ip}", picked[i], picked[j]));
            }
        }
    }
    Ok(None)
}

fn haar_fast_vs_inner(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    let f = StepFunction::random(lat.grid(), seed + 2)?;
    let c = analyze(&lat, &f)?;
    for (q, j, v) in c.iter() {
        let direct = f.inner(&standard_haar(&lat, &q, j)?)?;
        if (direct - v).abs() > 1e-10 {
            return fail(format!(
                "coefficient of {q}: fast {v}, inner product {direct}"
            ));
        }
    }
    Ok(None)
}

fn a2_properties(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    for i in 0..10 {
        let w = random_a2_weight(&lat, 1.5 + 10.0 * i as f64, seed + i)?;
        let a = a2_constant(&w, &lat)?.value;
        let b = a2_constant(&w.reciprocal(), &lat)?.value;
        if a < 1.0 - 1e-12 || (a - b).abs() > 1e-9 * a {
            return fail(format!("[w] = {a}, [1/w] = {b}"));
        }
        let v = random_a2_weight(&lat, 3.0, seed + 50 + i)?;
        let (x, y) = (joint_a2(&w, &v, &lat)?.value, joint_a2(&v, &w, &lat)?.value);
        if (x - y).abs() > 1e-12 * x {
            return fail(format!("joint A2 not symmetric: {x} vs {y}"));
        }
    }
    Ok(None)
}

fn distribution_monotone(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    let f = StepFunction::random(lat.grid(), seed)?;
    let ts: Vec<f64> = (1..200).map(|i| i as f64 * 0.01).collect();
    let curve = distribution_function(&f, None, &ts)?;
    if let Some(i) = (1..curve.len()).find(|&i| curve[i] > curve[i - 1]) {
        return fail(format!("distribution increases at t = {}", ts[i]));
    }
    Ok(None)
}

fn test_shifts(lat: &Lattice, seed: u64) -> Result<Vec<(String, ElementaryShift)>> {
    let mut out = vec![
        ("petermichl".to_string(), petermichl_shift(lat)?),
        (
            "random_multiplier".to_string(),
            random_haar_multiplier(lat, seed)?,
        ),
    ];
    for (m, n) in [(0, 1), (1, 2), (2, 2), (3, 1)] {
        out.push((
            format!("dense_{m}_{n}"),
            random_shift(lat, m, n, RandomShiftKind::Dense, seed, None)?,
        ));
        out.push((
            format!("sparse_{m}_{n}"),
            random_shift(lat, m, n, RandomShiftKind::Sparse, seed, None)?,
        ));
    }
    Ok(out)
}

fn shift_normalization(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    for (name, s) in test_shifts(&lat, seed)? {
        let a = s.audit();
        if !a.passed {
            return fail(format!("{name}: pair product {}", a.max_pair_product));
        }
    }
    Ok(None)
}

fn shift_adjoint_and_contraction(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    let f = StepFunction::random(lat.grid(), seed + 3)?;
    let g = StepFunction::random(lat.grid(), seed + 4)?;
    for (name, s) in test_shifts(&lat, seed)? {
        let sf = s.apply(&f)?;
        let x = sf.inner(&g)?;
        let y = f.inner(&s.apply_transpose(&g)?)?;
        if (x - y).abs() > 1e-10 * (1.0 + x.abs()) {
            return fail(format!("{name}: <Sf, g> = {x}, <f, S*g> = {y}"));
        }
        if sf.l2_norm() > f.l2_norm() * (1.0 + 1e-9) {
            return fail(format!(
                "{name}: ||Sf|| = {} > ||f|| = {}",
                sf.l2_norm(),
                f.l2_norm()
            ));
        }
    }
    Ok(None)
}

/// Doubles one pair function of a valid shift; the normalization audit must
/// reject the result and name the corrupted block.
fn corrupted_shift_detected(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -7, seed)?;
    let s = random_shift(&lat, 1, 1, RandomShiftKind::Dense, seed, None)?;
    let mut blocks: Vec<ShiftBlock> = s.blocks().to_vec();
    let k = blocks.len() / 2;
    let target = blocks[k].cube;
    for v in &mut blocks[k].terms[0].input.values {
        *v *= 2.0;
    }
    let bad = ElementaryShift::from_blocks_unchecked(&lat, s.m(), s.n(), false, blocks)?;
    let audit = bad.audit();
    match audit.witness {
        Some(w) if !audit.passed && w.cube == target => Ok(None),
        Some(w) if !audit.passed => fail(format!("audit failed at {} instead of {target}", w.cube)),
        _ => fail(format!("corrupted block {target} passed the audit")),
    }
}

/// Criterion-style CZ audit over random spiky inputs at random heights.
fn cz_properties(seed: u64) -> Outcome {
    for i in 0..100u64 {
        let d = 1 + (i % 2) as usize;
        let lat = Lattice::sample(d, if d == 1 { -9 } else { -5 }, seed + i)?;
        let n = lat.grid().len();
        let spikes = spike_corpus(lat.grid(), 1, 6, seed + i)?;
        let f = StepFunction::random(lat.grid(), seed + i)?.add(&spikes[n].scale(4.0))?;
        let lambda = f.l1_norm() * (1.05 + (i % 20) as f64);
        let cz = cz_decompose(&lat, &f, lambda)?;
        let h = lat.grid().cell_volume();
        let slack = 1.0 + 1e-12;
        if cz.g.sup_norm() > (d as f64).exp2() * lambda * slack {
            return fail(format!(
                "case {i}: sup g = {} above 2^d lambda",
                cz.g.sup_norm()
            ));
        }
        let mut measure = 0.0;
        for b in &cz.bad_parts {
            let local = f.restrict(&lat, &b.cube)?.l1_norm();
            if b.l1(h) > 2.0 * local * slack + 1e-12 {
                return fail(format!(
                    "case {i}: ||b_Q||_1 = {} above 2 ||1_Q f||_1 at {}",
                    b.l1(h),
                    b.cube
                ));
            }
            if b.integral(h).abs() > 1e-12 * (1.0 + local) {
                return fail(format!(
                    "case {i}: integral of b_Q = {} at {}",
                    b.integral(h),
                    b.cube
                ));
            }
            measure += b.cube.volume(d);
        }
        if measure > f.l1_norm() / lambda * slack {
            return fail(format!(
                "case {i}: selected measure {measure} above ||f||_1 / lambda"
            ));
        }
        if !cz.audit.passed() {
            return fail(format!("case {i}: {:?}", cz.audit));
        }
    }
    Ok(None)
}

fn slices_partition(_seed: u64) -> Outcome {
    let lat = Lattice::standard(1, -10)?;
    for r in 0..8 {
        let mut all: Vec<i32> = slice_lattice(&lat, r).into_iter().flatten().collect();
        all.sort();
        if all != (-10..=0).collect::<Vec<_>>() {
            return fail(format!("slices for r = {r} do not partition the levels"));
        }
    }
    Ok(None)
}

fn forest_audit(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -8, seed)?;
    let ambient: BTreeSet<CubeId> = lat.all_cubes().collect();
    for i in 0..10 {
        let w = random_a2_weight(&lat, 2.0 + 8.0 * i as f64, seed + i)?;
        let forest = stopping_forest(&lat, &lat.root(), &w, &ambient)?;
        let a = audit_forest(&lat, &forest, &ambient);
        if !(a.threshold_ok && a.partition_ok && a.nesting_ok) {
            return fail(format!("weight {i}: {a:?}"));
        }
    }
    Ok(None)
}

fn carleson_bound(seed: u64) -> Outcome {
    let lat = Lattice::sample(1, -6, seed)?;
    for i in 0..50 {
        let (a, mu, f) = random_carleson_instance(&lat, seed + i)?;
        let r = carleson_embedding_ratio(&lat, &a, &mu, &f)?;
        if r > 4.0 {
            return fail(format!("instance {i}: ratio {r}"));
        }
    }
    Ok(None)
}

fn representation_weights(_seed: u64) -> Outcome {
    for m in 0..8 {
        for n in 0..8 {
            let w = representation_weight(m, n, 0.5);
            if w != (-((m + n) as f64) * 0.25).exp2() {
                return fail(format!("weight ({m}, {n}) = {w}"));
            }
        }
    }
    Ok(None)
}

fn obstructed_probability_zero(seed: u64) -> Outcome {
    let lat = Lattice::standard(1, -10)?;
    let p = GoodnessParams::new(5, 0.25)?;
    let q = CubeId::new(-9, [0, 0]);
    if lat.good_to_level(&q, -2, &p) {
        return fail(format!("{q} unexpectedly good up to level -2"));
    }
    let e = pi_good_given_r(&lat, &q, -2, &p, 100, seed)?;
    if e.value != 0.0 {
        return fail(format!("pi(Q|R) = {} for an obstructed cube", e.value));
    }
    Ok(None)
}

fn fit_closed_form(_seed: u64) -> Outcome {
    let f = ols(&[1.0, 3.0], &[2.0, 8.0])?;
    if f.slope != 3.0 || f.intercept != -1.0 {
        return fail(format!(
            "two-point fit gave slope {} intercept {}",
            f.slope, f.intercept
        ));
    }
    let xs = [1.0, 2.0, 4.0, 8.0];
    let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
    let g = fit_loglog(&xs, &ys)?;
    if (g.slope - 1.5).abs() > 1e-12 || fit_loglog(&xs[..3], &ys[..3]).is_ok() {
        return fail(format!("power-law fit gave slope {}", g.slope));
    }
    Ok(None)
}

type Check = (&'static str, &'static str, fn(u64) -> Outcome);

pub const CHECKS: &[Check] = &[
    ("children_partition", "lattice", children_partition),
    (
        "long_distance_symmetric",
        "lattice",
        long_distance_symmetric,
    ),
    ("badness_monotone_in_r0", "lattice", badness_monotone),
    ("haar_round_trip", "haar", haar_round_trip),
    ("haar_parseval", "haar", haar_parseval),
    ("haar_orthonormal", "haar", haar_orthonormal),
    ("haar_fast_vs_inner", "haar", haar_fast_vs_inner),
    ("a2_properties", "signal", a2_properties),
    ("distribution_monotone", "signal", distribution_monotone),
    ("shift_normalization", "shift", shift_normalization),
    (
        "shift_adjoint_and_contraction",
        "shift",
        shift_adjoint_and_contraction,
    ),
    (
        "corrupted_shift_detected",
        "shift",
        corrupted_shift_detected,
    ),
    ("cz_properties", "decomp", cz_properties),
    ("slices_partition", "decomp", slices_partition),
    ("forest_audit", "decomp", forest_audit),
    ("carleson_bound", "decomp", carleson_bound),
    (
        "representation_weights",
        "represent",
        representation_weights,
    ),
    (
        "obstructed_probability_zero",
        "represent",
        obstructed_probability_zero,
    ),
    ("fit_closed_form", "fit", fit_closed_form),
];

pub fn run_check(check: &Check, seed: u64) -> InvariantResult {
    let (name, module, f) = check;
    let start = Instant::now();
    let (passed, witness) = match f(seed) {
        Ok(None) => (true, None),
        Ok(Some(w)) => (false, Some(w)),
        Err(e) => (false, Some(format!("error: {e:#}"))),
    };
    InvariantResult {
        name: name.to_string(),
        module: module.to_string(),
        passed,
        witness,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_invariant_suite(cfg: &ExperimentConfig) -> InvariantSummary {
    InvariantSummary {
        results: CHECKS.iter().map(|c| run_check(c, cfg.seed)).collect(),
    }
}

impl InvariantSummary {
    pub fn output(&self, cfg: &ExperimentConfig) -> RunOutput {
        let mut t = Table::new(
            "invariants",
            cfg.seed,
            vec![
                col("name", "cli", "run_invariant_suite"),
                col("module", "cli", "run_invariant_suite"),
                col("passed", "cli", "run_invariant_suite"),
                col("witness", "cli", "run_invariant_suite"),
            ],
        );
        for r in &self.results {
            let witness = r
                .witness
                .clone()
                .unwrap_or_default()
                .replace([',', '\n'], ";");
            t.push(vec![
                r.name.as_str().into(),
                r.module.as_str().into(),
                r.passed.into(),
                witness.into(),
            ]);
        }
        let results: Vec<_> = self
            .results
            .iter()
            .map(|r| json!({ "name": r.name, "module": r.module, "passed": r.passed, "witness": r.witness }))
            .collect();
        RunOutput {
            command: "invariants".into(),
            config: cfg.clone(),
            tables: vec![t],
            raw: vec![],
            summary: json!({ "results": results }),
            passed: self.passed(),
            warnings: vec![],
        }
    }
}
