use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{CubeId, Grid};
use crate::rng;
use crate::signal::{joint_a2, StepFunction, Weight};

use super::norm::{two_weight_norm, NormOptions};
use super::ElementaryShift;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestingReport {
    pub b: f64,
    pub b_forward: f64,
    pub b_adjoint: f64,
    pub argmax_forward: CubeId,
    pub argmax_adjoint: CubeId,
    pub joint_a2: f64,
    pub r: u32,
    pub d: usize,
    pub measured_norm: f64,
    /// Two-weight bracket without the absolute constant.
    pub predicted_bracket: f64,
}

fn masked_energy(g: &[f64], w: &[f64], cells: &[usize], h: f64) -> f64 {
    cells.iter().map(|&i| g[i] * g[i] * w[i]).sum::<f64>() * h
}

/// Exact testing constants over every lattice cube, together with the measured norm.
pub fn testing_constants(
    s: &ElementaryShift,
    u: &Weight,
    v: &Weight,
    opts: &NormOptions,
) -> Result<TestingReport> {
    let lat = s.lattice();
    if u.grid() != lat.grid() || v.grid() != lat.grid() {
        return Err(Error::Mismatch);
    }
    let h = lat.grid().cell_volume();
    let cubes: Vec<CubeId> = lat.all_cubes().collect();
    let per_cube: Vec<(f64, f64)> = cubes
        .par_iter()
        .map(|q| {
            let cells = lat.cells(q);
            let mut fu = vec![0.0; lat.grid().len()];
            let mut fv = vec![0.0; lat.grid().len()];
            for &i in &cells {
                fu[i] = u.values()[i];
                fv[i] = v.values()[i];
            }
            let mu: f64 = cells.iter().map(|&i| u.values()[i]).sum::<f64>() * h;
            let nu: f64 = cells.iter().map(|&i| v.values()[i]).sum::<f64>() * h;
            let fwd = if mu > 0.0 {
                masked_energy(&s.apply_raw(&fu), v.values(), &cells, h) / mu
            } else {
                0.0
            };
            let adj = if nu > 0.0 {
                masked_energy(&s.apply_transpose_raw(&fv), u.values(), &cells, h) / nu
            } else {
                0.0
            };
            (fwd, adj)
        })
        .collect();
    let argmax = |sel: fn(&(f64, f64)) -> f64| {
        let mut best = (0.0, 0usize);
        for (i, p) in per_cube.iter().enumerate() {
            if sel(p) > best.0 {
                best = (sel(p), i);
            }
        }
        best
    };
    let (bf, i_f) = argmax(|p| p.0);
    let (ba, i_a) = argmax(|p| p.1);
    let joint = joint_a2(u, v, lat)?.value;
    let r = s.complexity();
    let norm = two_weight_norm(s, u, v, opts)?.norm;
    let b = bf.max(ba);
    Ok(TestingReport {
        b,
        b_forward: bf,
        b_adjoint: ba,
        argmax_forward: cubes[i_f],
        argmax_adjoint: cubes[i_a],
        joint_a2: joint,
        r,
        d: lat.dim(),
        measured_norm: norm,
        predicted_bracket: predicted_bounds(b, joint, 0.0, 1.0, r, 0, lat.dim())?
            .two_weight_bracket,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictedBounds {
    pub two_weight_bracket: f64,
    pub one_weight_bracket: f64,
    pub b1: f64,
    pub weak_bound: f64,
}

/// Brackets of the two-weight, one-weight and weak-type bounds, without absolute constants.
pub fn predicted_bounds(
    b: f64,
    joint: f64,
    b2: f64,
    a2: f64,
    r: u32,
    m: u32,
    d: usize,
) -> Result<PredictedBounds> {
    if b < 0.0 || joint < 0.0 || b2 < 0.0 || a2 < 1.0 {
        return invalid("bounds need non-negative inputs and a2 >= 1");
    }
    let d = d as f64;
    let r1 = r as f64 + 1.0;
    let rr = (r as f64).powi(2);
    let two = (d / 2.0).exp2() * r1 * (b.sqrt() + joint.sqrt()) + rr * joint.sqrt();
    let one = (1.5 * d).exp2() * r1 * r1 * (b2 * b2 + 1.0) * a2;
    let core = (d + 2.0).exp2() * b2 * b2;
    Ok(PredictedBounds {
        two_weight_bracket: two,
        one_weight_bracket: one,
        b1: core + 5.0,
        weak_bound: core + 1.0 + 4.0 * m as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum LambdaGrid {
    /// Supremum over all lambda, evaluated at the jumps of the distribution function.
    Exact,
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeakReport {
    pub value: f64,
    pub input_index: usize,
    pub lambda: f64,
}

/// max over inputs and lambda of lambda |{|S f| > lambda}| / ||f||_1.
pub fn weak11_constant(
    s: &ElementaryShift,
    corpus: &[StepFunction],
    grid: &LambdaGrid,
) -> Result<WeakReport> {
    let lat = s.lattice();
    let h = lat.grid().cell_volume();
    if let LambdaGrid::Values(v) = grid {
        if v.iter().any(|&l| !(l > 0.0)) {
            return invalid("lambda values must be positive");
        }
    }
    for f in corpus {
        f.check_lattice(lat)?;
    }
    let rows: Vec<WeakReport> = corpus
        .par_iter()
        .enumerate()
        .map(|(idx, f)| {
            let l1 = f.l1_norm();
            let mut best = WeakReport {
                value: 0.0,
                input_index: idx,
                lambda: 0.0,
            };
            if l1 == 0.0 {
                return best;
            }
            let mut g: Vec<f64> = s.apply_raw(f.values()).into_iter().map(f64::abs).collect();
            g.sort_by(|a, b| b.total_cmp(a));
            match grid {
                LambdaGrid::Exact => {
                    for (i, &lam) in g.iter().enumerate() {
                        let v = lam * (i + 1) as f64 * h / l1;
                        if v > best.value {
                            best = WeakReport {
                                value: v,
                                input_index: idx,
                                lambda: lam,
                            };
                        }
                    }
                }
                LambdaGrid::Values(ls) => {
                    for &lam in ls {
                        let count = g.partition_point(|&x| x > lam);
                        let v = lam * count as f64 * h / l1;
                        if v > best.value {
                            best = WeakReport {
                                value: v,
                                input_index: idx,
                                lambda: lam,
                            };
                        }
                    }
                }
            }
            best
        })
        .collect();
    Ok(rows.into_iter().fold(
        WeakReport {
            value: 0.0,
            input_index: 0,
            lambda: 0.0,
        },
        |a, b| {
            if b.value > a.value {
                b
            } else {
                a
            }
        },
    ))
}

/// Every single-cell spike of mass 1, then `n_random` signed sums of up to `max_terms` spikes, L1-normalized.
pub fn spike_corpus(
    grid: Grid,
    n_random: usize,
    max_terms: usize,
    seed: u64,
) -> Result<Vec<StepFunction>> {
    let n = grid.len();
    let h = grid.cell_volume();
    let mut out = Vec::with_capacity(n + n_random);
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0 / h;
        out.push(StepFunction::from_values(grid, v)?);
    }
    for k in 0..n_random {
        let mut g = rng::stream(seed, &[rng::SAMPLE_TAG, k as u64]);
        let terms = g.gen_range(2..=max_terms.max(2));
        let mut v = vec![0.0; n];
        for _ in 0..terms {
            let c = g.gen_range(0..n);
            v[c] += g.gen_range(-1.0..1.0);
        }
        let l1: f64 = v.iter().map(|x: &f64| x.abs()).sum::<f64>() * h;
        if l1 > 0.0 {
            out.push(StepFunction::from_values(
                grid,
                v.into_iter().map(|x| x / l1).collect(),
            )?);
        }
    }
    Ok(out)
}
