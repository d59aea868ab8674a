use std::collections::BTreeSet;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::signal::{a2_constant, Weight};

use super::ElementaryShift;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            tol: 1e-8,
            max_iter: 10_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    pub norm: f64,
    pub iterations: usize,
    /// Relative change of the Rayleigh quotient at the last step.
    pub residual: f64,
    /// ||G x - lambda x|| / lambda for the returned vector.
    pub eigen_residual: f64,
    pub converged: bool,
    pub seed: u64,
    pub a2: Option<f64>,
    pub weight_fingerprint: Option<String>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest singular value of x -> v^{1/2} S(u^{1/2} x), the norm of
/// S_mu: L2(mu) -> L2(nu) for d mu = u dx and d nu = v dx.
pub fn two_weight_norm(
    s: &ElementaryShift,
    u: &Weight,
    v: &Weight,
    opts: &NormOptions,
) -> Result<NormReport> {
    let grid = s.lattice().grid();
    if u.grid() != grid || v.grid() != grid {
        return Err(Error::Mismatch);
    }
    let su: Vec<f64> = u.values().iter().map(|x| x.sqrt()).collect();
    let sv: Vec<f64> = v.values().iter().map(|x| x.sqrt()).collect();
    let b = |x: &[f64]| -> Vec<f64> {
        let f: Vec<f64> = x.iter().zip(&su).map(|(a, w)| a * w).collect();
        s.apply_raw(&f)
            .into_iter()
            .zip(&sv)
            .map(|(a, w)| a * w)
            .collect()
    };
    let bt = |y: &[f64]| -> Vec<f64> {
        let g: Vec<f64> = y.iter().zip(&sv).map(|(a, w)| a * w).collect();
        s.apply_transpose_raw(&g)
            .into_iter()
            .zip(&su)
            .map(|(a, w)| a * w)
            .collect()
    };
    let mut g = rng::stream(opts.seed, &[rng::START_TAG]);
    let mut x: Vec<f64> = (0..grid.len()).map(|_| g.gen_range(-1.0..1.0)).collect();
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|a| *a /= nx);
    let mut lambda = 0.0;
    let mut report = NormReport {
        norm: 0.0,
        iterations: 0,
        residual: f64::INFINITY,
        eigen_residual: f64::INFINITY,
        converged: false,
        seed: opts.seed,
        a2: None,
        weight_fingerprint: None,
    };
    let mut best: f64 = 0.0;
    for it in 1..=opts.max_iter {
        let y = b(&x);
        let z = bt(&y);
        let new = dot(&y, &y);
        report.iterations = it;
        if new == 0.0 {
            report.norm = 0.0;
            report.residual = 0.0;
            report.eigen_residual = 0.0;
            report.converged = true;
            return Ok(report);
        }
        best = best.max(new);
        let er: f64 = z
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - new * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / new;
        report.residual = (new - lambda).abs() / new;
        report.eigen_residual = er;
        lambda = new;
        let nz = dot(&z, &z).sqrt();
        x = z.into_iter().map(|a| a / nz).collect();
        if report.residual <= opts.tol && it > 2 {
            report.converged = true;
            break;
        }
    }
    report.norm = best.sqrt();
    Ok(report)
}

/// ||S||_{L2(w)}, i.e. the two-weight norm with u = w^{-1}, v = w.
pub fn operator_norm(s: &ElementaryShift, w: &Weight, opts: &NormOptions) -> Result<NormReport> {
    let mut r = two_weight_norm(s, &w.reciprocal(), w, opts)?;
    r.a2 = Some(a2_constant(w, s.lattice())?.value);
    r.weight_fingerprint = Some(w.as_function().fingerprint());
    Ok(r)
}

/// max of ||S_A||_2 over the full active set and `samples` random halves of it.
pub fn b2_audit(s: &ElementaryShift, samples: usize, seed: u64, opts: &NormOptions) -> Result<f64> {
    let lebesgue = Weight::lebesgue(s.lattice().grid())?;
    let active: Vec<_> = s.active_cubes().into_iter().collect();
    let mut best = two_weight_norm(s, &lebesgue, &lebesgue, opts)?.norm;
    for i in 0..samples {
        let a: BTreeSet<_> = active
            .iter()
            .enumerate()
            .filter(|(k, _)| rng::derive(seed, &[rng::SHIFT_TAG, i as u64, *k as u64]) & 1 == 1)
            .map(|(_, q)| *q)
            .collect();
        best = best.max(two_weight_norm(&s.restrict(&a), &lebesgue, &lebesgue, opts)?.norm);
    }
    Ok(best)
}
