use std::collections::BTreeSet;

use nalgebra::DMatrix;

use dyadic_lab::haar::standard_haar;
use dyadic_lab::lattice::{CubeId, Lattice};
use dyadic_lab::shift::{
    b2_audit, haar_multiplier, operator_norm, paraproduct, petermichl_shift, predicted_bounds,
    random_haar_multiplier, random_shift, spike_corpus, testing_constants, two_weight_norm,
    weak11_constant, ElementaryShift, LambdaGrid, NormOptions, RandomShiftKind,
};
use dyadic_lab::signal::{power_weight, random_a2_weight, StepFunction, Weight};

fn tight() -> NormOptions {
    NormOptions {
        tol: 1e-14,
        max_iter: 200_000,
        seed: 1,
    }
}

fn random_weight(lat: &Lattice, seed: u64) -> Weight {
    let f = StepFunction::random(lat.grid(), seed).unwrap();
    Weight::new(f.map(|v| 0.1 + 2.0 * v.abs())).unwrap()
}

fn dense_apply(s: &ElementaryShift, f: &StepFunction) -> Vec<f64> {
    let n = f.len();
    let m = s.dense_matrix().unwrap();
    (0..n)
        .map(|x| (0..n).map(|y| m[x * n + y] * f.values()[y]).sum())
        .collect()
}

/// Largest singular value of diag(v^1/2) A diag(u^1/2) with A the dense cell matrix.
fn svd_norm(s: &ElementaryShift, u: &Weight, v: &Weight) -> f64 {
    let n = u.values().len();
    let a = s.dense_matrix().unwrap();
    let m = DMatrix::from_fn(n, n, |x, y| {
        v.values()[x].sqrt() * a[x * n + y] * u.values()[y].sqrt()
    });
    m.singular_values().max()
}

fn shifts(lat: &Lattice) -> Vec<ElementaryShift> {
    let mut out = vec![random_haar_multiplier(lat, 3).unwrap()];
    if lat.dim() == 1 {
        out.push(petermichl_shift(lat).unwrap());
    }
    for (m, n) in [(0, 1), (2, 1), (1, 3)] {
        out.push(random_shift(lat, m, n, RandomShiftKind::Dense, 5 + m as u64, None).unwrap());
        out.push(random_shift(lat, m, n, RandomShiftKind::Sparse, 9 + n as u64, None).unwrap());
    }
    out
}

#[test]
fn matrix_free_matches_dense_kernel() {
    for lat in [
        Lattice::sample(1, -8, 1).unwrap(),
        Lattice::sample(2, -4, 2).unwrap(),
    ] {
        let f = StepFunction::random(lat.grid(), 4).unwrap();
        for s in shifts(&lat) {
            let fast = s.apply(&f).unwrap();
            let dense = dense_apply(&s, &f);
            let err = fast
                .values()
                .iter()
                .zip(&dense)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10, "({}, {}) error {err}", s.m(), s.n());
        }
    }
}

#[test]
fn weighted_duality() {
    let lat = Lattice::sample(1, -7, 3).unwrap();
    let (mu, nu) = (random_weight(&lat, 1), random_weight(&lat, 2));
    let f = StepFunction::random(lat.grid(), 3).unwrap();
    let g = StepFunction::random(lat.grid(), 4).unwrap();
    for s in shifts(&lat) {
        let lhs = s
            .apply_weighted(&mu, &f)
            .unwrap()
            .inner_weighted(&g, &nu)
            .unwrap();
        let rhs = f
            .inner_weighted(&s.adjoint_apply(&nu, &g).unwrap(), &mu)
            .unwrap();
        assert!(
            (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
            "{lhs} vs {rhs}"
        );
    }
}

#[test]
fn power_iteration_matches_dense_svd() {
    let lat = Lattice::sample(1, -8, 4).unwrap();
    let w = power_weight(lat.grid(), 0.6, [0.3, 0.0]).unwrap();
    let lebesgue = Weight::lebesgue(lat.grid()).unwrap();
    for s in shifts(&lat) {
        let r = operator_norm(&s, &w, &tight()).unwrap();
        let oracle = svd_norm(&s, &w.reciprocal(), &w);
        assert!(
            (r.norm - oracle).abs() <= 1e-6 * oracle.max(1.0),
            "({}, {}) {} vs {oracle}",
            s.m(),
            s.n(),
            r.norm
        );
        let plain = two_weight_norm(&s, &lebesgue, &lebesgue, &tight())
            .unwrap()
            .norm;
        assert!((plain - svd_norm(&s, &lebesgue, &lebesgue)).abs() <= 1e-6);
    }
}

#[test]
fn two_weight_norm_matches_dense_svd() {
    let lat = Lattice::sample(1, -7, 5).unwrap();
    let (u, v) = (random_weight(&lat, 6), random_weight(&lat, 7));
    for s in shifts(&lat) {
        let r = two_weight_norm(&s, &u, &v, &tight()).unwrap();
        let oracle = svd_norm(&s, &u, &v);
        assert!((r.norm - oracle).abs() <= 1e-6 * oracle.max(1.0));
    }
}

#[test]
fn norm_is_scale_invariant() {
    let lat = Lattice::sample(1, -8, 6).unwrap();
    let w = random_a2_weight(&lat, 20.0, 3).unwrap();
    let s = petermichl_shift(&lat).unwrap();
    let a = operator_norm(&s, &w, &tight()).unwrap().norm;
    let b = operator_norm(&s, &w.scale(37.0).unwrap(), &tight())
        .unwrap()
        .norm;
    assert!((a - b).abs() <= 1e-6 * a);
}

#[test]
fn identity_multiplier() {
    let lat = Lattice::sample(1, -8, 7).unwrap();
    let s = haar_multiplier(&lat, |_| 1.0).unwrap();
    let f = StepFunction::random(lat.grid(), 8).unwrap();
    let mean = f.integral();
    let out = s.apply(&f).unwrap();
    assert!(out.sub(&f.map(|v| v - mean)).unwrap().l2_norm() <= 1e-10);
    let w = Weight::lebesgue(lat.grid()).unwrap();
    assert!((operator_norm(&s, &w, &NormOptions::default()).unwrap().norm - 1.0).abs() <= 1e-6);
}

#[test]
fn multipliers_contract() {
    let lat = Lattice::sample(2, -4, 8).unwrap();
    for seed in 0..5 {
        let s = random_haar_multiplier(&lat, seed).unwrap();
        let f = StepFunction::random(lat.grid(), 100 + seed).unwrap();
        assert!(s.apply(&f).unwrap().l2_norm() <= f.l2_norm() + 1e-12);
    }
}

#[test]
fn petermichl_on_root_haar() {
    let lat = Lattice::sample(1, -6, 9).unwrap();
    let root = lat.root();
    let out = petermichl_shift(&lat)
        .unwrap()
        .apply(&standard_haar(&lat, &root, 1).unwrap())
        .unwrap();
    let (lo, hi) = (lat.child(&root, 0), lat.child(&root, 1));
    let want = standard_haar(&lat, &lo, 1)
        .unwrap()
        .sub(&standard_haar(&lat, &hi, 1).unwrap())
        .unwrap()
        .scale(0.5f64.sqrt());
    assert!(out.sub(&want).unwrap().sup_norm() <= 1e-10);
}

#[test]
fn paraproduct_of_one_telescopes() {
    let lat = Lattice::sample(1, -7, 10).unwrap();
    let b = StepFunction::random(lat.grid(), 11).unwrap();
    let p = paraproduct(&lat, &b).unwrap();
    let one = StepFunction::constant(lat.grid(), 1.0).unwrap();
    let mean = b.integral();
    let want = b.map(|v| (v - mean) * p.scale);
    assert!(p.shift.apply(&one).unwrap().sub(&want).unwrap().sup_norm() <= 1e-10);
    let flat = paraproduct(&lat, &StepFunction::constant(lat.grid(), 3.0).unwrap()).unwrap();
    assert_eq!(flat.shift.term_count(), 0);
}

#[test]
fn restrictions_do_not_increase_norm() {
    let lat = Lattice::sample(1, -7, 12).unwrap();
    let b = StepFunction::random(lat.grid(), 13).unwrap();
    let p = paraproduct(&lat, &b).unwrap().shift;
    let lebesgue = Weight::lebesgue(lat.grid()).unwrap();
    let full = two_weight_norm(&p, &lebesgue, &lebesgue, &tight())
        .unwrap()
        .norm;
    let active: Vec<CubeId> = p.active_cubes().into_iter().collect();
    for k in 0..10u64 {
        let a: BTreeSet<CubeId> = active
            .iter()
            .enumerate()
            .filter(|(i, _)| (*i as u64 * 7 + k).is_multiple_of(3))
            .map(|(_, q)| *q)
            .collect();
        let part = two_weight_norm(&p.restrict(&a), &lebesgue, &lebesgue, &tight())
            .unwrap()
            .norm;
        assert!(part <= full + 1e-8, "{part} > {full}");
    }
}

#[test]
fn restrict_extremes() {
    let lat = Lattice::sample(1, -6, 14).unwrap();
    let s = random_shift(&lat, 1, 2, RandomShiftKind::Dense, 3, None).unwrap();
    assert_eq!(s.restrict(&s.active_cubes()), s);
    let empty = s.restrict(&BTreeSet::new());
    assert_eq!(empty.term_count(), 0);
    let f = StepFunction::random(lat.grid(), 1).unwrap();
    assert!(empty.apply(&f).unwrap().sup_norm() == 0.0);
}

#[test]
fn b2_audit_of_normalized_shifts() {
    let lat = Lattice::sample(1, -6, 15).unwrap();
    for s in shifts(&lat) {
        let b2 = b2_audit(&s, 100, 4, &NormOptions::default()).unwrap();
        assert!(b2 <= 1.0 + 1e-8, "({}, {}) B2 {b2}", s.m(), s.n());
    }
}

#[test]
fn testing_constants_match_dense_oracle() {
    let lat = Lattice::sample(1, -6, 16).unwrap();
    let s = petermichl_shift(&lat).unwrap();
    let one = Weight::lebesgue(lat.grid()).unwrap();
    let rep = testing_constants(&s, &one, &one, &tight()).unwrap();
    let m = s.dense_matrix().unwrap();
    let n = lat.grid().len();
    let h = lat.grid().cell_volume();
    let mut fwd: f64 = 0.0;
    let mut adj: f64 = 0.0;
    for q in lat.all_cubes() {
        let cells = lat.cells(&q);
        let inside: BTreeSet<usize> = cells.iter().copied().collect();
        let mut ef = 0.0;
        let mut ea = 0.0;
        for &x in &cells {
            let sf: f64 = (0..n)
                .filter(|y| inside.contains(y))
                .map(|y| m[x * n + y])
                .sum();
            let sa: f64 = (0..n)
                .filter(|y| inside.contains(y))
                .map(|y| m[y * n + x])
                .sum();
            ef += sf * sf * h;
            ea += sa * sa * h;
        }
        fwd = fwd.max(ef / q.volume(1));
        adj = adj.max(ea / q.volume(1));
    }
    assert!((rep.b_forward - fwd).abs() <= 1e-10);
    assert!((rep.b_adjoint - adj).abs() <= 1e-10);
    assert!(rep.b <= rep.measured_norm.powi(2) + 1e-8);
}

#[test]
fn testing_constant_below_squared_norm() {
    let lat = Lattice::sample(1, -7, 17).unwrap();
    for seed in 0..4 {
        let u = random_a2_weight(&lat, 10.0, seed).unwrap();
        let v = random_a2_weight(&lat, 10.0, seed + 50).unwrap();
        for s in shifts(&lat) {
            let rep = testing_constants(&s, &u, &v, &tight()).unwrap();
            assert!(rep.b <= rep.measured_norm.powi(2) + 1e-8);
        }
    }
    let zero = ElementaryShift::zero(&lat, 0, 0);
    let one = Weight::lebesgue(lat.grid()).unwrap();
    assert_eq!(
        testing_constants(&zero, &one, &one, &tight()).unwrap().b,
        0.0
    );
}

#[test]
fn predicted_bound_arithmetic() {
    let p = predicted_bounds(0.0, 0.0, 1.0, 1.0, 0, 0, 1).unwrap();
    assert_eq!(p.two_weight_bracket, 0.0);
    assert_eq!(p.b1, 13.0);
    assert_eq!(
        predicted_bounds(0.0, 0.0, 1.0, 1.0, 2, 2, 1)
            .unwrap()
            .weak_bound,
        17.0
    );
}

#[test]
fn weak_type_bounds_on_spikes() {
    let lat = Lattice::sample(1, -8, 18).unwrap();
    let corpus = spike_corpus(lat.grid(), 64, 6, 2).unwrap();
    for (m, n) in [(0, 0), (0, 1), (1, 0), (2, 3), (3, 1)] {
        let s = random_shift(&lat, m, n, RandomShiftKind::Dense, 40 + m as u64, None).unwrap();
        let b2 = b2_audit(&s, 20, 1, &NormOptions::default()).unwrap();
        let bound = predicted_bounds(0.0, 0.0, b2, 1.0, s.complexity(), m, 1)
            .unwrap()
            .weak_bound;
        let weak = weak11_constant(&s, &corpus, &LambdaGrid::Exact).unwrap();
        assert!(
            weak.value <= bound,
            "({m}, {n}) weak {} bound {bound}",
            weak.value
        );
        let level = lat.k_min() + 4;
        let one = random_shift(&lat, m, n, RandomShiftKind::Dense, 60, Some(&[level])).unwrap();
        let b2 = b2_audit(&one, 20, 1, &NormOptions::default()).unwrap();
        let sep = weak11_constant(&one, &corpus, &LambdaGrid::Exact).unwrap();
        assert!(sep.value <= 8.0 * b2 * b2 + 5.0);
    }
    let zero = ElementaryShift::zero(&lat, 0, 0);
    assert_eq!(
        weak11_constant(&zero, &corpus, &LambdaGrid::Exact)
            .unwrap()
            .value,
        0.0
    );
}
