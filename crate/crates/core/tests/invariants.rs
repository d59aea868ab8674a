use std::collections::BTreeSet;

use proptest::prelude::*;

use dyadic_lab::decomp::{
    audit_forest, carleson_embedding_ratio, class_index, cz_decompose, random_carleson_instance,
    slice_lattice, stopping_forest,
};
use dyadic_lab::haar::{analyze, synthesize};
use dyadic_lab::lattice::{CubeId, GoodnessParams, Lattice};
use dyadic_lab::represent::representation_weight;
use dyadic_lab::shift::{random_shift, RandomShiftKind};
use dyadic_lab::signal::{
    a2_constant, distribution_function, random_a2_weight, StepFunction, Weight,
};

fn lattice() -> impl Strategy<Value = Lattice> {
    (1usize..=2, any::<u64>())
        .prop_map(|(d, seed)| Lattice::sample(d, if d == 1 { -6 } else { -3 }, seed).unwrap())
}

fn lattice_and_values() -> impl Strategy<Value = (Lattice, Vec<f64>)> {
    lattice().prop_flat_map(|lat| {
        let n = lat.grid().len();
        (Just(lat), prop::collection::vec(-100.0f64..100.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn children_partition_parent(lat in lattice()) {
        for q in lat.all_cubes().filter(|q| q.level > lat.k_min()) {
            let mut cells: Vec<usize> = Vec::new();
            for c in lat.children(&q).unwrap() {
                prop_assert_eq!(lat.parent(&c).unwrap(), q);
                prop_assert!(lat.contains(&q, &c));
                cells.extend(lat.cells(&c));
            }
            cells.sort();
            let mut want = lat.cells(&q);
            want.sort();
            prop_assert_eq!(cells, want);
        }
    }

    #[test]
    fn badness_monotone_in_r0(seed in any::<u64>(), r0 in 1u32..7, gamma in 0.05f64..0.9) {
        let lat = Lattice::sample(1, -9, seed).unwrap();
        let lo = GoodnessParams::new(r0, gamma).unwrap();
        let hi = GoodnessParams::new(r0 + 1, gamma).unwrap();
        for q in lat.all_cubes() {
            if lat.is_bad(&q, &hi) {
                prop_assert!(lat.is_bad(&q, &lo));
            }
        }
    }

    #[test]
    fn long_distance_symmetric(lat in lattice(), i in any::<usize>(), j in any::<usize>()) {
        let cubes: Vec<CubeId> = lat.all_cubes().collect();
        let (q, r) = (cubes[i % cubes.len()], cubes[j % cubes.len()]);
        prop_assert_eq!(lat.long_distance(&q, &r), lat.long_distance(&r, &q));
        prop_assert!(lat.long_distance(&q, &r) >= q.side() + r.side());
    }

    #[test]
    fn haar_round_trip((lat, v) in lattice_and_values()) {
        let f = StepFunction::from_values(lat.grid(), v).unwrap();
        let c = analyze(&lat, &f).unwrap();
        let back = synthesize(&c).unwrap();
        prop_assert!(f.sub(&back).unwrap().sup_norm() <= 1e-10 * (1.0 + f.sup_norm()));
        prop_assert!((c.energy() - f.l2_norm().powi(2)).abs() <= 1e-9 * (1.0 + c.energy()));
    }

    #[test]
    fn a2_at_least_one_and_scale_free(seed in any::<u64>(), target in 1.5f64..80.0, c in 0.01f64..100.0) {
        let lat = Lattice::sample(1, -7, seed).unwrap();
        let w = random_a2_weight(&lat, target, seed).unwrap();
        let a = a2_constant(&w, &lat).unwrap().value;
        prop_assert!(a >= 1.0 - 1e-12);
        let b = a2_constant(&w.scale(c).unwrap(), &lat).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9 * a);
    }

    #[test]
    fn distribution_non_increasing((lat, v) in lattice_and_values(), ts in prop::collection::vec(0.0f64..120.0, 2..20)) {
        let mut ts = ts;
        ts.sort_by(f64::total_cmp);
        let f = StepFunction::from_values(lat.grid(), v).unwrap();
        let curve = distribution_function(&f, None, &ts).unwrap();
        prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(curve.iter().all(|&m| (0.0..=1.0 + 1e-12).contains(&m)));
    }

    #[test]
    fn shift_linear_and_adjoint(seed in any::<u64>(), m in 0u32..3, n in 0u32..3, a in -3.0f64..3.0) {
        let lat = Lattice::sample(1, -6, seed).unwrap();
        let s = random_shift(&lat, m, n, RandomShiftKind::Dense, seed, None).unwrap();
        prop_assert!(s.audit().passed);
        let f = StepFunction::random(lat.grid(), seed ^ 1).unwrap();
        let g = StepFunction::random(lat.grid(), seed ^ 2).unwrap();
        let lhs = s.apply(&f.scale(a).add(&g).unwrap()).unwrap();
        let rhs = s.apply(&f).unwrap().scale(a).add(&s.apply(&g).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().sup_norm() <= 1e-10 * (1.0 + lhs.sup_norm()));
        let x = s.apply(&f).unwrap().inner(&g).unwrap();
        let y = f.inner(&s.apply_transpose(&g).unwrap()).unwrap();
        prop_assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()));
        prop_assert!(s.apply(&f).unwrap().l2_norm() <= f.l2_norm() * (1.0 + 1e-9));
    }

    #[test]
    fn cz_properties((lat, v) in lattice_and_values(), scale in 1.01f64..50.0) {
        let f = StepFunction::from_values(lat.grid(), v).unwrap();
        prop_assume!(f.l1_norm() > 0.0);
        let lambda = f.l1_norm() * scale;
        let cz = cz_decompose(&lat, &f, lambda).unwrap();
        prop_assert!(cz.audit.passed(), "{:?}", cz.audit);
        let measure: f64 = cz.bad_parts.iter().map(|b| b.cube.volume(lat.dim())).sum();
        prop_assert!(measure <= f.l1_norm() / lambda * (1.0 + 1e-12));
    }

    #[test]
    fn slices_partition_levels(k in 1i32..20, r in 0u32..8) {
        let lat = Lattice::standard(1, -k).unwrap();
        let fams = slice_lattice(&lat, r);
        let mut all: Vec<i32> = fams.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (-k..=0).collect::<Vec<_>>());
        for f in &fams {
            prop_assert!(f.windows(2).all(|w| w[0] - w[1] == r as i32 + 1));
        }
    }

    #[test]
    fn forest_audits(seed in any::<u64>(), target in 1.5f64..60.0) {
        let lat = Lattice::sample(1, -7, seed).unwrap();
        let w = random_a2_weight(&lat, target, seed).unwrap();
        let ambient: BTreeSet<CubeId> = lat.all_cubes().collect();
        let forest = stopping_forest(&lat, &lat.root(), &w, &ambient).unwrap();
        let a = audit_forest(&lat, &forest, &ambient);
        prop_assert!(a.threshold_ok && a.partition_ok && a.nesting_ok);
    }

    #[test]
    fn carleson_bound(seed in any::<u64>()) {
        let lat = Lattice::sample(1, -6, seed).unwrap();
        let (a, mu, f) = random_carleson_instance(&lat, seed).unwrap();
        prop_assert!(carleson_embedding_ratio(&lat, &a, &mu, &f).unwrap() <= 4.0);
    }

    #[test]
    fn class_index_brackets(p in 1.0f64..1e12) {
        let k = class_index(p);
        if p >= 2.0 {
            prop_assert!((k as f64).exp2() <= p && p < (k as f64 + 1.0).exp2());
        } else {
            prop_assert_eq!(k, 0);
        }
    }

    #[test]
    fn representation_weight_formula(m in 0u32..20, n in 0u32..20, alpha in 0.01f64..1.0) {
        let w = representation_weight(m, n, alpha);
        prop_assert_eq!(w, (-((m + n) as f64) * alpha / 2.0).exp2());
        prop_assert!(w > 0.0 && w <= 1.0);
    }
}

#[test]
fn lebesgue_weight_has_unit_characteristic() {
    let lat = Lattice::sample(2, -4, 1).unwrap();
    assert_eq!(
        a2_constant(&Weight::lebesgue(lat.grid()).unwrap(), &lat)
            .unwrap()
            .value,
        1.0
    );
}
