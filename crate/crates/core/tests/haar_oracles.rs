use dyadic_lab::haar::{
    analyze, standard_haar, synthesize, weighted_delta, weighted_expectation, HaarCoefficients,
};
use dyadic_lab::lattice::{CubeId, Lattice};
use dyadic_lab::signal::{StepFunction, Weight};

fn random_weight(lat: &Lattice, seed: u64) -> Weight {
    let f = StepFunction::random(lat.grid(), seed).unwrap();
    Weight::new(f.map(|v| 0.2 + v.abs())).unwrap()
}

#[test]
fn round_trip_and_parseval_at_1024() {
    for seed in 0..3 {
        let lat = Lattice::sample(1, -10, seed).unwrap();
        let f = StepFunction::random(lat.grid(), 100 + seed).unwrap();
        let c = analyze(&lat, &f).unwrap();
        let back = synthesize(&c).unwrap();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "round trip {err}");
        let energy = c.energy();
        assert!((energy - f.l2_norm().powi(2)).abs() <= 1e-10);
    }
}

#[test]
fn round_trip_two_dimensions() {
    let lat = Lattice::sample(2, -5, 4).unwrap();
    let f = StepFunction::random(lat.grid(), 9).unwrap();
    let back = synthesize(&analyze(&lat, &f).unwrap()).unwrap();
    assert!(f.sub(&back).unwrap().sup_norm() <= 1e-10);
}

#[test]
fn fast_transform_matches_inner_products_at_256() {
    let lat = Lattice::sample(1, -8, 21).unwrap();
    let f = StepFunction::random(lat.grid(), 5).unwrap();
    let c = analyze(&lat, &f).unwrap();
    for (q, j, v) in c.iter() {
        let h = standard_haar(&lat, &q, j).unwrap();
        let direct = f.inner(&h).unwrap();
        assert!((direct - v).abs() <= 1e-10, "{q:?} {j}: {direct} vs {v}");
    }
    assert!((c.root_average() - f.integral()).abs() <= 1e-12);
}

#[test]
fn orthonormality_at_1024() {
    let lat = Lattice::sample(1, -10, 3).unwrap();
    let cubes: Vec<CubeId> = lat.all_cubes().filter(|q| q.level > lat.k_min()).collect();
    // all pairs among a spread of levels and positions
    let picked: Vec<CubeId> = cubes.iter().step_by(37).copied().collect();
    let hs: Vec<StepFunction> = picked
        .iter()
        .map(|q| standard_haar(&lat, q, 1).unwrap())
        .collect();
    for (i, a) in hs.iter().enumerate() {
        for (j, b) in hs.iter().enumerate() {
            let ip = a.inner(b).unwrap();
            let want = (i == j) as u8 as f64;
            assert!(
                (ip - want).abs() <= 1e-10,
                "<h_{:?}, h_{:?}> = {ip}",
                picked[i],
                picked[j]
            );
        }
    }
}

#[test]
fn orthonormality_two_dimensions() {
    let lat = Lattice::sample(2, -3, 8).unwrap();
    let mut hs = Vec::new();
    for q in lat.all_cubes().filter(|q| q.level > lat.k_min()) {
        for j in 1..4 {
            hs.push(standard_haar(&lat, &q, j).unwrap());
        }
    }
    for (i, a) in hs.iter().enumerate() {
        for (j, b) in hs.iter().enumerate().skip(i) {
            let want = (i == j) as u8 as f64;
            assert!((a.inner(b).unwrap() - want).abs() <= 1e-10);
        }
    }
}

#[test]
fn single_unit_coefficient() {
    let lat = Lattice::standard(1, -6).unwrap();
    let h = standard_haar(&lat, &lat.root(), 1).unwrap();
    let c = analyze(&lat, &h).unwrap();
    let nonzero: Vec<_> = c.iter().filter(|(_, _, v)| v.abs() > 1e-12).collect();
    assert_eq!(nonzero.len(), 1);
    assert_eq!(nonzero[0].0, lat.root());
    assert!((nonzero[0].2 - 1.0).abs() < 1e-12);
}

#[test]
fn zero_coefficients_synthesize_to_root_average() {
    let lat = Lattice::standard(1, -4).unwrap();
    let mut c = HaarCoefficients::zeros(&lat);
    c.set_root_average(2.5);
    let f = synthesize(&c).unwrap();
    assert!(f.values().iter().all(|v| (v - 2.5).abs() < 1e-15));
}

#[test]
fn weighted_martingale_reconstruction() {
    let lat = Lattice::sample(1, -6, 2).unwrap();
    let mu = random_weight(&lat, 3);
    let f = StepFunction::random(lat.grid(), 4).unwrap();
    let mut sum = weighted_expectation(&f, &mu, &lat, &lat.root()).unwrap();
    for q in lat.all_cubes().filter(|q| q.level > lat.k_min()) {
        sum = sum
            .add(&weighted_delta(&f, &mu, &lat, &q).unwrap())
            .unwrap();
    }
    assert!(sum.sub(&f).unwrap().sup_norm() <= 1e-10);
}

#[test]
fn weighted_martingale_orthogonality() {
    let lat = Lattice::sample(1, -5, 6).unwrap();
    let mu = random_weight(&lat, 7);
    let f = StepFunction::random(lat.grid(), 8).unwrap();
    let g = StepFunction::random(lat.grid(), 9).unwrap();
    let cubes: Vec<CubeId> = lat.all_cubes().filter(|q| q.level > lat.k_min()).collect();
    let df: Vec<_> = cubes
        .iter()
        .map(|q| weighted_delta(&f, &mu, &lat, q).unwrap())
        .collect();
    let dg: Vec<_> = cubes
        .iter()
        .map(|q| weighted_delta(&g, &mu, &lat, q).unwrap())
        .collect();
    for i in 0..cubes.len() {
        for j in 0..cubes.len() {
            if i != j {
                assert!(df[i].inner_weighted(&dg[j], &mu).unwrap().abs() <= 1e-10);
            }
        }
    }
}
