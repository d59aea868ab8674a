use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::fit::{fit_semilog2, FitResult};
use crate::lattice::{CubeId, Lattice};
use crate::rng;
use crate::shift::ElementaryShift;
use crate::signal::{StepFunction, Weight};

use super::{density_classes, mismatch, slice_cubes, stopping_forest, SLACK};

/// f_A = S_A(w), the sum of f_Q(x) = ∫ a_Q(x, y) w(y) dy over Q in A.
pub fn shift_piece(s: &ElementaryShift, w: &Weight, a: &BTreeSet<CubeId>) -> Result<StepFunction> {
    if w.grid() != s.lattice().grid() {
        return mismatch();
    }
    s.restrict(a).apply(w.as_function())
}

/// f*_P(x) = sup over Q ∋ x with level in `levels`, and the virtual cube below
/// the finest lattice level, of |sum_{R in P, Q ⊊ R} f_R(x)|.
pub fn jn_maximal(
    s: &ElementaryShift,
    w: &Weight,
    p: &BTreeSet<CubeId>,
    levels: &[i32],
) -> Result<StepFunction> {
    let lat = s.lattice();
    if w.grid() != lat.grid() {
        return mismatch();
    }
    let n = lat.grid().len();
    let mut by_level: BTreeMap<i32, BTreeSet<CubeId>> = BTreeMap::new();
    for q in p {
        lat.check(q)?;
        by_level.entry(q.level).or_default().insert(*q);
    }
    let pieces: BTreeMap<i32, Vec<f64>> = by_level
        .iter()
        .map(|(&k, a)| Ok((k, s.restrict(a).apply(w.as_function())?.into_values())))
        .collect::<Result<_>>()?;
    let mut order: Vec<i32> = levels
        .iter()
        .chain(pieces.keys())
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    order.reverse();
    let record: BTreeSet<i32> = levels.iter().copied().collect();
    let mut out = vec![0.0; n];
    for (x, o) in out.iter_mut().enumerate() {
        let (mut cum, mut best) = (0.0f64, 0.0f64);
        for k in &order {
            if record.contains(k) {
                best = best.max(cum.abs());
            }
            if let Some(f) = pieces.get(k) {
                cum += f[x];
            }
        }
        *o = best.max(cum.abs());
    }
    StepFunction::from_values(lat.grid(), out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributionCurve {
    pub cube: CubeId,
    pub density: f64,
    pub b1: f64,
    pub t: Vec<f64>,
    /// |{x in R: f* > 16 t w(R)/|R|}|.
    pub lebesgue: Vec<f64>,
    pub bound_lebesgue: Vec<f64>,
    /// w^{-1}({x in R: f* > 20 t w(R)/|R|}).
    pub w_inverse: Vec<f64>,
    pub bound_w_inverse: Vec<f64>,
    pub pass_lebesgue: Vec<bool>,
    pub pass_w_inverse: Vec<bool>,
    /// Slope of log2 |{f* > tau}| against tau / density over a grid below sup f*.
    pub tail_slope: Option<FitResult>,
}

impl DistributionCurve {
    pub fn passed(&self) -> bool {
        self.pass_lebesgue
            .iter()
            .chain(&self.pass_w_inverse)
            .all(|&b| b)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "t,lebesgue,bound_lebesgue,w_inverse,bound_w_inverse,pass_lebesgue,pass_w_inverse\n",
        );
        for i in 0..self.t.len() {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                self.t[i],
                self.lebesgue[i],
                self.bound_lebesgue[i],
                self.w_inverse[i],
                self.bound_w_inverse[i],
                self.pass_lebesgue[i],
                self.pass_w_inverse[i]
            ));
        }
        s
    }
}

const TAIL_POINTS: usize = 16;

pub fn jn_distribution(
    lat: &Lattice,
    fstar: &StepFunction,
    w: &Weight,
    r: &CubeId,
    b1: f64,
    ts: &[f64],
) -> Result<DistributionCurve> {
    fstar.check_lattice(lat)?;
    if w.grid() != lat.grid() {
        return mismatch();
    }
    if !(b1 >= 1.0) {
        return invalid("B1 must be at least 1");
    }
    let h = lat.grid().cell_volume();
    let cells = lat.cells(r);
    let vol = lat.cube_volume(r.level);
    let density = w.measure(lat, r)? / vol;
    let winv_r: f64 = cells.iter().map(|&c| 1.0 / w.values()[c]).sum::<f64>() * h;
    let mut vals: Vec<(f64, f64)> = cells
        .iter()
        .map(|&c| (fstar.values()[c], h / w.values()[c]))
        .collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut suffix = Vec::with_capacity(vals.len());
    let mut acc = 0.0;
    for v in &vals {
        acc += v.1;
        suffix.push(acc);
    }
    let count_above = |tau: f64| vals.partition_point(|v| v.0 > tau);
    let leb = |tau: f64| count_above(tau) as f64 * h;
    let winv = |tau: f64| match count_above(tau) {
        0 => 0.0,
        c => suffix[c - 1],
    };
    let decay = |t: f64| (-t / (2.0 * b1)).exp2();
    let mut curve = DistributionCurve {
        cube: *r,
        density,
        b1,
        t: ts.to_vec(),
        lebesgue: vec![],
        bound_lebesgue: vec![],
        w_inverse: vec![],
        bound_w_inverse: vec![],
        pass_lebesgue: vec![],
        pass_w_inverse: vec![],
        tail_slope: None,
    };
    for &t in ts {
        let (l, bl) = (leb(16.0 * t * density), 2.0 * 2f64.sqrt() * decay(t) * vol);
        let (m, bm) = (winv(20.0 * t * density), 24.0 * decay(t) * winv_r);
        curve.lebesgue.push(l);
        curve.bound_lebesgue.push(bl);
        curve.w_inverse.push(m);
        curve.bound_w_inverse.push(bm);
        curve.pass_lebesgue.push(l <= bl * (1.0 + SLACK));
        curve.pass_w_inverse.push(m <= bm * (1.0 + SLACK));
    }
    let top = vals.first().map_or(0.0, |v| v.0);
    if top > 0.0 {
        let xs: Vec<f64> = (0..TAIL_POINTS)
            .map(|i| i as f64 / TAIL_POINTS as f64 * top / density)
            .collect();
        let ys: Vec<f64> = xs.iter().map(|&x| leb(x * density)).collect();
        curve.tail_slope = fit_semilog2(&xs, &ys).ok();
    }
    Ok(curve)
}

/// P_alpha(R): members of P(R) with 4^{-alpha} dens(R) < dens(Q) <= 4^{1-alpha} dens(R).
pub fn p_alpha_split(
    lat: &Lattice,
    w: &Weight,
    r: &CubeId,
    partition: &[CubeId],
) -> Result<BTreeMap<u32, Vec<CubeId>>> {
    let dens = |q: &CubeId| -> Result<f64> { Ok(w.measure(lat, q)? / lat.cube_volume(q.level)) };
    let dr = dens(r)?;
    let mut out: BTreeMap<u32, Vec<CubeId>> = BTreeMap::new();
    for q in partition {
        let ratio = dens(q)? / dr;
        if ratio > 4.0 * (1.0 + SLACK) {
            return invalid(format!("cube {q} has density above four times that of {r}"));
        }
        let mut alpha = (-ratio.log(4.0)).floor().max(-1.0) as i32 + 1;
        while alpha > 0 && ratio > 4f64.powi(1 - alpha) {
            alpha -= 1;
        }
        while ratio <= 4f64.powi(-alpha) {
            alpha += 1;
        }
        out.entry(alpha.max(0) as u32).or_default().push(*q);
    }
    Ok(out)
}

/// ||f_{P(R)}||_2 / (B1 w(R)/|R| |R|^{1/2}).
pub fn final_norm_constant(
    s: &ElementaryShift,
    w: &Weight,
    r: &CubeId,
    partition: &[CubeId],
    b1: f64,
) -> Result<f64> {
    let lat = s.lattice();
    let f = shift_piece(s, w, &partition.iter().copied().collect())?;
    let vol = lat.cube_volume(r.level);
    let density = w.measure(lat, r)? / vol;
    Ok(f.l2_norm() / (b1 * density * vol.sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JnRow {
    pub slice: usize,
    pub class: u32,
    pub root: CubeId,
    pub cube: CubeId,
    pub partition_size: usize,
    pub alpha_classes: usize,
    pub pass_lebesgue: bool,
    pub pass_w_inverse: bool,
    pub domination: bool,
    pub max_lebesgue_ratio: f64,
    pub max_w_inverse_ratio: f64,
    pub c1: f64,
    pub tail_slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JnCoronaReport {
    pub b1: f64,
    pub rows: Vec<JnRow>,
    pub passed: bool,
    pub max_c1: f64,
}

/// Slices the lattice by the shift complexity, splits every slice into density
/// classes, builds the stopping forests from the maximal cubes of each class and
/// measures f*_{P(R)} against both level-set bounds for every stopping cube R.
pub fn jn_corona_check(
    s: &ElementaryShift,
    w: &Weight,
    b1: f64,
    ts: &[f64],
) -> Result<JnCoronaReport> {
    let lat = s.lattice();
    let classes = density_classes(w, lat)?;
    let active = s.active_cubes();
    let mut rows = Vec::new();
    for (j, levels) in super::slice_lattice(lat, s.complexity()).iter().enumerate() {
        let slice: Vec<CubeId> = slice_cubes(lat, levels);
        let mut by_class: BTreeMap<u32, BTreeSet<CubeId>> = BTreeMap::new();
        for q in slice {
            by_class
                .entry(classes.class_of(lat, &q))
                .or_default()
                .insert(q);
        }
        for (k, ambient) in &by_class {
            let roots: Vec<CubeId> = ambient
                .iter()
                .filter(|q| {
                    let mut c = **q;
                    while c.level < 0 {
                        c = lat.parent(&c).expect("below root");
                        if ambient.contains(&c) {
                            return false;
                        }
                    }
                    true
                })
                .copied()
                .collect();
            for root in roots {
                let forest = stopping_forest(lat, &root, w, ambient)?;
                for (r, part) in &forest.partition {
                    let p: BTreeSet<CubeId> = part
                        .iter()
                        .filter(|q| active.contains(q))
                        .copied()
                        .collect();
                    let fstar = jn_maximal(s, w, &p, levels)?;
                    let f = shift_piece(s, w, &p)?;
                    let domination = f
                        .values()
                        .iter()
                        .zip(fstar.values())
                        .all(|(a, b)| a.abs() <= b * (1.0 + SLACK) + SLACK);
                    let curve = jn_distribution(lat, &fstar, w, r, b1, ts)?;
                    let ratio = |m: &[f64], b: &[f64]| {
                        m.iter().zip(b).map(|(x, y)| x / y).fold(0.0, f64::max)
                    };
                    rows.push(JnRow {
                        slice: j,
                        class: *k,
                        root,
                        cube: *r,
                        partition_size: part.len(),
                        alpha_classes: p_alpha_split(lat, w, r, part)?.len(),
                        pass_lebesgue: curve.pass_lebesgue.iter().all(|&b| b),
                        pass_w_inverse: curve.pass_w_inverse.iter().all(|&b| b),
                        domination,
                        max_lebesgue_ratio: ratio(&curve.lebesgue, &curve.bound_lebesgue),
                        max_w_inverse_ratio: ratio(&curve.w_inverse, &curve.bound_w_inverse),
                        c1: final_norm_constant(
                            s,
                            w,
                            r,
                            &p.iter().copied().collect::<Vec<_>>(),
                            b1,
                        )?,
                        tail_slope: curve.tail_slope.map(|f| f.slope),
                    });
                }
            }
        }
    }
    let passed = rows
        .iter()
        .all(|r| r.pass_lebesgue && r.pass_w_inverse && r.domination);
    let max_c1 = rows.iter().map(|r| r.c1).fold(0.0, f64::max);
    Ok(JnCoronaReport {
        b1,
        rows,
        passed,
        max_c1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JohnNirenbergCheck {
    pub delta: f64,
    pub t: Vec<f64>,
    /// max over R of |{phi*_R > t}| / (delta^{(t-1)/2} |R|).
    pub worst_ratio: Vec<f64>,
    pub passed: bool,
}

/// Synthetic family on the standard lattice: phi_Q constant on the children of Q
/// with values uniform in [-amplitude, amplitude], active with probability `density`.
/// Measures delta at t = 1 and checks the level sets on the t-grid.
pub fn john_nirenberg_abstract(
    lat: &Lattice,
    amplitude: f64,
    density: f64,
    seed: u64,
    ts: &[f64],
) -> Result<JohnNirenbergCheck> {
    if !(amplitude > 0.0 && amplitude <= 1.0) || !(0.0..=1.0).contains(&density) {
        return invalid("amplitude must lie in (0, 1] and density in [0, 1]");
    }
    let mut g = rng::stream(seed, &[rng::SAMPLE_TAG, 0x7a]);
    let d = lat.dim();
    let n = lat.grid().len();
    // phi per level as cell values
    let mut phi: Vec<Vec<f64>> = lat.levels().rev().map(|_| vec![0.0; n]).collect();
    for k in (lat.k_min() + 1..=0).rev() {
        let slot = lat.slot(k);
        for q in lat.cubes(k) {
            if !g.gen_bool(density) {
                continue;
            }
            for eta in 0..1usize << d {
                let v = amplitude * g.gen_range(-1.0..=1.0);
                for c in lat.cells(&lat.child(&q, eta)) {
                    phi[slot][c] = v;
                }
            }
        }
    }
    // star[R][cell]: phi*_R on the cells of R
    let h = lat.grid().cell_volume();
    let mut level_sets: Vec<(f64, Vec<f64>)> = Vec::new();
    for r in lat.all_cubes() {
        let cells = lat.cells(&r);
        let star: Vec<f64> = cells
            .iter()
            .map(|&c| {
                let (mut cum, mut best) = (0.0f64, 0.0f64);
                for k in (lat.k_min()..=r.level).rev() {
                    best = best.max(cum.abs());
                    cum += phi[lat.slot(k)][c];
                }
                best.max(cum.abs())
            })
            .collect();
        level_sets.push((cells.len() as f64 * h, star));
    }
    let measure = |star: &[f64], t: f64| {
        star.iter().filter(|&&v| v > t).count() as f64 * lat.grid().cell_volume()
    };
    let delta = level_sets
        .iter()
        .map(|(vol, star)| measure(star, 1.0) / vol)
        .fold(0.0, f64::max);
    let worst_ratio: Vec<f64> = ts
        .iter()
        .map(|&t| {
            level_sets
                .iter()
                .map(|(vol, star)| {
                    let m = measure(star, t);
                    if m == 0.0 {
                        0.0
                    } else {
                        m / (delta.powf((t - 1.0) / 2.0) * vol)
                    }
                })
                .fold(0.0, f64::max)
        })
        .collect();
    let passed = delta < 1.0 && worst_ratio.iter().all(|&r| r <= 1.0 + SLACK);
    Ok(JohnNirenbergCheck {
        delta,
        t: ts.to_vec(),
        worst_ratio,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift::petermichl_shift;

    #[test]
    fn empty_collection_gives_zero() {
        let lat = Lattice::standard(1, -6).unwrap();
        let s = petermichl_shift(&lat).unwrap();
        let w = Weight::lebesgue(lat.grid()).unwrap();
        let f = jn_maximal(&s, &w, &BTreeSet::new(), &[0, -2, -4, -6]).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
    }

    #[test]
    fn single_cube_matches_enumeration() {
        let lat = Lattice::standard(1, -6).unwrap();
        let s = petermichl_shift(&lat).unwrap();
        let w = Weight::from_values(lat.grid(), (0..64).map(|i| 1.0 + (i % 7) as f64).collect())
            .unwrap();
        let q = lat.from_lin(-2, 1);
        let p: BTreeSet<CubeId> = [q].into();
        let fstar = jn_maximal(&s, &w, &p, &[0, -2, -4, -6]).unwrap();
        let fq = shift_piece(&s, &w, &p).unwrap();
        for x in 0..64 {
            // Q at level 0 or -2 containing x: nothing strictly above; finer levels see f_q
            let expect = if lat.cells(&q).contains(&x) {
                fq.values()[x].abs()
            } else {
                0.0
            };
            assert!((fstar.values()[x] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn p_alpha_bands() {
        let lat = Lattice::standard(1, -4).unwrap();
        let w = Weight::from_values(lat.grid(), (0..16).map(|i| 0.1 + i as f64).collect()).unwrap();
        let r = lat.root();
        let cubes: Vec<CubeId> = lat
            .all_cubes()
            .filter(|q| w.measure(&lat, q).unwrap() / q.volume(1) <= 4.0 * w.total())
            .collect();
        let split = p_alpha_split(&lat, &w, &r, &cubes).unwrap();
        let dr = w.total();
        let mut n = 0;
        for (a, qs) in &split {
            for q in qs {
                let ratio = w.measure(&lat, q).unwrap() / q.volume(1) / dr;
                assert!(ratio > 4f64.powi(-(*a as i32)) && ratio <= 4f64.powi(1 - *a as i32));
                n += 1;
            }
        }
        assert_eq!(n, cubes.len());
    }

    #[test]
    fn zero_maximal_function_trivial_curve() {
        let lat = Lattice::standard(1, -5).unwrap();
        let w = Weight::lebesgue(lat.grid()).unwrap();
        let z = StepFunction::zeros(lat.grid()).unwrap();
        let ts: Vec<f64> = (1..=40).map(f64::from).collect();
        let c = jn_distribution(&lat, &z, &w, &lat.root(), 13.0, &ts).unwrap();
        assert!(c.passed());
        assert!(c.lebesgue.iter().all(|&v| v == 0.0));
        assert!(c.tail_slope.is_none());
    }
}
