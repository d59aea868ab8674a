//! Calderon-Zygmund decomposition, scale slicing, density classes,
//! stopping-time forests with packing audits, the Carleson embedding,
//! and John-Nirenberg level-set measurements.

mod carleson;
mod jn;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{CubeId, Lattice};
use crate::signal::{StepFunction, Weight};

pub use carleson::{
    carleson_embedding_ratio, carleson_sharpness_search, random_carleson_instance, CarlesonNode,
    CarlesonSearch, CarlesonTree,
};
pub use jn::{
    final_norm_constant, jn_corona_check, jn_distribution, jn_maximal, john_nirenberg_abstract,
    p_alpha_split, shift_piece, DistributionCurve, JnCoronaReport, JnRow, JohnNirenbergCheck,
};

/// Relative slack for float comparisons of sums.
pub const SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BadPart {
    pub cube: CubeId,
    pub cells: Vec<usize>,
    pub values: Vec<f64>,
}

impl BadPart {
    pub fn to_step(&self, lat: &Lattice) -> Result<StepFunction> {
        let mut v = vec![0.0; lat.grid().len()];
        for (&c, &x) in self.cells.iter().zip(&self.values) {
            v[c] = x;
        }
        StepFunction::from_values(lat.grid(), v)
    }

    pub fn l1(&self, cell_volume: f64) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * cell_volume
    }

    pub fn integral(&self, cell_volume: f64) -> f64 {
        self.values.iter().sum::<f64>() * cell_volume
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CzAudit {
    pub g_l1_ok: bool,
    /// None when the root is selected and the sup bound does not apply.
    pub g_sup_ok: Option<bool>,
    pub b_l1_ok: bool,
    pub b_mean_ok: bool,
    pub measure_ok: bool,
    pub reconstruction_error: f64,
    pub root_selected: bool,
}

impl CzAudit {
    pub fn passed(&self) -> bool {
        self.g_l1_ok
            && self.g_sup_ok.unwrap_or(true)
            && self.b_l1_ok
            && self.b_mean_ok
            && self.measure_ok
            && self.reconstruction_error == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CzDecomposition {
    pub lambda: f64,
    pub g: StepFunction,
    pub bad_parts: Vec<BadPart>,
    pub audit: CzAudit,
}

impl CzDecomposition {
    pub fn cubes(&self) -> Vec<CubeId> {
        self.bad_parts.iter().map(|b| b.cube).collect()
    }
}

/// Maximal cubes with average |f| above lambda, top-down from the root.
pub fn cz_decompose(lat: &Lattice, f: &StepFunction, lambda: f64) -> Result<CzDecomposition> {
    if !(lambda > 0.0) {
        return invalid("lambda must be positive");
    }
    let abs = f.map(f64::abs);
    let ints = abs.cube_integrals(lat)?;
    let avg = |q: &CubeId| ints[lat.slot(q.level)][lat.lin(q)] / lat.cube_volume(q.level);
    let mut selected = Vec::new();
    let mut stack = vec![lat.root()];
    while let Some(q) = stack.pop() {
        if avg(&q) > lambda {
            selected.push(q);
        } else if q.level > lat.k_min() {
            stack.extend((0..1usize << lat.dim()).rev().map(|e| lat.child(&q, e)));
        }
    }
    selected.sort();
    let h = lat.grid().cell_volume();
    let mut g = f.values().to_vec();
    let mut bad_parts = Vec::with_capacity(selected.len());
    for q in &selected {
        let cells = lat.cells(q);
        let mean = cells.iter().map(|&c| f.values()[c]).sum::<f64>() / cells.len() as f64;
        let values: Vec<f64> = cells.iter().map(|&c| f.values()[c] - mean).collect();
        for &c in &cells {
            g[c] = mean;
        }
        bad_parts.push(BadPart {
            cube: *q,
            cells,
            values,
        });
    }
    let g = StepFunction::from_values(lat.grid(), g)?;

    let f_l1 = f.l1_norm();
    let root_selected = selected.first() == Some(&lat.root());
    let bound = (lat.dim() as f64).exp2() * lambda;
    let mut recon = g.values().to_vec();
    for b in &bad_parts {
        for (&c, &v) in b.cells.iter().zip(&b.values) {
            recon[c] += v;
        }
    }
    let reconstruction_error = recon
        .iter()
        .zip(f.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let audit = CzAudit {
        g_l1_ok: g.l1_norm() <= f_l1 * (1.0 + SLACK) + SLACK,
        g_sup_ok: if root_selected {
            None
        } else {
            Some(g.sup_norm() <= bound * (1.0 + SLACK))
        },
        b_l1_ok: bad_parts.iter().all(|b| {
            let fq: f64 = b.cells.iter().map(|&c| f.values()[c].abs()).sum::<f64>() * h;
            b.l1(h) <= 2.0 * fq * (1.0 + SLACK) + SLACK
        }),
        b_mean_ok: bad_parts.iter().all(|b| {
            let scale: f64 = b.values.iter().map(|v| v.abs()).sum::<f64>() * h;
            b.integral(h).abs() <= SLACK * scale.max(1.0)
        }),
        measure_ok: selected
            .iter()
            .map(|q| lat.cube_volume(q.level))
            .sum::<f64>()
            <= f_l1 / lambda * (1.0 + SLACK),
        reconstruction_error: if reconstruction_error <= SLACK * f.sup_norm().max(1.0) {
            0.0
        } else {
            reconstruction_error
        },
        root_selected,
    };
    Ok(CzDecomposition {
        lambda,
        g,
        bad_parts,
        audit,
    })
}

/// Family j holds the levels l with (-l) mod (r+1) == j.
pub fn slice_lattice(lat: &Lattice, r: u32) -> Vec<Vec<i32>> {
    let m = r as i32 + 1;
    (0..m)
        .map(|j| {
            lat.levels()
                .rev()
                .filter(|l| (-l).rem_euclid(m) == j)
                .collect()
        })
        .collect()
}

/// Cubes of a level family, coarsest first.
pub fn slice_cubes(lat: &Lattice, levels: &[i32]) -> Vec<CubeId> {
    levels.iter().flat_map(|&k| lat.cubes(k)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityClasses {
    pub classes: BTreeMap<u32, Vec<CubeId>>,
    /// <w>_Q <w^{-1}>_Q per cube, indexed `[slot(level)][lin]`.
    pub products: Vec<Vec<f64>>,
}

impl DensityClasses {
    pub fn class_of(&self, lat: &Lattice, q: &CubeId) -> u32 {
        class_index(self.products[lat.slot(q.level)][lat.lin(q)])
    }
}

/// k with 2^k <= p < 2^{k+1}, clamped at 0 for rounding below 1.
pub fn class_index(p: f64) -> u32 {
    if p < 2.0 {
        return 0;
    }
    let mut k = p.log2().floor() as i32;
    while (k as f64 + 1.0).exp2() <= p {
        k += 1;
    }
    while k > 0 && (k as f64).exp2() > p {
        k -= 1;
    }
    k as u32
}

pub fn density_classes(w: &Weight, lat: &Lattice) -> Result<DensityClasses> {
    let mw = w.cube_measures(lat)?;
    let mi = w.reciprocal().cube_measures(lat)?;
    let mut classes: BTreeMap<u32, Vec<CubeId>> = BTreeMap::new();
    let mut products = Vec::with_capacity(mw.len());
    for k in lat.levels() {
        let s = lat.slot(k);
        let vol = lat.cube_volume(k);
        let row: Vec<f64> = (0..lat.cubes_at(k))
            .map(|i| (mw[s][i] / vol) * (mi[s][i] / vol))
            .collect();
        products.push(row);
    }
    for q in lat.all_cubes() {
        let p = products[lat.slot(q.level)][lat.lin(&q)];
        classes.entry(class_index(p)).or_default().push(q);
    }
    Ok(DensityClasses { classes, products })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoppingForest {
    pub root: CubeId,
    pub generations: Vec<Vec<CubeId>>,
    /// Stopping parent of every stopping cube except the root.
    pub parent: BTreeMap<CubeId, CubeId>,
    /// P(Q) for every stopping cube Q.
    pub partition: BTreeMap<CubeId, Vec<CubeId>>,
    /// w(Q)/|Q| for every stopping cube.
    pub density: BTreeMap<CubeId, f64>,
}

impl StoppingForest {
    pub fn stopping_cubes(&self) -> impl Iterator<Item = &CubeId> {
        self.generations.iter().flatten()
    }

    pub fn children(&self) -> BTreeMap<CubeId, Vec<CubeId>> {
        let mut out: BTreeMap<CubeId, Vec<CubeId>> = BTreeMap::new();
        for (c, p) in &self.parent {
            out.entry(*p).or_default().push(*c);
        }
        out
    }

    pub fn to_csv(&self, lat: &Lattice) -> String {
        let mut s = String::from("generation,level,cube_index,density,partition_size\n");
        for (g, gen) in self.generations.iter().enumerate() {
            for q in gen {
                s.push_str(&format!(
                    "{},{},{},{:.16e},{}\n",
                    g,
                    q.level,
                    lat.lin(q),
                    self.density[q],
                    self.partition.get(q).map_or(0, Vec::len)
                ));
            }
        }
        s
    }
}

/// Generations of maximal ambient cubes whose density exceeds four times
/// that of their stopping parent, and the induced partition of the ambient cubes.
pub fn stopping_forest(
    lat: &Lattice,
    q0: &CubeId,
    w: &Weight,
    ambient: &BTreeSet<CubeId>,
) -> Result<StoppingForest> {
    if !ambient.contains(q0) {
        return invalid(format!("root {q0} is not in the ambient collection"));
    }
    let mw = w.cube_measures(lat)?;
    let dens = |q: &CubeId| mw[lat.slot(q.level)][lat.lin(q)] / lat.cube_volume(q.level);
    let mut generations = vec![vec![*q0]];
    let mut parent = BTreeMap::new();
    let mut density = BTreeMap::new();
    density.insert(*q0, dens(q0));
    loop {
        let mut next = Vec::new();
        for r in generations.last().expect("non-empty") {
            let threshold = 4.0 * dens(r);
            let mut stack: Vec<CubeId> = if r.level > lat.k_min() {
                lat.children(r)?.into_iter().rev().collect()
            } else {
                vec![]
            };
            while let Some(q) = stack.pop() {
                if ambient.contains(&q) && dens(&q) > threshold {
                    parent.insert(q, *r);
                    density.insert(q, dens(&q));
                    next.push(q);
                } else if q.level > lat.k_min() {
                    stack.extend((0..1usize << lat.dim()).rev().map(|e| lat.child(&q, e)));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort();
        generations.push(next);
    }
    let stops: BTreeSet<CubeId> = generations.iter().flatten().copied().collect();
    let mut partition: BTreeMap<CubeId, Vec<CubeId>> =
        stops.iter().map(|q| (*q, Vec::new())).collect();
    for a in ambient {
        if !lat.contains(q0, a) {
            continue;
        }
        let mut q = *a;
        loop {
            if stops.contains(&q) {
                partition.get_mut(&q).expect("stopping cube").push(*a);
                break;
            }
            q = lat.parent(&q)?;
        }
    }
    Ok(StoppingForest {
        root: *q0,
        generations,
        parent,
        partition,
        density,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PackingReport {
    pub lebesgue_ratio: f64,
    pub l2_overlap_ratio: f64,
    pub weighted_ratio: f64,
    pub argmax_lebesgue: CubeId,
    pub argmax_l2: CubeId,
    pub argmax_weighted: CubeId,
}

impl PackingReport {
    pub fn within_bounds(&self) -> bool {
        self.lebesgue_ratio <= 4.0 / 3.0 * (1.0 + SLACK)
            && self.l2_overlap_ratio <= 2.0 * (1.0 + SLACK)
            && self.weighted_ratio <= 16.0 / 3.0 * (1.0 + SLACK)
    }
}

/// Maxima over stopping cubes R of the three packing ratios; the weighted
/// ratio is normalized by [w]_{A2} w(R).
pub fn packing_report(lat: &Lattice, forest: &StoppingForest, w: &Weight) -> Result<PackingReport> {
    let a2 = crate::signal::a2_constant(w, lat)?.value;
    let mw = w.cube_measures(lat)?;
    let children = forest.children();
    let d = lat.dim();
    let mut rep = PackingReport {
        lebesgue_ratio: 0.0,
        l2_overlap_ratio: 0.0,
        weighted_ratio: 0.0,
        argmax_lebesgue: forest.root,
        argmax_l2: forest.root,
        argmax_weighted: forest.root,
    };
    for r in forest.stopping_cubes() {
        let (mut vol, mut sq, mut wsum) = (0.0, 0.0, 0.0);
        let mut stack = vec![(*r, 1u32)];
        while let Some((q, depth)) = stack.pop() {
            let v = q.volume(d);
            vol += v;
            sq += v * (2 * depth - 1) as f64;
            wsum += mw[lat.slot(q.level)][lat.lin(&q)];
            if let Some(cs) = children.get(&q) {
                stack.extend(cs.iter().map(|c| (*c, depth + 1)));
            }
        }
        let rv = r.volume(d);
        let wr = mw[lat.slot(r.level)][lat.lin(r)];
        let (l, q2, wt) = (vol / rv, sq.sqrt() / rv.sqrt(), wsum / (a2 * wr));
        if l > rep.lebesgue_ratio {
            rep.lebesgue_ratio = l;
            rep.argmax_lebesgue = *r;
        }
        if q2 > rep.l2_overlap_ratio {
            rep.l2_overlap_ratio = q2;
            rep.argmax_l2 = *r;
        }
        if wt > rep.weighted_ratio {
            rep.weighted_ratio = wt;
            rep.argmax_weighted = *r;
        }
    }
    Ok(rep)
}

/// Self-similar weight on the standard lattice whose stopping generations
/// nearly saturate the 4/3 packing bound: inside every chosen cube, a fraction
/// `1 - eta` of the mass sits on `chosen` spread subcubes `bits` levels down.
pub fn packing_cascade_weight(lat: &Lattice, bits: u32, chosen: usize, eta: f64) -> Result<Weight> {
    if lat.dim() != 1 {
        return invalid("packing cascade is one-dimensional");
    }
    let slots = 1usize << bits;
    if chosen == 0 || 4 * chosen > slots || !(0.0..1.0).contains(&eta) {
        return invalid("cascade needs 0 < 4 chosen <= 2^bits and 0 <= eta < 1");
    }
    let p = chosen as f64 / slots as f64;
    let hot = (1.0 - eta) / p;
    let cold = eta / (1.0 - p);
    let n = lat.grid().len();
    let mut v = vec![1.0; n];
    let mut stack = vec![(0usize, n, 1.0f64)];
    while let Some((start, len, dens)) = stack.pop() {
        if len < slots {
            for x in v.iter_mut().skip(start).take(len) {
                *x = dens;
            }
            continue;
        }
        let sub = len / slots;
        for s in 0..slots {
            let is_hot = s % 4 == 0 && s / 4 < chosen;
            let d = dens * if is_hot { hot } else { cold };
            if is_hot {
                stack.push((start + s * sub, sub, d));
            } else {
                for x in v.iter_mut().skip(start + s * sub).take(sub) {
                    *x = d;
                }
            }
        }
    }
    Weight::from_values(lat.grid(), v)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ForestAudit {
    pub threshold_ok: bool,
    pub partition_ok: bool,
    pub nesting_ok: bool,
}

/// Threshold rule, exact partition of the ambient cubes inside the root, strict nesting.
pub fn audit_forest(
    lat: &Lattice,
    forest: &StoppingForest,
    ambient: &BTreeSet<CubeId>,
) -> ForestAudit {
    let threshold_ok = forest
        .parent
        .iter()
        .all(|(c, p)| forest.density[c] > 4.0 * forest.density[p]);
    let nesting_ok = forest
        .parent
        .iter()
        .all(|(c, p)| c.level < p.level && lat.contains(p, c));
    let mut seen: BTreeMap<CubeId, usize> = BTreeMap::new();
    for cubes in forest.partition.values() {
        for q in cubes {
            *seen.entry(*q).or_default() += 1;
        }
    }
    let inside: Vec<&CubeId> = ambient
        .iter()
        .filter(|a| lat.contains(&forest.root, a))
        .collect();
    let partition_ok = seen.values().all(|&c| c == 1) && inside.len() == seen.len();
    ForestAudit {
        threshold_ok,
        partition_ok,
        nesting_ok,
    }
}

pub(crate) fn mismatch<T>() -> Result<T> {
    Err(Error::Mismatch)
}
