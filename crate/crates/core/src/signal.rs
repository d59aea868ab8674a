//! Step functions on finest cells, weights, averages and A2 characteristics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{CubeId, Grid, Lattice};
use crate::rng;

/// Largest number of cells a step function may hold.
pub const MAX_CELLS: usize = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct StepFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if grid.len() > MAX_CELLS {
            return invalid(format!(
                "grid with {} cells is too large to store",
                grid.len()
            ));
        }
        if values.len() != grid.len() {
            return invalid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value at cell {i}"));
        }
        Ok(StepFunction { grid, values })
    }

    pub fn zeros(grid: Grid) -> Result<Self> {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Result<Self> {
        if grid.len() > MAX_CELLS {
            return invalid(format!(
                "grid with {} cells is too large to store",
                grid.len()
            ));
        }
        Self::from_values(grid, vec![c; grid.len()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize) -> f64) -> Result<Self> {
        if grid.len() > MAX_CELLS {
            return invalid(format!(
                "grid with {} cells is too large to store",
                grid.len()
            ));
        }
        Self::from_values(grid, (0..grid.len()).map(f).collect())
    }

    pub fn indicator(lat: &Lattice, q: &CubeId) -> Result<Self> {
        lat.check(q)?;
        let mut f = Self::zeros(lat.grid())?;
        for i in lat.cells(q) {
            f.values[i] = 1.0;
        }
        Ok(f)
    }

    /// Random values uniform on [-1, 1).
    pub fn random(grid: Grid, seed: u64) -> Result<Self> {
        let mut g = rng::stream(seed, &[rng::SAMPLE_TAG, 0x66]);
        Self::from_fn(grid, |_| 0.0).map(|mut f| {
            f.values
                .iter_mut()
                .for_each(|v| *v = g.gen_range(-1.0..1.0));
            f
        })
    }

    #[allow(dead_code)]
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        StepFunction { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &StepFunction) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Mismatch);
        }
        Ok(())
    }

    pub fn check_lattice(&self, lat: &Lattice) -> Result<()> {
        if self.grid != lat.grid() {
            return Err(Error::Mismatch);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepFunction {
        StepFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &StepFunction, f: impl Fn(f64, f64) -> f64) -> Result<StepFunction> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(StepFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn add(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &StepFunction) -> Result<StepFunction> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> StepFunction {
        self.map(|v| c * v)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn inner(&self, other: &StepFunction) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    /// Inner product in L2(u dx).
    pub fn inner_weighted(&self, other: &StepFunction, u: &Weight) -> Result<f64> {
        self.same_grid(other)?;
        self.same_grid(u.as_function())?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .zip(u.values())
            .map(|((a, b), w)| a * b * w)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    /// Integrals over every cube, indexed `[slot(level)][lin]`.
    pub fn cube_integrals(&self, lat: &Lattice) -> Result<Vec<Vec<f64>>> {
        self.check_lattice(lat)?;
        let h = self.grid.cell_volume();
        let scaled: Vec<f64> = self.values.iter().map(|v| v * h).collect();
        Ok(lat.fold_up(&scaled))
    }

    pub fn average(&self, lat: &Lattice, q: &CubeId) -> Result<f64> {
        self.check_lattice(lat)?;
        lat.check(q)?;
        let cells = lat.cells(q);
        Ok(cells.iter().map(|&i| self.values[i]).sum::<f64>() / cells.len() as f64)
    }

    pub fn restrict(&self, lat: &Lattice, q: &CubeId) -> Result<StepFunction> {
        self.check_lattice(lat)?;
        let mut out = StepFunction::zeros(self.grid)?;
        for i in lat.cells(q) {
            out.values[i] = self.values[i];
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("cell,value\n");
        for (i, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{:.16e}\n", i, v));
        }
        s
    }

    /// FNV-1a over the value bits, for report provenance.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

/// Mean of `f` against `mu` over `q`; zero when `mu(q) = 0`.
pub fn weighted_average(f: &StepFunction, w: &Weight, lat: &Lattice, q: &CubeId) -> Result<f64> {
    f.check_lattice(lat)?;
    f.same_grid(w.as_function())?;
    lat.check(q)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in lat.cells(q) {
        num += f.values[i] * w.values()[i];
        den += w.values()[i];
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

/// Strictly positive step function.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight(StepFunction);

impl Weight {
    pub fn new(f: StepFunction) -> Result<Self> {
        if let Some(i) = f.values.iter().position(|&v| v <= 0.0) {
            return invalid(format!(
                "weight must be positive; cell {i} has {}",
                f.values[i]
            ));
        }
        Ok(Weight(f))
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(StepFunction::from_values(grid, values)?)
    }

    pub fn lebesgue(grid: Grid) -> Result<Self> {
        Self::new(StepFunction::constant(grid, 1.0)?)
    }

    pub fn as_function(&self) -> &StepFunction {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn grid(&self) -> Grid {
        self.0.grid
    }

    pub fn reciprocal(&self) -> Weight {
        Weight(self.0.map(|v| 1.0 / v))
    }

    pub fn sqrt(&self) -> Weight {
        Weight(self.0.map(f64::sqrt))
    }

    pub fn scale(&self, c: f64) -> Result<Weight> {
        Weight::new(self.0.scale(c))
    }

    pub fn measure(&self, lat: &Lattice, q: &CubeId) -> Result<f64> {
        self.0.check_lattice(lat)?;
        lat.check(q)?;
        Ok(lat.cells(q).iter().map(|&i| self.values()[i]).sum::<f64>() * self.grid().cell_volume())
    }

    pub fn total(&self) -> f64 {
        self.0.integral()
    }

    /// Measures of every cube, indexed `[slot(level)][lin]`.
    pub fn cube_measures(&self, lat: &Lattice) -> Result<Vec<Vec<f64>>> {
        self.0.cube_integrals(lat)
    }

    /// CSV with a JSON header line carrying the dyadic A2 constant.
    pub fn to_csv(&self, lat: &Lattice) -> Result<String> {
        let a2 = a2_constant(self, lat)?;
        let header = serde_json::json!({
            "a2_constant": a2.value,
            "a2_argmax": a2.argmax.to_string(),
            "a2_kind": "dyadic A2",
            "lattice": lat.descriptor(),
            "fingerprint": self.0.fingerprint(),
        });
        Ok(format!("# {}\n{}", header, self.0.to_csv()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Report {
    pub value: f64,
    pub argmax: CubeId,
}

/// sup over lattice cubes of <u>_Q <v>_Q; ties keep the coarsest cube.
pub fn joint_a2(u: &Weight, v: &Weight, lat: &Lattice) -> Result<A2Report> {
    u.0.same_grid(&v.0)?;
    let (mu, mv) = (u.cube_measures(lat)?, v.cube_measures(lat)?);
    let mut best = A2Report {
        value: f64::NEG_INFINITY,
        argmax: lat.root(),
    };
    for k in lat.levels().rev() {
        let vol = lat.cube_volume(k);
        let s = lat.slot(k);
        for i in 0..lat.cubes_at(k) {
            let p = (mu[s][i] / vol) * (mv[s][i] / vol);
            if p > best.value {
                best = A2Report {
                    value: p,
                    argmax: lat.from_lin(k, i),
                };
            }
        }
    }
    Ok(best)
}

pub fn a2_constant(w: &Weight, lat: &Lattice) -> Result<A2Report> {
    joint_a2(w, &w.reciprocal(), lat)
}

/// |x - center|^a at cell midpoints with periodic distance.
///
/// A midpoint that coincides with the center is evaluated a quarter cell away.
pub fn power_weight(grid: Grid, a: f64, center: [f64; 2]) -> Result<Weight> {
    if a.abs() >= grid.dim() as f64 {
        return invalid(format!(
            "exponent {a} not locally integrable in dimension {}",
            grid.dim()
        ));
    }
    let h = (grid.k_min() as f64).exp2();
    let f = StepFunction::from_fn(grid, |cell| {
        let m = grid.midpoint(cell);
        let r2: f64 = (0..grid.dim())
            .map(|k| {
                let t = (m[k] - center[k]).rem_euclid(1.0);
                t.min(1.0 - t).powi(2)
            })
            .sum();
        r2.sqrt().max(h / 4.0).powf(a)
    })?;
    Weight::new(f)
}

/// Fixed random martingale cascade: each non-finest cube contributes a
/// uniform amplitude times a Haar sign pattern on its children.
fn cascade(lat: &Lattice, seed: u64) -> Vec<f64> {
    let d = lat.dim();
    let mut levels = lat.zero_levels();
    for k in lat.k_min() + 1..=0 {
        let mut g = rng::stream(seed, &[rng::WEIGHT_TAG, k as i64 as u64]);
        for q in lat.cubes(k) {
            let xi: f64 = g.gen_range(-1.0..1.0);
            let j = if d == 1 { 1 } else { g.gen_range(1..4usize) };
            for eta in 0..1usize << d {
                let c = lat.child(&q, eta);
                levels[lat.slot(k - 1)][lat.lin(&c)] = xi * crate::haar::haar_sign(j, eta, d);
            }
        }
    }
    lat.push_down(levels)
}

/// Weight exp(beta g) for a fixed random cascade g, with beta tuned so the
/// dyadic A2 constant matches `target`.
pub fn random_a2_weight(lat: &Lattice, target: f64, seed: u64) -> Result<Weight> {
    if !(target >= 1.0) {
        return invalid(format!("A2 target {target} below 1"));
    }
    let g = cascade(lat, seed);
    let make = |beta: f64| -> Result<Weight> {
        Weight::new(StepFunction::from_values(
            lat.grid(),
            g.iter().map(|x| (beta * x).exp()).collect(),
        )?)
    };
    let a2_at = |beta: f64| -> Result<f64> { Ok(a2_constant(&make(beta)?, lat)?.value) };
    if target == 1.0 {
        return make(0.0);
    }
    let mut hi = 0.5;
    while a2_at(hi)? < target {
        hi *= 2.0;
        if hi > 64.0 {
            return invalid(format!("A2 target {target} unreachable on this lattice"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = a2_at(mid)?;
        if (v / target - 1.0).abs() < 1e-3 {
            return make(mid);
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    make(0.5 * (lo + hi))
}

/// m({|f| > t}) for each threshold, under Lebesgue measure or a weight.
pub fn distribution_function(
    f: &StepFunction,
    m: Option<&Weight>,
    thresholds: &[f64],
) -> Result<Vec<f64>> {
    if thresholds.iter().any(|&t| !(t > 0.0)) || thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("thresholds must be positive and increasing");
    }
    let h = f.grid.cell_volume();
    let mut pairs: Vec<(f64, f64)> = match m {
        Some(w) => {
            f.same_grid(w.as_function())?;
            f.values
                .iter()
                .zip(w.values())
                .map(|(v, w)| (v.abs(), w * h))
                .collect()
        }
        None => f.values.iter().map(|v| (v.abs(), h)).collect(),
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut cum = Vec::with_capacity(pairs.len() + 1);
    cum.push(0.0);
    for p in &pairs {
        cum.push(cum.last().copied().unwrap_or(0.0) + p.1);
    }
    Ok(thresholds
        .iter()
        .map(|&t| {
            let n = pairs.partition_point(|p| p.0 > t);
            cum[n]
        })
        .collect())
}
