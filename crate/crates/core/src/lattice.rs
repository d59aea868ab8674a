//! Finite dyadic lattices on the periodic unit cube.
//!
//! Positions are integers in units of finest cells. A lattice with finest
//! level `k_min` has `L = 2^{-k_min}` cells per axis; a level-`k` cube has
//! side `S_k = 2^{k - k_min}` cells and its grid is translated by
//! `O_k = sum_{k_min <= j < k} omega_j 2^{j - k_min}` cells.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;

/// Deepest supported finest level.
pub const MIN_LEVEL: i32 = -52;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubeId {
    pub level: i32,
    pub index: [u64; 2],
}

impl CubeId {
    pub fn new(level: i32, index: [u64; 2]) -> Self {
        CubeId { level, index }
    }

    pub fn side(&self) -> f64 {
        (self.level as f64).exp2()
    }

    pub fn volume(&self, dim: usize) -> f64 {
        ((self.level as f64) * dim as f64).exp2()
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.level, self.index[0], self.index[1])
    }
}

/// Finest-cell resolution shared by every lattice of a given depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    k_min: i32,
}

impl Grid {
    pub fn new(dim: usize, k_min: i32) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Dimension(dim));
        }
        if !(MIN_LEVEL..=-1).contains(&k_min) {
            return Err(Error::LevelRange(k_min));
        }
        Ok(Grid { dim, k_min })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_min(&self) -> i32 {
        self.k_min
    }

    /// Cells per axis.
    pub fn side(&self) -> u64 {
        1u64 << (-self.k_min)
    }

    /// Total number of finest cells.
    pub fn len(&self) -> usize {
        (self.side() as usize).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        ((self.k_min * self.dim as i32) as f64).exp2()
    }

    pub fn cell_coords(&self, cell: usize) -> [u64; 2] {
        let l = self.side() as usize;
        if self.dim == 1 {
            [cell as u64, 0]
        } else {
            [(cell % l) as u64, (cell / l) as u64]
        }
    }

    pub fn cell_index(&self, coords: [u64; 2]) -> usize {
        coords[0] as usize + self.side() as usize * coords[1] as usize
    }

    /// Midpoint of a cell in [0,1)^d.
    pub fn midpoint(&self, cell: usize) -> [f64; 2] {
        let c = self.cell_coords(cell);
        let h = (self.k_min as f64).exp2();
        [(c[0] as f64 + 0.5) * h, (c[1] as f64 + 0.5) * h]
    }
}

/// Parameters of the good/bad cube classification.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessParams {
    pub r0: u32,
    pub gamma: f64,
}

impl GoodnessParams {
    pub fn new(r0: u32, gamma: f64) -> Result<Self> {
        if r0 == 0 {
            return invalid("r0 must be positive");
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return invalid(format!("gamma {gamma} outside (0,1)"));
        }
        Ok(GoodnessParams { r0, gamma })
    }

    /// Uses gamma = alpha / (2 (d + alpha)).
    pub fn from_alpha(dim: usize, alpha: f64, r0: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return invalid(format!("alpha {alpha} outside (0,1]"));
        }
        Self::new(r0, gamma_for(dim, alpha))
    }
}

pub fn gamma_for(dim: usize, alpha: f64) -> f64 {
    alpha / (2.0 * (dim as f64 + alpha))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lattice {
    grid: Grid,
    omega: Vec<[u8; 2]>,
    offsets: Vec<[u64; 2]>,
}

impl Lattice {
    fn from_bits(grid: Grid, omega: Vec<[u8; 2]>) -> Self {
        let n = omega.len();
        let mut offsets = vec![[0u64; 2]; n + 1];
        for j in 0..n {
            for a in 0..2 {
                offsets[j + 1][a] = offsets[j][a] + ((omega[j][a] as u64) << j);
            }
        }
        Lattice {
            grid,
            omega,
            offsets,
        }
    }

    pub fn with_shifts(dim: usize, k_min: i32, omega: Vec<[u8; 2]>) -> Result<Self> {
        let grid = Grid::new(dim, k_min)?;
        if omega.len() != (-k_min) as usize {
            return invalid(format!(
                "expected {} shift vectors, got {}",
                -k_min,
                omega.len()
            ));
        }
        let mut omega = omega;
        for w in omega.iter_mut() {
            if w[0] > 1 || w[1] > 1 {
                return invalid("shift bits must be 0 or 1");
            }
            if dim == 1 {
                w[1] = 0;
            }
        }
        Ok(Self::from_bits(grid, omega))
    }

    pub fn standard(dim: usize, k_min: i32) -> Result<Self> {
        Self::with_shifts(dim, k_min, vec![[0, 0]; (-k_min.min(0)) as usize])
    }

    /// Each omega_j is uniform on {0,1}^d, drawn from the stream keyed by (seed, j).
    pub fn sample(dim: usize, k_min: i32, seed: u64) -> Result<Self> {
        let grid = Grid::new(dim, k_min)?;
        let omega = (k_min..0).map(|j| draw_bits(dim, seed, j)).collect();
        Ok(Self::from_bits(grid, omega))
    }

    /// Copy with omega_j redrawn for every j >= level.
    pub fn resample_from(&self, level: i32, seed: u64) -> Self {
        let mut omega = self.omega.clone();
        for j in level.max(self.k_min())..0 {
            omega[(j - self.k_min()) as usize] = draw_bits(self.dim(), seed, j);
        }
        Self::from_bits(self.grid, omega)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn k_min(&self) -> i32 {
        self.grid.k_min
    }

    pub fn omega(&self, j: i32) -> Result<[u8; 2]> {
        if j < self.k_min() || j >= 0 {
            return Err(Error::LevelOverflow {
                level: j,
                k_min: self.k_min(),
            });
        }
        Ok(self.omega[(j - self.k_min()) as usize])
    }

    pub fn omegas(&self) -> &[[u8; 2]] {
        &self.omega
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.k_min()..=0
    }

    /// Index of `level` in per-level storage.
    pub fn slot(&self, level: i32) -> usize {
        (level - self.k_min()) as usize
    }

    /// Cubes per axis at `level`.
    pub fn count(&self, level: i32) -> u64 {
        1u64 << (-level)
    }

    /// Side of a level-`level` cube in finest cells.
    pub fn side_cells(&self, level: i32) -> u64 {
        1u64 << (level - self.k_min())
    }

    pub fn cubes_at(&self, level: i32) -> usize {
        (self.count(level) as usize).pow(self.dim() as u32)
    }

    pub fn cube_volume(&self, level: i32) -> f64 {
        ((level * self.dim() as i32) as f64).exp2()
    }

    pub fn root(&self) -> CubeId {
        CubeId::new(0, [0, 0])
    }

    pub fn check(&self, q: &CubeId) -> Result<()> {
        if q.level < self.k_min() || q.level > 0 {
            return Err(Error::LevelOverflow {
                level: q.level,
                k_min: self.k_min(),
            });
        }
        let c = self.count(q.level);
        if q.index[0] >= c || q.index[1] >= c || (self.dim() == 1 && q.index[1] != 0) {
            return invalid(format!("cube index out of range: {q}"));
        }
        Ok(())
    }

    pub fn lin(&self, q: &CubeId) -> usize {
        q.index[0] as usize + self.count(q.level) as usize * q.index[1] as usize
    }

    pub fn from_lin(&self, level: i32, lin: usize) -> CubeId {
        let c = self.count(level) as usize;
        if self.dim() == 1 {
            CubeId::new(level, [lin as u64, 0])
        } else {
            CubeId::new(level, [(lin % c) as u64, (lin / c) as u64])
        }
    }

    pub fn cubes(&self, level: i32) -> impl Iterator<Item = CubeId> + '_ {
        (0..self.cubes_at(level)).map(move |i| self.from_lin(level, i))
    }

    /// All cubes, coarsest level first.
    pub fn all_cubes(&self) -> impl Iterator<Item = CubeId> + '_ {
        (self.k_min()..=0).rev().flat_map(move |k| self.cubes(k))
    }

    fn offset(&self, level: i32) -> [u64; 2] {
        self.offsets[self.slot(level)]
    }

    /// First cell of the cube along each axis.
    pub fn origin(&self, q: &CubeId) -> [u64; 2] {
        let l = self.grid.side();
        let s = self.side_cells(q.level);
        let o = self.offset(q.level);
        [(o[0] + q.index[0] * s) % l, (o[1] + q.index[1] * s) % l]
    }

    /// Cube at `level` containing the finest cell with coordinates `cell`.
    pub fn cube_at(&self, level: i32, cell: [u64; 2]) -> CubeId {
        let l = self.grid.side();
        let s = self.side_cells(level);
        let o = self.offset(level);
        let mut index = [0u64; 2];
        for a in 0..self.dim() {
            index[a] = ((cell[a] % l + l - o[a]) % l) / s;
        }
        CubeId::new(level, index)
    }

    pub fn child(&self, q: &CubeId, eta: usize) -> CubeId {
        let k = q.level - 1;
        let c = self.count(k);
        let w = self.offset_bits(k);
        let mut index = [0u64; 2];
        for a in 0..self.dim() {
            let e = ((eta >> a) & 1) as u64;
            index[a] = (2 * q.index[a] + w[a] + e) % c;
        }
        CubeId::new(k, index)
    }

    fn offset_bits(&self, j: i32) -> [u64; 2] {
        let w = self.omega[(j - self.k_min()) as usize];
        [w[0] as u64, w[1] as u64]
    }

    /// Children in the order eta = eta_1 + 2 eta_2.
    pub fn children(&self, q: &CubeId) -> Result<Vec<CubeId>> {
        self.check(q)?;
        if q.level <= self.k_min() {
            return Err(Error::LevelOverflow {
                level: q.level - 1,
                k_min: self.k_min(),
            });
        }
        Ok((0..1usize << self.dim())
            .map(|e| self.child(q, e))
            .collect())
    }

    pub fn parent(&self, q: &CubeId) -> Result<CubeId> {
        self.ancestor(q, 1)
    }

    pub fn ancestor(&self, q: &CubeId, order: u32) -> Result<CubeId> {
        self.check(q)?;
        let level = q.level + order as i32;
        if level > 0 {
            return Err(Error::LevelOverflow {
                level,
                k_min: self.k_min(),
            });
        }
        Ok(self.cube_at(level, self.origin(q)))
    }

    /// Position eta of `q` among the children of its parent.
    pub fn child_position(&self, q: &CubeId) -> usize {
        let k = q.level;
        let c = self.count(k);
        let w = self.offset_bits(k);
        let mut eta = 0;
        for a in 0..self.dim() {
            eta |= ((((q.index[a] + c - w[a]) % c) & 1) as usize) << a;
        }
        eta
    }

    /// Linear index of the parent of the level-`level` cube with linear index `lin`.
    pub fn parent_lin(&self, level: i32, lin: usize) -> usize {
        let c = self.count(level) as usize;
        let pc = c / 2;
        let w = self.offset_bits(level);
        if self.dim() == 1 {
            ((lin + c - w[0] as usize) % c) >> 1
        } else {
            let (x, y) = (lin % c, lin / c);
            let px = ((x + c - w[0] as usize) % c) >> 1;
            let py = ((y + c - w[1] as usize) % c) >> 1;
            px + pc * py
        }
    }

    pub fn contains(&self, outer: &CubeId, inner: &CubeId) -> bool {
        if inner.level > outer.level {
            return false;
        }
        let l = self.grid.side();
        let (o, i) = (self.origin(outer), self.origin(inner));
        let (so, si) = (self.side_cells(outer.level), self.side_cells(inner.level));
        (0..self.dim()).all(|a| (i[a] + l - o[a]) % l + si <= so)
    }

    /// Linear indices of the finest cells of `q`.
    pub fn cells(&self, q: &CubeId) -> Vec<usize> {
        let l = self.grid.side();
        let s = self.side_cells(q.level);
        let o = self.origin(q);
        if self.dim() == 1 {
            (0..s).map(|i| ((o[0] + i) % l) as usize).collect()
        } else {
            let mut out = Vec::with_capacity((s * s) as usize);
            for y in 0..s {
                for x in 0..s {
                    out.push(self.grid.cell_index([(o[0] + x) % l, (o[1] + y) % l]));
                }
            }
            out
        }
    }

    /// Sums of `finest` over every cube, indexed `[slot(level)][lin]`.
    pub fn fold_up(&self, finest: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(finest.len(), self.grid.len());
        let mut out = Vec::with_capacity(self.slot(0) + 1);
        out.push(finest.to_vec());
        for k in self.k_min() + 1..=0 {
            let prev = out.last().expect("non-empty pyramid");
            let mut cur = vec![0.0; self.cubes_at(k)];
            for (c, v) in prev.iter().enumerate() {
                cur[self.parent_lin(k - 1, c)] += v;
            }
            out.push(cur);
        }
        out
    }

    /// Adds every cube's value to all of its descendants and returns the finest level.
    pub fn push_down(&self, mut levels: Vec<Vec<f64>>) -> Vec<f64> {
        for k in (self.k_min()..0).rev() {
            let (lo, hi) = levels.split_at_mut(self.slot(k) + 1);
            let (child, parent) = (&mut lo[self.slot(k)], &hi[0]);
            for (c, v) in child.iter_mut().enumerate() {
                *v += parent[self.parent_lin(k, c)];
            }
        }
        levels.swap_remove(0)
    }

    pub fn zero_levels(&self) -> Vec<Vec<f64>> {
        self.levels().map(|k| vec![0.0; self.cubes_at(k)]).collect()
    }

    fn arc(&self, q: &CubeId, axis: usize) -> (u64, u64) {
        (self.origin(q)[axis], self.side_cells(q.level))
    }

    fn gaps(&self, q: &CubeId, r: &CubeId) -> [u64; 2] {
        let l = self.grid.side();
        let mut g = [0u64; 2];
        for (a, ga) in g.iter_mut().enumerate().take(self.dim()) {
            let (qa, qs) = self.arc(q, a);
            let (ra, rs) = self.arc(r, a);
            let d1 = (ra + l - qa) % l;
            let d2 = (qa + l - ra) % l;
            *ga = if d1 < qs || d2 < rs {
                0
            } else {
                (d1 - qs).min(d2 - rs)
            };
        }
        g
    }

    /// Periodic Euclidean set distance.
    pub fn dist(&self, q: &CubeId, r: &CubeId) -> f64 {
        let g = self.gaps(q, r);
        let h = (self.k_min() as f64).exp2();
        ((g[0] as f64).powi(2) + (g[1] as f64).powi(2)).sqrt() * h
    }

    pub fn long_distance(&self, q: &CubeId, r: &CubeId) -> f64 {
        self.dist(q, r) + q.side() + r.side()
    }

    /// Distance from `q` to the boundary of `r`; the set distance when `q` is not inside `r`.
    pub fn boundary_distance(&self, q: &CubeId, r: &CubeId) -> f64 {
        if !self.contains(r, q) {
            return self.dist(q, r);
        }
        let l = self.grid.side();
        let (so, si) = (self.side_cells(r.level), self.side_cells(q.level));
        let (o, i) = (self.origin(r), self.origin(q));
        let cells = (0..self.dim())
            .map(|a| {
                let rel = (i[a] + l - o[a]) % l;
                rel.min(so - rel - si)
            })
            .min()
            .unwrap_or(0);
        cells as f64 * (self.k_min() as f64).exp2()
    }

    fn too_close(&self, q: &CubeId, r: &CubeId, gamma: f64) -> bool {
        let threshold = (gamma * q.level as f64 + (1.0 - gamma) * r.level as f64).exp2();
        self.boundary_distance(q, r) < threshold
    }

    /// Badness against ancestors R with r0 + k_Q < k_R <= `top`.
    ///
    /// A non-ancestor R at the same level lies outside the ancestor, so the
    /// ancestor boundary is always at least as close.
    pub fn is_bad_up_to(&self, q: &CubeId, top: i32, p: &GoodnessParams) -> bool {
        let start = q.level + p.r0 as i32 + 1;
        (start..=top.min(0)).any(|k| {
            let r = self.cube_at(k, self.origin(q));
            self.too_close(q, &r, p.gamma)
        })
    }

    pub fn is_bad(&self, q: &CubeId, p: &GoodnessParams) -> bool {
        self.is_bad_up_to(q, 0, p)
    }

    /// Eq. good-to-level: no ancestor up to `level` makes `q` bad.
    pub fn good_to_level(&self, q: &CubeId, level: i32, p: &GoodnessParams) -> bool {
        !self.is_bad_up_to(q, level, p)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "dyadic-lattice v1\ndimension {}\nk_min {}\n",
            self.dim(),
            self.k_min()
        );
        for j in self.k_min()..0 {
            let w = self.omega[(j - self.k_min()) as usize];
            if self.dim() == 1 {
                s.push_str(&format!("omega {} {}\n", j, w[0]));
            } else {
                s.push_str(&format!("omega {} {} {}\n", j, w[0], w[1]));
            }
        }
        s
    }

    /// Short descriptor for report headers.
    pub fn descriptor(&self) -> String {
        let bits: String = self
            .omega
            .iter()
            .rev()
            .map(|w| {
                if self.dim() == 1 {
                    format!("{}", w[0])
                } else {
                    format!("{}{}", w[0], w[1])
                }
            })
            .collect::<Vec<_>>()
            .join("");
        format!(
            "d={} k_min={} omega[-1..k_min]={}",
            self.dim(),
            self.k_min(),
            bits
        )
    }
}

fn draw_bits(dim: usize, seed: u64, j: i32) -> [u8; 2] {
    let mut g = rng::stream(seed, &[rng::LATTICE_TAG, j as i64 as u64]);
    let b0 = g.gen::<bool>() as u8;
    let b1 = g.gen::<bool>() as u8;
    if dim == 1 {
        [b0, 0]
    } else {
        [b0, b1]
    }
}

impl FromStr for Lattice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().map(str::trim).filter(|l| !l.is_empty());
        let bad = |m: &str| Error::Parse(m.to_string());
        if lines.next() != Some("dyadic-lattice v1") {
            return Err(bad("missing header"));
        }
        let mut field = |name: &str| -> Result<i64> {
            let line = lines.next().ok_or_else(|| bad("truncated record"))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected {name}")));
            }
            parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(&format!("bad {name}")))
        };
        let dim = field("dimension")? as usize;
        let k_min = field("k_min")? as i32;
        Grid::new(dim, k_min)?;
        let mut omega = Vec::new();
        for (j, line) in (k_min..0).zip(lines) {
            let v: Vec<i64> = line
                .split_whitespace()
                .skip(1)
                .map(|t| t.parse().map_err(|_| bad("bad omega line")))
                .collect::<Result<_>>()?;
            if v.len() != dim + 1 || v[0] != j as i64 {
                return Err(bad("omega line out of order"));
            }
            omega.push([v[1] as u8, if dim == 2 { v[2] as u8 } else { 0 }]);
        }
        Lattice::with_shifts(dim, k_min, omega)
    }
}

/// Monte Carlo estimate with binomial or sample standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn binomial(hits: u64, n: u64) -> Self {
        let p = hits as f64 / n as f64;
        Estimate {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            samples: n,
        }
    }

    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = pairwise_sum(values) / n;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = if values.len() > 1 {
            pairwise_sum(&dev) / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            std_error: (var / n).sqrt(),
            samples: values.len() as u64,
        }
    }
}

/// Fixed-shape pairwise summation, independent of thread schedule.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// P{Q is bad} for a fixed-position cube at `q_level` over random lattices.
pub fn estimate_pi_bad(
    dim: usize,
    r0: u32,
    gamma: f64,
    q_level: i32,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate> {
    let p = GoodnessParams::new(r0, gamma)?;
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    Grid::new(dim, q_level)?;
    if q_level + r0 as i32 + 1 > 0 {
        return invalid(format!("level {q_level} too shallow for r0 = {r0}"));
    }
    let hits: u64 = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let lat =
                Lattice::sample(dim, q_level, rng::sample_seed(seed, i)).expect("validated grid");
            let q = CubeId::new(q_level, [0, 0]);
            lat.is_bad(&q, &p) as u64
        })
        .sum();
    Ok(Estimate::binomial(hits, n_samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(level: i32, i: u64) -> CubeId {
        CubeId::new(level, [i, 0])
    }

    /// Cells of a cube computed from the I + sum omega_j 2^j formula directly.
    fn cells_by_formula(lat: &Lattice, q: &CubeId) -> Vec<usize> {
        let h = (lat.k_min() as f64).exp2();
        let mut shift = [0.0f64; 2];
        for j in lat.k_min()..q.level {
            let w = lat.omega(j).unwrap();
            shift[0] += w[0] as f64 * (j as f64).exp2();
            shift[1] += w[1] as f64 * (j as f64).exp2();
        }
        let side = q.side();
        let mut out: Vec<usize> = (0..lat.grid().len())
            .filter(|&cell| {
                let m = lat.grid().midpoint(cell);
                (0..lat.dim()).all(|a| {
                    let lo = (q.index[a] as f64 * side + shift[a]).rem_euclid(1.0);
                    let rel = (m[a] - lo).rem_euclid(1.0);
                    rel < side - h / 4.0
                })
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn standard_lattice_cells() {
        let lat = Lattice::standard(1, -2).unwrap();
        assert_eq!(lat.cells(&c(-2, 1)), vec![1]);
        assert_eq!(lat.cells(&c(-1, 1)), vec![2, 3]);
        assert_eq!(lat.cells(&c(0, 0)), vec![0, 1, 2, 3]);
        let lat2 = Lattice::standard(2, -1).unwrap();
        assert_eq!(lat2.cubes_at(-1), 4);
        assert_eq!(lat2.cubes_at(0), 1);
        assert!(Lattice::standard(1, 0).is_err());
        assert!(Lattice::standard(3, -2).is_err());
    }

    #[test]
    fn sampled_lattice_is_reproducible() {
        let a = Lattice::sample(1, -10, 7).unwrap();
        let b = Lattice::sample(1, -10, 7).unwrap();
        assert_eq!(a, b);
        let d2 = Lattice::sample(2, -6, 0).unwrap();
        assert_eq!(d2.omegas().len(), 6);
        assert!(d2.omegas().iter().all(|w| w[0] <= 1 && w[1] <= 1));
    }

    #[test]
    fn omega_bits_are_fair() {
        let n = 100_000u64;
        let mut ones = [0u64; 2];
        for s in 0..n {
            let w = Lattice::sample(2, -1, s).unwrap().omega(-1).unwrap();
            ones[0] += w[0] as u64;
            ones[1] += w[1] as u64;
        }
        for o in ones {
            assert!((o as f64 / n as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn cells_match_shift_formula() {
        for seed in 0..5 {
            for dim in 1..=2 {
                let lat = Lattice::sample(dim, -4, seed).unwrap();
                for q in lat.all_cubes() {
                    let mut got = lat.cells(&q);
                    got.sort();
                    assert_eq!(got, cells_by_formula(&lat, &q), "{q} seed {seed}");
                }
            }
        }
    }

    #[test]
    fn navigation() {
        let lat = Lattice::standard(1, -3).unwrap();
        let ch = lat.children(&lat.root()).unwrap();
        assert_eq!(lat.cells(&ch[0]), vec![0, 1, 2, 3]);
        assert_eq!(lat.cells(&ch[1]), vec![4, 5, 6, 7]);
        assert_eq!(lat.ancestor(&c(-3, 2), 2).unwrap(), c(-1, 0));
        assert_eq!(lat.ancestor(&c(-3, 2), 3).unwrap(), lat.root());
        assert_eq!(lat.ancestor(&c(-3, 2), 0).unwrap(), c(-3, 2));
        assert!(lat.ancestor(&c(-3, 2), 4).is_err());
        assert!(lat.children(&c(-3, 0)).is_err());

        // omega_{-1} = 1 moves the root to [1/2, 3/2) mod 1
        let shifted = Lattice::with_shifts(1, -1, vec![[1, 0]]).unwrap();
        let q = shifted.cube_at(-1, [1, 0]);
        assert_eq!(shifted.parent(&q).unwrap(), shifted.root());
        assert_eq!(shifted.origin(&shifted.root()), [1, 0]);
        assert_eq!(shifted.cells(&shifted.root()), vec![1, 0]);
    }

    #[test]
    fn parent_child_round_trip() {
        for dim in 1..=2 {
            let lat = Lattice::sample(dim, -5, 3).unwrap();
            for q in lat.all_cubes().filter(|q| q.level > lat.k_min()) {
                for (eta, ch) in lat.children(&q).unwrap().iter().enumerate() {
                    assert_eq!(lat.parent(ch).unwrap(), q);
                    assert_eq!(lat.child_position(ch), eta);
                    assert!(lat.contains(&q, ch));
                    assert_eq!(lat.parent_lin(ch.level, lat.lin(ch)), lat.lin(&q));
                }
            }
        }
    }

    #[test]
    fn long_distance_examples() {
        let lat = Lattice::standard(1, -3).unwrap();
        assert_eq!(lat.long_distance(&lat.root(), &lat.root()), 2.0);
        assert_eq!(lat.long_distance(&c(-2, 0), &c(-2, 2)), 0.75);
        assert_eq!(lat.long_distance(&c(-3, 0), &c(-3, 7)), 0.25);
    }

    fn is_bad_oracle(lat: &Lattice, q: &CubeId, p: &GoodnessParams) -> bool {
        lat.all_cubes().any(|r| {
            q.side() < (-(p.r0 as f64)).exp2() * r.side()
                && lat.boundary_distance(q, &r)
                    < q.side().powf(p.gamma) * r.side().powf(1.0 - p.gamma)
        })
    }

    #[test]
    fn is_bad_matches_exhaustive_search() {
        let p = GoodnessParams::new(2, 0.25).unwrap();
        let std = Lattice::standard(1, -8).unwrap();
        let q = c(-8, 85);
        assert_eq!(std.is_bad(&q, &p), is_bad_oracle(&std, &q, &p));
        assert!(std.is_bad(&c(-8, 0), &p));
        for seed in 0..4 {
            for dim in 1..=2 {
                let k = if dim == 1 { -7 } else { -4 };
                let lat = Lattice::sample(dim, k, seed).unwrap();
                for p in [
                    GoodnessParams::new(1, 0.25).unwrap(),
                    GoodnessParams::new(2, 0.1).unwrap(),
                ] {
                    for q in lat.all_cubes() {
                        assert_eq!(lat.is_bad(&q, &p), is_bad_oracle(&lat, &q, &p), "{q}");
                    }
                }
            }
        }
    }

    #[test]
    fn pi_bad_small_gamma_and_depth() {
        // gamma -> 0 pushes the threshold up to l(R): every cube with an admissible R is bad
        let e = estimate_pi_bad(1, 2, 1e-6, -12, 2000, 1).unwrap();
        assert_eq!(e.value, 1.0);
        assert!(estimate_pi_bad(1, 4, 0.25, -4, 10, 1).is_err());
        let a = estimate_pi_bad(1, 2, 0.25, -20, 500, 9).unwrap();
        let b = estimate_pi_bad(1, 2, 0.25, -20, 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip() {
        for dim in 1..=2 {
            let lat = Lattice::sample(dim, -6, 11).unwrap();
            let back: Lattice = lat.to_text().parse().unwrap();
            assert_eq!(back, lat);
        }
        assert!("nonsense".parse::<Lattice>().is_err());
    }

    #[test]
    fn fold_and_push_are_adjoint() {
        let lat = Lattice::sample(2, -4, 5).unwrap();
        let f: Vec<f64> = (0..lat.grid().len())
            .map(|i| (i as f64 * 0.37).sin())
            .collect();
        let up = lat.fold_up(&f);
        for q in lat.all_cubes() {
            let direct: f64 = lat.cells(&q).iter().map(|&i| f[i]).sum();
            assert!((up[lat.slot(q.level)][lat.lin(&q)] - direct).abs() < 1e-12);
        }
        let mut levels = lat.zero_levels();
        levels[lat.slot(-2)][3] = 1.0;
        let down = lat.push_down(levels);
        let q = lat.from_lin(-2, 3);
        let mut cells = lat.cells(&q);
        cells.sort();
        let hot: Vec<usize> = (0..down.len()).filter(|&i| down[i] == 1.0).collect();
        assert_eq!(hot, cells);
    }
}
