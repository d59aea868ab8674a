//! Goodness probabilities, representation weights, coefficient decay of
//! Calderon-Zygmund operators in random-lattice Haar bases, shift extraction
//! and Monte Carlo kernel averaging.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fit::{ols, FitResult};
use crate::haar::haar_sign;
use crate::lattice::{pairwise_sum, CubeId, Estimate, GoodnessParams, Lattice};
use crate::rng;
use crate::shift::{ElementaryShift, PairFn, PairTerm, ShiftBlock};

/// Smallest integer s with s >= 2/gamma + r0 (1 - gamma)/gamma.
pub fn s0(params: &GoodnessParams) -> u32 {
    let g = params.gamma;
    let bound = 2.0 / g + params.r0 as f64 * (1.0 - g) / g;
    let mut s = bound.ceil().max(0.0) as u32;
    while s > 0 && (s - 1) as f64 >= bound {
        s -= 1;
    }
    s
}

/// 2^{-(s0 - 1) d} pi_good.
pub fn pi0(dim: usize, params: &GoodnessParams, pi_good: f64) -> f64 {
    (-((s0(params).max(1) - 1) as f64) * dim as f64).exp2() * pi_good
}

pub fn representation_weight(m: u32, n: u32, alpha: f64) -> f64 {
    (-((m + n) as f64) * alpha / 2.0).exp2()
}

fn check_pair(lat: &Lattice, q: &CubeId, r_level: i32) -> Result<()> {
    lat.check(q)?;
    if r_level < q.level || r_level > 0 {
        return invalid(format!("R level {r_level} must lie in [{}, 0]", q.level));
    }
    Ok(())
}

/// P{Q good | lattice up to the level of R}, resampling omega_j for j >= level(R).
pub fn pi_good_given_r(
    lat: &Lattice,
    q: &CubeId,
    r_level: i32,
    params: &GoodnessParams,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate> {
    check_pair(lat, q, r_level)?;
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    if !lat.good_to_level(q, r_level, params) {
        return Ok(Estimate {
            value: 0.0,
            std_error: 0.0,
            samples: n_samples,
        });
    }
    let hits: u64 = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            !lat.resample_from(r_level, rng::sample_seed(seed, i))
                .is_bad(q, params) as u64
        })
        .sum();
    Ok(Estimate::binomial(hits, n_samples))
}

/// E over omega_j, j >= level(R), of sum over common ancestors M of Q and R of
/// (D(Q, R)/l(M))^{d + alpha} 1_{Q good}.
pub fn rho_qr(
    lat: &Lattice,
    q: &CubeId,
    r: &CubeId,
    alpha: f64,
    params: &GoodnessParams,
    n_samples: u64,
    seed: u64,
) -> Result<Estimate> {
    check_pair(lat, q, r.level)?;
    lat.check(r)?;
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let d = lat.dim() as f64;
    let long = lat.long_distance(q, r);
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let l = lat.resample_from(r.level, rng::sample_seed(seed, i));
            if l.is_bad(q, params) {
                return 0.0;
            }
            (r.level..=0)
                .map(|k| l.cube_at(k, l.origin(r)))
                .filter(|m| l.contains(m, q))
                .map(|m| (long / m.side()).powf(d + alpha))
                .sum()
        })
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// pi cot(pi (x - y)): the periodic Hilbert kernel, 1/(x - y) near the diagonal.
pub fn periodic_hilbert_kernel(x: f64, y: f64) -> f64 {
    let t = (x - y).rem_euclid(1.0);
    if t == 0.0 {
        return 0.0;
    }
    std::f64::consts::PI / (std::f64::consts::PI * t).tan()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairCoefficient {
    pub input: CubeId,
    pub output: CubeId,
    /// <T h_input, h_output>.
    pub raw: f64,
    /// The same with both paraproduct contributions removed.
    pub value: f64,
    /// Supports overlap or touch, so the diagonal cutoff enters the quadrature.
    pub near_diagonal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CzCoefficients {
    pub lattice: Lattice,
    pub entries: Vec<PairCoefficient>,
}

impl CzCoefficients {
    pub fn lookup(&self) -> HashMap<(CubeId, CubeId), f64> {
        self.entries
            .iter()
            .map(|e| ((e.input, e.output), e.value))
            .collect()
    }
}

fn haar_vector(lat: &Lattice, q: &CubeId) -> Result<Vec<(usize, f64)>> {
    let norm = lat.cube_volume(q.level).sqrt().recip();
    let mut out = Vec::new();
    for (eta, c) in lat.children(q)?.iter().enumerate() {
        let v = norm * haar_sign(1, eta, 1);
        out.extend(lat.cells(c).into_iter().map(|i| (i, v)));
    }
    Ok(out)
}

/// Matrix elements of T - Pi_T - (Pi_{T*})^* between the Haar functions of the
/// given (input, output) pairs, by cell-midpoint quadrature with the diagonal cell excluded.
pub fn cz_coefficients(
    kernel: &(dyn Fn(f64, f64) -> f64 + Sync),
    lat: &Lattice,
    pairs: &[(CubeId, CubeId)],
) -> Result<CzCoefficients> {
    if lat.dim() != 1 {
        return invalid("kernel quadrature is one-dimensional");
    }
    let n = lat.grid().len();
    let h = lat.grid().cell_volume();
    let xs: Vec<f64> = (0..n).map(|i| lat.grid().midpoint(i)[0]).collect();
    let t: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                0.0
            } else {
                kernel(xs[i], xs[j]) * h
            }
        })
        .collect();
    let t_one: Vec<f64> = (0..n).map(|i| t[i * n..(i + 1) * n].iter().sum()).collect();
    let t_star_one: Vec<f64> = (0..n).map(|j| (0..n).map(|i| t[i * n + j]).sum()).collect();
    let mut cache: HashMap<CubeId, Vec<(usize, f64)>> = HashMap::new();
    for (a, b) in pairs {
        for c in [a, b] {
            if !cache.contains_key(c) {
                lat.check(c)?;
                cache.insert(*c, haar_vector(lat, c)?);
            }
        }
    }
    let dot = |v: &[(usize, f64)], f: &[f64]| v.iter().map(|&(i, x)| x * f[i]).sum::<f64>() * h;
    let mean_on = |v: &[(usize, f64)], cube: &CubeId| {
        let cells = lat.cells(cube);
        let set: HashMap<usize, f64> = v.iter().copied().collect();
        cells
            .iter()
            .map(|i| set.get(i).copied().unwrap_or(0.0))
            .sum::<f64>()
            / cells.len() as f64
    };
    let mut applied: HashMap<CubeId, Vec<f64>> = HashMap::new();
    let mut entries = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        if !applied.contains_key(a) {
            let ha = &cache[a];
            let v: Vec<f64> = (0..n)
                .map(|i| ha.iter().map(|&(j, x)| t[i * n + j] * x).sum())
                .collect();
            applied.insert(*a, v);
        }
        let (ha, hb) = (&cache[a], &cache[b]);
        let raw = dot(hb, &applied[a]);
        let mut value = raw;
        if lat.contains(a, b) && a != b {
            value -= mean_on(ha, b) * dot(hb, &t_one);
        }
        if lat.contains(b, a) && a != b {
            value -= mean_on(hb, a) * dot(ha, &t_star_one);
        }
        entries.push(PairCoefficient {
            input: *a,
            output: *b,
            raw,
            value,
            near_diagonal: lat.dist(a, b) == 0.0,
        });
    }
    Ok(CzCoefficients {
        lattice: lat.clone(),
        entries,
    })
}

/// <T h_input, h_output> with every cell split into `refine` sub-cells; coincident
/// sub-cell midpoints are skipped.
pub fn pair_coefficient_refined(
    kernel: &(dyn Fn(f64, f64) -> f64 + Sync),
    lat: &Lattice,
    input: &CubeId,
    output: &CubeId,
    refine: usize,
) -> Result<f64> {
    if lat.dim() != 1 || refine == 0 {
        return invalid("refined quadrature needs d = 1 and refine >= 1");
    }
    let h = lat.grid().cell_volume();
    let sub = h / refine as f64;
    let expand = |v: Vec<(usize, f64)>| -> Vec<(f64, f64)> {
        v.into_iter()
            .flat_map(|(i, x)| (0..refine).map(move |s| (i as f64 * h + (s as f64 + 0.5) * sub, x)))
            .collect()
    };
    let a = expand(haar_vector(lat, input)?);
    let b = expand(haar_vector(lat, output)?);
    let total: f64 = b
        .par_iter()
        .map(|&(x, vb)| {
            a.iter()
                .filter(|&&(y, _)| (x - y).abs() > sub / 2.0)
                .map(|&(y, va)| kernel(x, y) * va)
                .sum::<f64>()
                * vb
        })
        .sum();
    Ok(total * sub * sub)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayRow {
    /// The smaller cube of the pair (the input on ties); it is good.
    pub q: CubeId,
    pub r: CubeId,
    pub coefficient: f64,
    pub bound: f64,
    pub ratio: f64,
    pub long_distance: f64,
    pub near_diagonal: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GroupFit {
    pub q_level: i32,
    pub r_level: i32,
    pub fit: FitResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub alpha: f64,
    pub rows: Vec<DecayRow>,
    pub max_ratio: f64,
    /// Slope of ln|coefficient| against ln D pooled over (level Q, level R) groups,
    /// each group centred; separated pairs with nonzero coefficients only.
    pub fit: Option<FitResult>,
    pub group_fits: Vec<GroupFit>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "q_level,q_index0,q_index1,r_level,r_index0,r_index1,long_distance,near_diagonal,coefficient,bound,ratio\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:.16e},{},{:.16e},{:.16e},{:.16e}\n",
                r.q.level,
                r.q.index[0],
                r.q.index[1],
                r.r.level,
                r.r.index[0],
                r.r.index[1],
                r.long_distance,
                r.near_diagonal,
                r.coefficient,
                r.bound,
                r.ratio
            ));
        }
        s
    }
}

/// Ratios against l(Q)^{a/2} l(R)^{a/2} D^{-(d+a)} |Q|^{1/2} |R|^{1/2} over pairs whose
/// smaller cube is good, and the fitted D-exponent of the coefficients at fixed levels.
pub fn coefficient_decay_check(
    coeffs: &CzCoefficients,
    alpha: f64,
    params: &GoodnessParams,
) -> Result<DecayReport> {
    let lat = &coeffs.lattice;
    let d = lat.dim() as f64;
    let mut rows = Vec::new();
    for e in &coeffs.entries {
        let (q, r) = if e.input.level <= e.output.level {
            (e.input, e.output)
        } else {
            (e.output, e.input)
        };
        if lat.is_bad(&q, params) {
            continue;
        }
        let long = lat.long_distance(&q, &r);
        let size = (q.side() * r.side()).powf(alpha / 2.0)
            * (q.volume(lat.dim()) * r.volume(lat.dim())).sqrt();
        let bound = size / long.powf(d + alpha);
        let c = e.value.abs();
        rows.push(DecayRow {
            q,
            r,
            coefficient: c,
            bound,
            ratio: c / bound,
            long_distance: long,
            near_diagonal: e.near_diagonal,
        });
    }
    if rows.is_empty() {
        return Err(Error::Empty("no pair with a good smaller cube".into()));
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mut groups: BTreeMap<(i32, i32), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| !r.near_diagonal && r.coefficient > 0.0)
    {
        let g = groups.entry((r.q.level, r.r.level)).or_default();
        g.0.push(r.long_distance.ln());
        g.1.push(r.coefficient.ln());
    }
    let mut group_fits = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&(q_level, r_level), (lx, ly)) in &groups {
        let mx = lx.iter().sum::<f64>() / lx.len() as f64;
        if lx.iter().all(|x| (x - mx).abs() < 1e-12) {
            continue;
        }
        let my = ly.iter().sum::<f64>() / ly.len() as f64;
        xs.extend(lx.iter().map(|x| x - mx));
        ys.extend(ly.iter().map(|y| y - my));
        if lx.len() >= crate::fit::MIN_POINTS {
            if let Ok(fit) = ols(lx, ly) {
                group_fits.push(GroupFit {
                    q_level,
                    r_level,
                    fit,
                });
            }
        }
    }
    let fit = if xs.len() >= crate::fit::MIN_POINTS {
        ols(&xs, &ys).ok()
    } else {
        None
    };
    Ok(DecayReport {
        alpha,
        rows,
        max_ratio,
        fit,
        group_fits,
    })
}

/// Elementary (m, n) shift with terms C^{-1} 2^{(m+n)a/2} (D/l(M))^{d+a} <T~ h_A, h_B> <., h_A> h_B
/// over cubes M, inputs A at depth m and outputs B at depth n whose smaller cube is good.
pub fn extract_shift(
    coeffs: &CzCoefficients,
    m: u32,
    n: u32,
    alpha: f64,
    c: f64,
    params: &GoodnessParams,
) -> Result<ElementaryShift> {
    let lat = &coeffs.lattice;
    if lat.dim() != 1 {
        return invalid("shift extraction is one-dimensional");
    }
    if !(c > 0.0) {
        return invalid("the decay constant must be positive");
    }
    let table = coeffs.lookup();
    let d = 1.0;
    let lowest = lat.k_min() + 1 + m.max(n) as i32;
    let mut blocks = Vec::new();
    for k in (lowest..=0).rev() {
        for mc in lat.cubes(k) {
            let vol = lat.cube_volume(k);
            let mut terms = Vec::new();
            for a in crate::shift::descendants(lat, &mc, m) {
                for b in crate::shift::descendants(lat, &mc, n) {
                    let small = if a.level <= b.level { a } else { b };
                    if lat.is_bad(&small, params) {
                        continue;
                    }
                    let Some(&v) = table.get(&(a, b)) else {
                        return invalid(format!("missing coefficient for ({a}, {b})"));
                    };
                    if v == 0.0 {
                        continue;
                    }
                    let f = (((m + n) as f64) * alpha / 2.0).exp2()
                        * (lat.long_distance(&a, &b) / mc.side()).powf(d + alpha)
                        * v
                        / c;
                    let ha = lat.cube_volume(a.level).sqrt().recip();
                    let hb = lat.cube_volume(b.level).sqrt().recip();
                    terms.push(PairTerm {
                        input: PairFn::new(
                            a,
                            (0..2).map(|e| vol * f * ha * haar_sign(1, e, 1)).collect(),
                        ),
                        output: PairFn::new(b, (0..2).map(|e| hb * haar_sign(1, e, 1)).collect()),
                    });
                }
            }
            if !terms.is_empty() {
                blocks.push(ShiftBlock { cube: mc, terms });
            }
        }
    }
    let s = ElementaryShift::from_blocks_unchecked(lat, m, n, false, blocks)?;
    let audit = s.audit();
    if !audit.passed {
        let w = audit.witness.expect("failed audit has a witness");
        return Err(Error::Normalization {
            cube: w.cube,
            product: w.value,
        });
    }
    Ok(s)
}

#[derive(Clone, Debug)]
pub struct EnsembleSample {
    pub seed: u64,
    pub lattice: Lattice,
    pub m: u32,
    pub n: u32,
    pub shift: ElementaryShift,
    pub weight: f64,
}

/// Shifts on sampled lattices with their representation weights.
#[derive(Clone, Debug)]
pub struct ShiftEnsemble {
    pub alpha: f64,
    pub samples: Vec<EnsembleSample>,
}

impl ShiftEnsemble {
    pub fn sample(
        dim: usize,
        k_min: i32,
        params: &[(u32, u32)],
        alpha: f64,
        n_lattices: usize,
        seed: u64,
        family: impl Fn(&Lattice, u32, u32) -> Result<ElementaryShift>,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(n_lattices * params.len());
        for i in 0..n_lattices {
            let s = rng::sample_seed(seed, i as u64);
            let lattice = Lattice::sample(dim, k_min, s)?;
            for &(m, n) in params {
                let shift = family(&lattice, m, n)?;
                samples.push(EnsembleSample {
                    seed: s,
                    lattice: lattice.clone(),
                    m,
                    n,
                    shift,
                    weight: representation_weight(m, n, alpha),
                });
            }
        }
        Ok(ShiftEnsemble { alpha, samples })
    }

    /// (1/#lattices) sum over samples of weight * kernel.
    pub fn kernel(&self) -> Result<Vec<f64>> {
        let Some(first) = self.samples.first() else {
            return Err(Error::Empty("ensemble has no samples".into()));
        };
        let lattices = self
            .samples
            .iter()
            .map(|s| s.seed)
            .collect::<std::collections::BTreeSet<_>>()
            .len();
        let mut k = vec![0.0; first.lattice.grid().len().pow(2)];
        for s in &self.samples {
            for (a, b) in k.iter_mut().zip(s.shift.dense_kernel()?) {
                *a += s.weight * b;
            }
        }
        k.iter_mut().for_each(|v| *v /= lattices as f64);
        Ok(k)
    }
}

/// Physical separations over which the kernel statistics are taken.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Band {
    fn default() -> Self {
        Band {
            lo: 1.0 / 64.0,
            hi: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AveragedKernel {
    /// Cells of the window; the matrix is n x n, row x, column y.
    pub n: usize,
    #[serde(skip)]
    pub values: Vec<f64>,
    #[serde(skip)]
    pub std_error: Vec<f64>,
    pub samples: usize,
    pub band: Band,
    /// Per-sample means over band pairs x > y of (x - y)(K(x,y) + K(y,x)).
    #[serde(skip)]
    pub symmetric_part: Vec<f64>,
    pub periodic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileReport {
    pub separation: Vec<f64>,
    /// t times the mean of K over pairs with x - y = t.
    pub scaled: Vec<f64>,
    pub mean: f64,
    pub max_relative_deviation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AntisymmetryReport {
    pub statistic: Estimate,
    /// |statistic| / standard error.
    pub z: f64,
    /// Fraction of band entries with |K(x,y) + K(y,x)| within three combined standard errors.
    pub entry_fraction: f64,
}

impl AveragedKernel {
    fn separation(&self, i: usize, j: usize) -> f64 {
        let mut t = (i as f64 - j as f64) / self.n as f64;
        if self.periodic {
            t -= t.round();
        }
        t
    }

    /// Dense matrix, row x, column y, with its standard errors.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,value,std_error\n");
        for x in 0..self.n {
            for y in 0..self.n {
                let i = x * self.n + y;
                s.push_str(&format!(
                    "{},{},{:.16e},{:.16e}\n",
                    x, y, self.values[i], self.std_error[i]
                ));
            }
        }
        s
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[x * self.n + y]
    }

    /// t k(t) over separations in the band, averaged along diagonals.
    pub fn profile(&self) -> ProfileReport {
        let n = self.n as i64;
        let mut separation = Vec::new();
        let mut scaled = Vec::new();
        for delta in -(n - 1)..n {
            let t = delta as f64 / n as f64;
            if t.abs() < self.band.lo - 1e-15 || t.abs() > self.band.hi + 1e-15 {
                continue;
            }
            let vals: Vec<f64> = (0..n)
                .filter_map(|i| {
                    let j = i - delta;
                    if self.periodic {
                        Some(self.get(i as usize, j.rem_euclid(n) as usize))
                    } else if (0..n).contains(&j) {
                        Some(self.get(i as usize, j as usize))
                    } else {
                        None
                    }
                })
                .collect();
            separation.push(t);
            scaled.push(t * pairwise_sum(&vals) / vals.len() as f64);
        }
        let mean = if scaled.is_empty() {
            0.0
        } else {
            pairwise_sum(&scaled) / scaled.len() as f64
        };
        let max_relative_deviation = if mean == 0.0 {
            if scaled.iter().all(|v| *v == 0.0) {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            scaled
                .iter()
                .map(|v| ((v - mean) / mean).abs())
                .fold(0.0, f64::max)
        };
        ProfileReport {
            separation,
            scaled,
            mean,
            max_relative_deviation,
        }
    }

    pub fn antisymmetry(&self) -> AntisymmetryReport {
        let statistic = Estimate::from_samples(&self.symmetric_part);
        let z = if statistic.std_error > 0.0 {
            statistic.value.abs() / statistic.std_error
        } else if statistic.value == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let (mut inside, mut total) = (0usize, 0usize);
        for x in 0..self.n {
            for y in 0..x {
                let t = self.separation(x, y).abs();
                if t < self.band.lo - 1e-15 || t > self.band.hi + 1e-15 {
                    continue;
                }
                total += 1;
                let s = self.get(x, y) + self.get(y, x);
                let se = (self.std_error[x * self.n + y].powi(2)
                    + self.std_error[y * self.n + x].powi(2))
                .sqrt();
                if s.abs() <= 3.0 * se || s == 0.0 {
                    inside += 1;
                }
            }
        }
        AntisymmetryReport {
            statistic,
            z,
            entry_fraction: if total == 0 {
                1.0
            } else {
                inside as f64 / total as f64
            },
        }
    }

    /// Root mean square of (K(x+h, y+h) - K(x, y)) / combined standard error over all entries.
    pub fn translation_defect(&self, h: usize) -> f64 {
        let n = self.n;
        let mut acc = Vec::with_capacity(n * n);
        for x in 0..n {
            for y in 0..n {
                let (a, b) = (x * n + y, ((x + h) % n) * n + (y + h) % n);
                let se = (self.std_error[a].powi(2) + self.std_error[b].powi(2)).sqrt();
                let diff = self.values[b] - self.values[a];
                acc.push(if se > 0.0 {
                    (diff / se).powi(2)
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                });
            }
        }
        (pairwise_sum(&acc) / acc.len() as f64).sqrt()
    }
}

const CHUNK: usize = 256;

struct Accumulator {
    sum: Vec<f64>,
    sq: Vec<f64>,
    sym: Vec<f64>,
}

fn accumulate(
    n: usize,
    n_samples: usize,
    band: Band,
    periodic: bool,
    sample: &(dyn Fn(usize, &mut [f64]) -> Result<()> + Sync),
) -> Result<AveragedKernel> {
    if n_samples == 0 {
        return invalid("n_samples must be at least 1");
    }
    let chunks: Vec<usize> = (0..n_samples.div_ceil(CHUNK)).collect();
    let sep = |x: usize, y: usize| {
        let mut t = (x as f64 - y as f64) / n as f64;
        if periodic {
            t -= t.round();
        }
        t
    };
    let band_pairs: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|x| (0..x).map(move |y| (x, y)))
        .filter_map(|(x, y)| {
            let t = sep(x, y);
            (t.abs() >= band.lo - 1e-15 && t.abs() <= band.hi + 1e-15).then_some((x, y, t))
        })
        .collect();
    let parts: Vec<Accumulator> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = Accumulator {
                sum: vec![0.0; n * n],
                sq: vec![0.0; n * n],
                sym: Vec::new(),
            };
            let mut k = vec![0.0; n * n];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                k.iter_mut().for_each(|v| *v = 0.0);
                sample(i, &mut k)?;
                for ((s, q), v) in acc.sum.iter_mut().zip(acc.sq.iter_mut()).zip(&k) {
                    *s += v;
                    *q += v * v;
                }
                let terms: Vec<f64> = band_pairs
                    .iter()
                    .map(|&(x, y, t)| t * (k[x * n + y] + k[y * n + x]))
                    .collect();
                acc.sym.push(if terms.is_empty() {
                    0.0
                } else {
                    pairwise_sum(&terms) / terms.len() as f64
                });
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut sum = vec![0.0; n * n];
    let mut sq = vec![0.0; n * n];
    let mut sym = Vec::with_capacity(n_samples);
    for p in parts {
        sum.iter_mut().zip(&p.sum).for_each(|(a, b)| *a += b);
        sq.iter_mut().zip(&p.sq).for_each(|(a, b)| *a += b);
        sym.extend(p.sym);
    }
    let ns = n_samples as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / ns).collect();
    let std_error: Vec<f64> = sq
        .iter()
        .zip(&values)
        .map(|(q, m)| {
            if n_samples > 1 {
                ((q / ns - m * m).max(0.0) * ns / (ns - 1.0) / ns).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(AveragedKernel {
        n,
        values,
        std_error,
        samples: n_samples,
        band,
        symmetric_part: sym,
        periodic,
    })
}

/// Mean dense kernel of `family` over lattices sampled by translation bits.
pub fn average_kernel(
    dim: usize,
    k_min: i32,
    family: &(dyn Fn(&Lattice) -> Result<ElementaryShift> + Sync),
    n_samples: usize,
    seed: u64,
    band: Band,
) -> Result<AveragedKernel> {
    let n = crate::lattice::Grid::new(dim, k_min)?.len();
    accumulate(n, n_samples, band, dim == 1, &|i, k| {
        let lat = Lattice::sample(dim, k_min, rng::sample_seed(seed, i as u64))?;
        let s = family(&lat)?;
        k.copy_from_slice(&s.dense_kernel()?);
        Ok(())
    })
}

/// Mean kernel of the Petermichl shift over translations and dilations of the
/// dyadic grid, seen through a window of `n` cells on [0, 1).
///
/// Each sample draws a dilation exponent u in [0, 1) and a translation t; the
/// window maps to [t, t + s) on the torus with s = 2^{-u-2}, every dyadic level
/// of the torus down to 2^{-62} contributes, and K(x, y) = s A(t + s x, t + s y).
pub fn petermichl_dilation_kernel(
    n: usize,
    n_samples: usize,
    seed: u64,
    band: Band,
) -> Result<AveragedKernel> {
    if !(2..=1 << 12).contains(&n) {
        return invalid("window must hold between 2 and 4096 cells");
    }
    accumulate(n, n_samples, band, false, &|i, k| {
        let mut g = rng::stream(seed, &[rng::SHIFT_TAG, i as u64]);
        let u: f64 = g.gen_range(0.0..1.0);
        let t0: u64 = g.gen();
        let s = (-u - 2.0).exp2();
        let step = s / n as f64 * 2f64.powi(64);
        let pts: Vec<u64> = (0..n)
            .map(|j| t0.wrapping_add(((j as f64 + 0.5) * step) as u64))
            .collect();
        // prefix[j][l] = sum_{i < l} 2^i e_i(p_j), e_i(p) = -(+1 if bit i+2 of p is set, else -1)
        let e = |p: u64, l: u32| -> f64 {
            if l + 2 > 64 {
                return 0.0;
            }
            if (p >> (64 - (l + 2))) & 1 == 1 {
                -1.0
            } else {
                1.0
            }
        };
        let prefix: Vec<Vec<f64>> = pts
            .iter()
            .map(|&p| {
                let mut v = Vec::with_capacity(64);
                let mut acc = 0.0;
                v.push(0.0);
                for l in 0..63 {
                    acc += (l as f64).exp2() * e(p, l);
                    v.push(acc);
                }
                v
            })
            .collect();
        for x in 0..n {
            for y in 0..n {
                if x == y {
                    continue;
                }
                let l = (pts[x] ^ pts[y]).leading_zeros();
                let a = prefix[x][l as usize] - (l as f64).exp2() * e(pts[x], l);
                k[x * n + y] = s * a;
            }
        }
        Ok(())
    })
}

/// Cube pairs (input, output) at the given levels, optionally one per distinct separation pattern.
pub fn level_pairs(lat: &Lattice, input_level: i32, output_level: i32) -> Vec<(CubeId, CubeId)> {
    let mut out = Vec::new();
    for a in lat.cubes(input_level) {
        for b in lat.cubes(output_level) {
            out.push((a, b));
        }
    }
    out
}

/// Count of good smaller cubes among `pairs`, keyed by level pair.
pub fn good_pair_counts(
    lat: &Lattice,
    pairs: &[(CubeId, CubeId)],
    params: &GoodnessParams,
) -> BTreeMap<(i32, i32), usize> {
    let mut out = BTreeMap::new();
    for (a, b) in pairs {
        let small = if a.level <= b.level { a } else { b };
        if !lat.is_bad(small, params) {
            *out.entry((a.level, b.level)).or_insert(0) += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s0_smallest_integer() {
        let p = GoodnessParams::new(2, 0.25).unwrap();
        // 8 + 2 * 3 = 14
        assert_eq!(s0(&p), 14);
        let p = GoodnessParams::new(1, 0.3).unwrap();
        let bound = 2.0 / 0.3 + 0.7 / 0.3;
        assert!(s0(&p) as f64 >= bound && ((s0(&p) - 1) as f64) < bound);
    }

    #[test]
    fn weights_exact() {
        assert_eq!(representation_weight(0, 0, 1.0), 1.0);
        assert_eq!(representation_weight(2, 1, 1.0), 2f64.powf(-1.5));
        assert_eq!(representation_weight(3, 1, 0.5), 0.5);
    }

    #[test]
    fn hilbert_kernel_odd_and_periodic() {
        for &(x, y) in &[(0.1, 0.3), (0.9, 0.05), (0.5, 0.0)] {
            assert!((periodic_hilbert_kernel(x, y) + periodic_hilbert_kernel(y, x)).abs() < 1e-12);
            assert!(
                (periodic_hilbert_kernel(x + 1.0, y) - periodic_hilbert_kernel(x, y)).abs() < 1e-9
            );
        }
        assert!((periodic_hilbert_kernel(0.001, 0.0) - 1000.0).abs() < 0.01);
    }

    #[test]
    fn zero_kernel_zero_coefficients() {
        let lat = Lattice::standard(1, -5).unwrap();
        let pairs = level_pairs(&lat, -2, -3);
        let c = cz_coefficients(&|_, _| 0.0, &lat, &pairs).unwrap();
        assert!(c.entries.iter().all(|e| e.value == 0.0 && e.raw == 0.0));
    }

    #[test]
    fn dilation_kernel_small_run_finite() {
        let k = petermichl_dilation_kernel(
            16,
            40,
            3,
            Band {
                lo: 1.0 / 16.0,
                hi: 0.25,
            },
        )
        .unwrap();
        assert!(k.values.iter().all(|v| v.is_finite()));
        assert_eq!(k.symmetric_part.len(), 40);
        assert!(k.profile().mean < 0.0);
    }
}
