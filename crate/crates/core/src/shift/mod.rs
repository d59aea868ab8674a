//! Dyadic shifts, paraproducts and their measurement.
//!
//! A shift is stored as blocks, one per active cube Q. Each block holds
//! terms `(input, output)` of functions constant on the children of a
//! descendant (or constant on the descendant itself), and acts by
//! `S f = sum_Q |Q|^{-1} sum_terms (f, input) output`.

mod families;
mod norm;
mod testing;

use std::collections::BTreeSet;

use crate::error::{invalid, Error, Result};
use crate::haar::haar_sign;
use crate::lattice::{CubeId, Lattice};
use crate::signal::{StepFunction, Weight};

pub use families::{
    haar_multiplier, paraproduct, petermichl_shift, random_haar_multiplier, random_shift,
    Paraproduct, RandomShiftKind,
};
pub use norm::{b2_audit, operator_norm, two_weight_norm, NormOptions, NormReport};
pub use testing::{
    predicted_bounds, spike_corpus, testing_constants, weak11_constant, LambdaGrid,
    PredictedBounds, TestingReport, WeakReport,
};

/// Slack for floating-point comparisons in audits.
pub const AUDIT_SLACK: f64 = 1e-12;

/// A function constant on the children of `cube` (2^d values), or constant on `cube` (1 value).
#[derive(Clone, Debug, PartialEq)]
pub struct PairFn {
    pub cube: CubeId,
    pub values: Vec<f64>,
}

impl PairFn {
    pub fn new(cube: CubeId, values: Vec<f64>) -> Self {
        PairFn { cube, values }
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn scaled(&self, c: f64) -> PairFn {
        PairFn {
            cube: self.cube,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Coefficients against the child sign patterns; index 0 is the constant part.
    pub fn pattern_coefficients(&self, dim: usize) -> Vec<f64> {
        let n = 1usize << dim;
        if self.values.len() == 1 {
            let mut c = vec![0.0; n];
            c[0] = self.values[0];
            return c;
        }
        (0..n)
            .map(|j| {
                (0..n)
                    .map(|eta| haar_sign(j, eta, dim) * self.values[eta])
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairTerm {
    pub input: PairFn,
    pub output: PairFn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftBlock {
    pub cube: CubeId,
    pub terms: Vec<PairTerm>,
}

#[derive(Clone, Copy, Debug)]
struct Side {
    slot: usize,
    n: usize,
    lins: [usize; 4],
    vals: [f64; 4],
}

#[derive(Clone, Copy, Debug)]
struct Compiled {
    inv_vol: f64,
    input: Side,
    output: Side,
}

/// Worst pair found by the normalization audit.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct AuditWitness {
    pub cube: CubeId,
    pub input_cube: CubeId,
    pub output_cube: CubeId,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct NormAudit {
    pub passed: bool,
    /// max over terms of sup|input| sup|output|.
    pub max_pair_product: f64,
    /// max over Q of |Q| ||a_Q||_inf divided by the number of terms sharing a pair.
    pub max_kernel_ratio: f64,
    /// max over Q of |Q| ||a_Q||_inf.
    pub max_kernel_raw: f64,
    pub witness: Option<AuditWitness>,
}

#[derive(Clone, Debug)]
pub struct ElementaryShift {
    lattice: Lattice,
    m: u32,
    n: u32,
    generalized: bool,
    blocks: Vec<ShiftBlock>,
    rescaled: bool,
    min_scale: f64,
    compiled: Vec<Compiled>,
}

impl PartialEq for ElementaryShift {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice
            && self.m == other.m
            && self.n == other.n
            && self.generalized == other.generalized
            && self.blocks == other.blocks
    }
}

/// Cubes at depth `depth` below `q`, in child order.
pub fn descendants(lat: &Lattice, q: &CubeId, depth: u32) -> Vec<CubeId> {
    let mut cur = vec![*q];
    for _ in 0..depth {
        cur = cur
            .iter()
            .flat_map(|c| (0..1usize << lat.dim()).map(move |e| lat.child(c, e)))
            .collect();
    }
    cur
}

impl ElementaryShift {
    /// Validates blocks and rescales any term whose sup-norm product exceeds 1.
    pub fn from_blocks(
        lat: &Lattice,
        m: u32,
        n: u32,
        generalized: bool,
        mut blocks: Vec<ShiftBlock>,
    ) -> Result<Self> {
        let mut rescaled = false;
        let mut min_scale: f64 = 1.0;
        for b in blocks.iter_mut() {
            for t in b.terms.iter_mut() {
                let p = t.input.sup() * t.output.sup();
                if p > 1.0 + AUDIT_SLACK {
                    let s = p.sqrt().recip();
                    t.input = t.input.scaled(s);
                    t.output = t.output.scaled(s);
                    rescaled = true;
                    min_scale = min_scale.min(s * s);
                }
            }
        }
        let mut s = Self::from_blocks_unchecked(lat, m, n, generalized, blocks)?;
        s.rescaled = rescaled;
        s.min_scale = min_scale;
        Ok(s)
    }

    /// Builds without enforcing the normalization; used for fault injection.
    pub fn from_blocks_unchecked(
        lat: &Lattice,
        m: u32,
        n: u32,
        generalized: bool,
        mut blocks: Vec<ShiftBlock>,
    ) -> Result<Self> {
        let d = lat.dim();
        blocks.sort_by_key(|b| b.cube);
        if blocks.windows(2).any(|w| w[0].cube == w[1].cube) {
            return invalid("duplicate active cube");
        }
        let mut compiled = Vec::new();
        for b in &blocks {
            lat.check(&b.cube)?;
            let inv_vol = lat.cube_volume(b.cube.level).recip();
            for t in &b.terms {
                let input = Self::compile_side(lat, &b.cube, &t.input, d)?;
                let output = Self::compile_side(lat, &b.cube, &t.output, d)?;
                compiled.push(Compiled {
                    inv_vol,
                    input,
                    output,
                });
            }
        }
        Ok(ElementaryShift {
            lattice: lat.clone(),
            m,
            n,
            generalized,
            blocks,
            rescaled: false,
            min_scale: 1.0,
            compiled,
        })
    }

    fn compile_side(lat: &Lattice, q: &CubeId, f: &PairFn, d: usize) -> Result<Side> {
        lat.check(&f.cube)?;
        if !lat.contains(q, &f.cube) {
            return invalid(format!("pair cube {} not inside {}", f.cube, q));
        }
        let mut side = Side {
            slot: 0,
            n: f.values.len(),
            lins: [0; 4],
            vals: [0.0; 4],
        };
        if f.values.len() == 1 {
            side.slot = lat.slot(f.cube.level);
            side.lins[0] = lat.lin(&f.cube);
            side.vals[0] = f.values[0];
        } else if f.values.len() == 1 << d {
            if f.cube.level <= lat.k_min() {
                return Err(Error::LevelOverflow {
                    level: f.cube.level - 1,
                    k_min: lat.k_min(),
                });
            }
            side.slot = lat.slot(f.cube.level - 1);
            for eta in 0..1 << d {
                side.lins[eta] = lat.lin(&lat.child(&f.cube, eta));
                side.vals[eta] = f.values[eta];
            }
        } else {
            return invalid(format!(
                "pair function on {} has {} values",
                f.cube,
                f.values.len()
            ));
        }
        if side.vals.iter().any(|v| !v.is_finite()) {
            return invalid("non-finite pair coefficient");
        }
        Ok(side)
    }

    pub fn zero(lat: &Lattice, m: u32, n: u32) -> Self {
        Self::from_blocks_unchecked(lat, m, n, false, Vec::new()).expect("empty shift")
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn complexity(&self) -> u32 {
        self.m.max(self.n)
    }

    pub fn is_generalized(&self) -> bool {
        self.generalized
    }

    pub fn was_rescaled(&self) -> bool {
        self.rescaled
    }

    /// Smallest factor applied to a term's coefficient product at build time.
    pub fn min_scale(&self) -> f64 {
        self.min_scale
    }

    pub fn blocks(&self) -> &[ShiftBlock] {
        &self.blocks
    }

    pub fn active_cubes(&self) -> BTreeSet<CubeId> {
        self.blocks.iter().map(|b| b.cube).collect()
    }

    pub fn term_count(&self) -> usize {
        self.compiled.len()
    }

    fn run(&self, f: &[f64], transpose: bool) -> Vec<f64> {
        let lat = &self.lattice;
        let h = lat.grid().cell_volume();
        let scaled: Vec<f64> = f.iter().map(|v| v * h).collect();
        let ints = lat.fold_up(&scaled);
        let mut out = lat.zero_levels();
        for c in &self.compiled {
            let (i, o) = if transpose {
                (&c.output, &c.input)
            } else {
                (&c.input, &c.output)
            };
            let src = &ints[i.slot];
            let ip: f64 = (0..i.n).map(|e| i.vals[e] * src[i.lins[e]]).sum();
            if ip == 0.0 {
                continue;
            }
            let coef = ip * c.inv_vol;
            let dst = &mut out[o.slot];
            for e in 0..o.n {
                dst[o.lins[e]] += coef * o.vals[e];
            }
        }
        lat.push_down(out)
    }

    /// Matrix-free application against Lebesgue measure.
    pub fn apply(&self, f: &StepFunction) -> Result<StepFunction> {
        f.check_lattice(&self.lattice)?;
        StepFunction::from_values(f.grid(), self.run(f.values(), false))
    }

    /// Application of the transposed shift.
    pub fn apply_transpose(&self, f: &StepFunction) -> Result<StepFunction> {
        f.check_lattice(&self.lattice)?;
        StepFunction::from_values(f.grid(), self.run(f.values(), true))
    }

    /// S_mu f = S(u f) for d mu = u dx.
    pub fn apply_weighted(&self, u: &Weight, f: &StepFunction) -> Result<StepFunction> {
        self.apply(&f.mul(u.as_function())?)
    }

    /// S*_nu g = S^T(v g) for d nu = v dx.
    pub fn adjoint_apply(&self, v: &Weight, g: &StepFunction) -> Result<StepFunction> {
        self.apply_transpose(&g.mul(v.as_function())?)
    }

    pub(crate) fn apply_raw(&self, f: &[f64]) -> Vec<f64> {
        self.run(f, false)
    }

    pub(crate) fn apply_transpose_raw(&self, f: &[f64]) -> Vec<f64> {
        self.run(f, true)
    }

    pub fn transpose(&self) -> ElementaryShift {
        let blocks = self
            .blocks
            .iter()
            .map(|b| ShiftBlock {
                cube: b.cube,
                terms: b
                    .terms
                    .iter()
                    .map(|t| PairTerm {
                        input: t.output.clone(),
                        output: t.input.clone(),
                    })
                    .collect(),
            })
            .collect();
        let mut s =
            Self::from_blocks_unchecked(&self.lattice, self.n, self.m, self.generalized, blocks)
                .expect("transpose of a valid shift");
        s.rescaled = self.rescaled;
        s.min_scale = self.min_scale;
        s
    }

    /// Same coefficients on the cubes of `a`, zero elsewhere.
    pub fn restrict(&self, a: &BTreeSet<CubeId>) -> ElementaryShift {
        let blocks = self
            .blocks
            .iter()
            .filter(|b| a.contains(&b.cube))
            .cloned()
            .collect();
        let mut s =
            Self::from_blocks_unchecked(&self.lattice, self.m, self.n, self.generalized, blocks)
                .expect("restriction of a valid shift");
        s.rescaled = self.rescaled;
        s.min_scale = self.min_scale;
        s
    }

    /// Kernel values a(x, y) = sum_Q a_Q(x, y), row x, column y, assembled cell by cell.
    pub fn dense_kernel(&self) -> Result<Vec<f64>> {
        let lat = &self.lattice;
        let n = lat.grid().len();
        if n > 1 << 13 {
            return invalid(format!("dense kernel of size {n} too large"));
        }
        let mut k = vec![0.0; n * n];
        for b in &self.blocks {
            let inv = lat.cube_volume(b.cube.level).recip();
            for t in &b.terms {
                let xs = piece_values(lat, &t.output);
                let ys = piece_values(lat, &t.input);
                for &(x, vx) in &xs {
                    for &(y, vy) in &ys {
                        k[x * n + y] += inv * vx * vy;
                    }
                }
            }
        }
        Ok(k)
    }

    /// Matrix of the shift acting on cell values: kernel times cell volume.
    pub fn dense_matrix(&self) -> Result<Vec<f64>> {
        let h = self.lattice.grid().cell_volume();
        Ok(self.dense_kernel()?.into_iter().map(|v| v * h).collect())
    }

    /// Checks sup|input| sup|output| <= 1 per term and the kernel bound per cube.
    pub fn audit(&self) -> NormAudit {
        let d = self.lattice.dim();
        let mut out = NormAudit {
            passed: true,
            max_pair_product: 0.0,
            max_kernel_ratio: 0.0,
            max_kernel_raw: 0.0,
            witness: None,
        };
        let mut worst = 0.0;
        for b in &self.blocks {
            let mut groups: Vec<((CubeId, CubeId), Vec<&PairTerm>)> = Vec::new();
            for t in &b.terms {
                let p = t.input.sup() * t.output.sup();
                out.max_pair_product = out.max_pair_product.max(p);
                if p > worst {
                    worst = p;
                    out.witness = Some(AuditWitness {
                        cube: b.cube,
                        input_cube: t.input.cube,
                        output_cube: t.output.cube,
                        value: p,
                    });
                }
                let key = (t.input.cube, t.output.cube);
                match groups.iter_mut().find(|g| g.0 == key) {
                    Some(g) => g.1.push(t),
                    None => groups.push((key, vec![t])),
                }
            }
            for (_, terms) in &groups {
                let ni = terms
                    .iter()
                    .map(|t| t.input.values.len())
                    .max()
                    .unwrap_or(1);
                let no = terms
                    .iter()
                    .map(|t| t.output.values.len())
                    .max()
                    .unwrap_or(1);
                let mut sup: f64 = 0.0;
                for ey in 0..ni {
                    for ex in 0..no {
                        let s: f64 = terms
                            .iter()
                            .map(|t| value_at(&t.input, ey, d) * value_at(&t.output, ex, d))
                            .sum();
                        sup = sup.max(s.abs());
                    }
                }
                out.max_kernel_raw = out.max_kernel_raw.max(sup);
                out.max_kernel_ratio = out.max_kernel_ratio.max(sup / terms.len() as f64);
            }
        }
        out.passed =
            out.max_pair_product <= 1.0 + AUDIT_SLACK && out.max_kernel_ratio <= 1.0 + AUDIT_SLACK;
        if out.passed && worst <= 1.0 + AUDIT_SLACK {
            out.witness = None;
        }
        out
    }

    /// Columns: cube, input cube, j', output cube, j'', value. Pattern 0 is the constant part.
    pub fn to_csv(&self) -> String {
        let d = self.lattice.dim();
        let mut s = String::from("cube_level,cube_index,input_level,input_index,j_in,output_level,output_index,j_out,value\n");
        let lat = &self.lattice;
        for b in &self.blocks {
            let mut acc: Vec<((CubeId, usize, CubeId, usize), f64)> = Vec::new();
            for t in &b.terms {
                let ci = t.input.pattern_coefficients(d);
                let co = t.output.pattern_coefficients(d);
                for (ji, a) in ci.iter().enumerate() {
                    for (jo, c) in co.iter().enumerate() {
                        if a * c == 0.0 {
                            continue;
                        }
                        let key = (t.input.cube, ji, t.output.cube, jo);
                        match acc.iter_mut().find(|e| e.0 == key) {
                            Some(e) => e.1 += a * c,
                            None => acc.push((key, a * c)),
                        }
                    }
                }
            }
            for ((qi, ji, qo, jo), v) in acc {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{:.16e}\n",
                    b.cube.level,
                    lat.lin(&b.cube),
                    qi.level,
                    lat.lin(&qi),
                    ji,
                    qo.level,
                    lat.lin(&qo),
                    jo,
                    v
                ));
            }
        }
        s
    }
}

fn value_at(f: &PairFn, eta: usize, _d: usize) -> f64 {
    if f.values.len() == 1 {
        f.values[0]
    } else {
        f.values[eta]
    }
}

fn piece_values(lat: &Lattice, f: &PairFn) -> Vec<(usize, f64)> {
    if f.values.len() == 1 {
        lat.cells(&f.cube)
            .into_iter()
            .map(|c| (c, f.values[0]))
            .collect()
    } else {
        (0..f.values.len())
            .flat_map(|eta| {
                let v = f.values[eta];
                lat.cells(&lat.child(&f.cube, eta))
                    .into_iter()
                    .map(move |c| (c, v))
            })
            .collect()
    }
}

/// Terms generated by a coefficient rule for one (Q, Q', Q'') triple.
pub type RawTerm = (Vec<f64>, Vec<f64>);

/// Enumerates every (Q', Q'') at depths (m, n) below each active Q and asks
/// `rule` for the terms of that pair; values are on the children of Q' and Q''.
pub fn build_shift(
    lat: &Lattice,
    m: u32,
    n: u32,
    active: &[CubeId],
    mut rule: impl FnMut(&CubeId, &CubeId, &CubeId) -> Vec<RawTerm>,
) -> Result<ElementaryShift> {
    let depth = m.max(n) as i32;
    let mut blocks = Vec::with_capacity(active.len());
    for q in active {
        lat.check(q)?;
        if q.level - depth - 1 < lat.k_min() {
            return Err(Error::LevelOverflow {
                level: q.level - depth - 1,
                k_min: lat.k_min(),
            });
        }
        let ins = descendants(lat, q, m);
        let outs = descendants(lat, q, n);
        let mut terms = Vec::new();
        for qi in &ins {
            for qo in &outs {
                for (a, b) in rule(q, qi, qo) {
                    if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    terms.push(PairTerm {
                        input: PairFn::new(*qi, a),
                        output: PairFn::new(*qo, b),
                    });
                }
            }
        }
        blocks.push(ShiftBlock { cube: *q, terms });
    }
    ElementaryShift::from_blocks(lat, m, n, false, blocks)
}

/// Cubes at levels >= `lowest`, coarsest first.
pub fn cubes_from_level(lat: &Lattice, lowest: i32) -> Vec<CubeId> {
    (lowest.max(lat.k_min())..=0)
        .rev()
        .flat_map(|k| lat.cubes(k))
        .collect()
}
