//! Standard and weighted Haar systems with fast analysis and synthesis.

use crate::error::{invalid, Error, Result};
use crate::lattice::{CubeId, Lattice};
use crate::signal::{StepFunction, Weight};

/// Sign of the tensor Haar pattern `j` on child `eta`: minus on the lower
/// half and plus on the upper half of every axis where `j` has a 1 bit.
pub fn haar_sign(j: usize, eta: usize, dim: usize) -> f64 {
    let mut s = 1.0;
    for a in 0..dim {
        if (j >> a) & 1 == 1 && (eta >> a) & 1 == 0 {
            s = -s;
        }
    }
    s
}

pub fn standard_haar(lat: &Lattice, q: &CubeId, j: usize) -> Result<StepFunction> {
    lat.check(q)?;
    let d = lat.dim();
    if j == 0 || j >= 1 << d {
        return invalid(format!("Haar index {j} outside 1..{}", (1 << d) - 1));
    }
    let norm = lat.cube_volume(q.level).sqrt().recip();
    let mut f = StepFunction::zeros(lat.grid())?.into_values();
    for (eta, c) in lat.children(q)?.iter().enumerate() {
        let v = norm * haar_sign(j, eta, d);
        for i in lat.cells(c) {
            f[i] = v;
        }
    }
    StepFunction::from_values(lat.grid(), f)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HaarCoefficients {
    lattice: Lattice,
    root_average: f64,
    coeffs: Vec<Vec<f64>>,
}

impl HaarCoefficients {
    pub fn zeros(lat: &Lattice) -> Self {
        let per = (1usize << lat.dim()) - 1;
        let coeffs = lat
            .levels()
            .map(|k| {
                if k == lat.k_min() {
                    Vec::new()
                } else {
                    vec![0.0; lat.cubes_at(k) * per]
                }
            })
            .collect();
        HaarCoefficients {
            lattice: lat.clone(),
            root_average: 0.0,
            coeffs,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn root_average(&self) -> f64 {
        self.root_average
    }

    pub fn set_root_average(&mut self, v: f64) {
        self.root_average = v;
    }

    fn per(&self) -> usize {
        (1usize << self.lattice.dim()) - 1
    }

    fn position(&self, q: &CubeId, j: usize) -> Result<(usize, usize)> {
        self.lattice.check(q)?;
        if q.level == self.lattice.k_min() || j == 0 || j > self.per() {
            return invalid(format!("no Haar coefficient ({q}, {j})"));
        }
        Ok((
            self.lattice.slot(q.level),
            self.lattice.lin(q) * self.per() + j - 1,
        ))
    }

    pub fn get(&self, q: &CubeId, j: usize) -> Result<f64> {
        let (s, i) = self.position(q, j)?;
        Ok(self.coeffs[s][i])
    }

    pub fn set(&mut self, q: &CubeId, j: usize, v: f64) -> Result<()> {
        let (s, i) = self.position(q, j)?;
        self.coeffs[s][i] = v;
        Ok(())
    }

    /// Number of stored values including the root average.
    pub fn count(&self) -> usize {
        self.coeffs.iter().map(Vec::len).sum::<usize>() + 1
    }

    /// (cube, j, value) for every Haar coefficient, coarsest level first.
    pub fn iter(&self) -> impl Iterator<Item = (CubeId, usize, f64)> + '_ {
        let per = self.per();
        let lat = &self.lattice;
        (lat.k_min() + 1..=0).rev().flat_map(move |k| {
            self.coeffs[lat.slot(k)]
                .iter()
                .enumerate()
                .map(move |(i, &v)| (lat.from_lin(k, i / per), i % per + 1, v))
        })
    }

    /// Sum of squared coefficients plus the squared root average.
    pub fn energy(&self) -> f64 {
        self.root_average.powi(2) + self.coeffs.iter().flatten().map(|c| c * c).sum::<f64>()
    }

    /// Columns level, cube index, j, value; the root average is the row with j = 0.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,cube_index,j,value\n");
        s.push_str(&format!("0,0,0,{:.16e}\n", self.root_average));
        for (q, j, v) in self.iter() {
            s.push_str(&format!(
                "{},{},{},{:.16e}\n",
                q.level,
                self.lattice.lin(&q),
                j,
                v
            ));
        }
        s
    }
}

/// All <f, h^j_Q> and the root average in O(N).
pub fn analyze(lat: &Lattice, f: &StepFunction) -> Result<HaarCoefficients> {
    let ints = f.cube_integrals(lat)?;
    let d = lat.dim();
    let per = (1usize << d) - 1;
    let mut out = HaarCoefficients::zeros(lat);
    out.root_average = ints[lat.slot(0)][0];
    for k in lat.k_min() + 1..=0 {
        let norm = lat.cube_volume(k).sqrt().recip();
        let below = &ints[lat.slot(k - 1)];
        let dst = &mut out.coeffs[lat.slot(k)];
        for p in 0..lat.cubes_at(k) {
            let q = lat.from_lin(k, p);
            let mut child = [0.0f64; 4];
            for (eta, c) in child.iter_mut().enumerate().take(1 << d) {
                *c = below[lat.lin(&lat.child(&q, eta))];
            }
            for j in 1..=per {
                let s: f64 = (0..1 << d)
                    .map(|eta| haar_sign(j, eta, d) * child[eta])
                    .sum();
                dst[p * per + j - 1] = norm * s;
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`analyze`].
pub fn synthesize(c: &HaarCoefficients) -> Result<StepFunction> {
    let lat = &c.lattice;
    let d = lat.dim();
    let per = c.per();
    let mut cur = vec![c.root_average];
    for k in (lat.k_min() + 1..=0).rev() {
        let norm = lat.cube_volume(k).sqrt().recip();
        let mut next = vec![0.0; lat.cubes_at(k - 1)];
        let src = &c.coeffs[lat.slot(k)];
        for (p, &avg) in cur.iter().enumerate() {
            let q = lat.from_lin(k, p);
            for eta in 0..1usize << d {
                let delta: f64 = (1..=per)
                    .map(|j| src[p * per + j - 1] * haar_sign(j, eta, d))
                    .sum();
                next[lat.lin(&lat.child(&q, eta))] = avg + norm * delta;
            }
        }
        cur = next;
    }
    StepFunction::from_values(lat.grid(), cur)
}

/// L2(mu)-orthonormal, mu-mean-zero functions constant on the children of a cube.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedHaarBasis {
    pub cube: CubeId,
    pub children: Vec<CubeId>,
    /// Child values of each basis function, in child order.
    pub functions: Vec<Vec<f64>>,
}

impl WeightedHaarBasis {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn to_step(&self, lat: &Lattice, i: usize) -> Result<StepFunction> {
        let mut v = StepFunction::zeros(lat.grid())?.into_values();
        for (c, &val) in self.children.iter().zip(&self.functions[i]) {
            for cell in lat.cells(c) {
                v[cell] = val;
            }
        }
        StepFunction::from_values(lat.grid(), v)
    }
}

/// Gram-Schmidt over 1_{c_i} - mu(c_i)/mu(Q) 1_Q for positive-measure children after the first.
pub fn weighted_haar_basis(mu: &Weight, lat: &Lattice, q: &CubeId) -> Result<WeightedHaarBasis> {
    let children = lat.children(q)?;
    let m: Vec<f64> = children
        .iter()
        .map(|c| mu.measure(lat, c))
        .collect::<Result<_>>()?;
    let total: f64 = m.iter().sum();
    let mut functions: Vec<Vec<f64>> = Vec::new();
    if total > 0.0 {
        let positive: Vec<usize> = (0..m.len()).filter(|&i| m[i] > 0.0).collect();
        let ip = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).zip(&m).map(|((x, y), w)| x * y * w).sum()
        };
        for &i in positive.iter().skip(1) {
            let mut u: Vec<f64> = (0..m.len())
                .map(|e| {
                    if m[e] == 0.0 {
                        0.0
                    } else {
                        (e == i) as u8 as f64 - m[i] / total
                    }
                })
                .collect();
            for b in &functions {
                let p = ip(&u, b);
                u.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = ip(&u, &u).sqrt();
            if n > 0.0 {
                functions.push(u.into_iter().map(|x| x / n).collect());
            }
        }
    }
    Ok(WeightedHaarBasis {
        cube: *q,
        children,
        functions,
    })
}

/// E^mu_Q f as a function supported on Q.
pub fn weighted_expectation(
    f: &StepFunction,
    mu: &Weight,
    lat: &Lattice,
    q: &CubeId,
) -> Result<StepFunction> {
    let avg = crate::signal::weighted_average(f, mu, lat, q)?;
    Ok(StepFunction::indicator(lat, q)?.scale(avg))
}

/// Delta^mu_Q f = sum over children J of E^mu_J f - E^mu_Q f.
pub fn weighted_delta(
    f: &StepFunction,
    mu: &Weight,
    lat: &Lattice,
    q: &CubeId,
) -> Result<StepFunction> {
    if q.level <= lat.k_min() {
        return Err(Error::LevelOverflow {
            level: q.level - 1,
            k_min: lat.k_min(),
        });
    }
    let mut out = weighted_expectation(f, mu, lat, q)?.scale(-1.0);
    for c in lat.children(q)? {
        out = out.add(&weighted_expectation(f, mu, lat, &c)?)?;
    }
    Ok(out)
}
