use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::lattice::{CubeId, Lattice};
use crate::rng;
use crate::signal::{StepFunction, Weight};

use super::{mismatch, SLACK};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonNode {
    pub cube: CubeId,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub a: f64,
    /// mu-mass carried by a leaf; zero on interior nodes.
    pub mass: f64,
}

/// A finite dyadic tree with a measure on its leaves and a Carleson sequence
/// on its nodes. Parents precede their children.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CarlesonTree {
    nodes: Vec<CarlesonNode>,
    leaves: Vec<usize>,
    measure: Vec<f64>,
}

impl CarlesonTree {
    pub fn new(nodes: Vec<CarlesonNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("tree has no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                if p >= i || !nodes[p].children.contains(&i) {
                    return invalid(format!("node {i} has inconsistent parent {p}"));
                }
            } else if i != 0 {
                return invalid("only node 0 may be the root");
            }
            if !(n.a >= 0.0) || !(n.mass >= 0.0) || !n.a.is_finite() || !n.mass.is_finite() {
                return invalid(format!("node {i} has a negative or non-finite value"));
            }
        }
        let leaves: Vec<usize> = (0..nodes.len())
            .filter(|&i| nodes[i].children.is_empty())
            .collect();
        let mut measure: Vec<f64> = nodes
            .iter()
            .map(|n| if n.children.is_empty() { n.mass } else { 0.0 })
            .collect();
        for i in (1..nodes.len()).rev() {
            let p = nodes[i].parent.expect("non-root");
            measure[p] += measure[i];
        }
        if leaves.iter().any(|&l| !(measure[l] > 0.0)) {
            return invalid("every leaf needs positive mass");
        }
        Ok(CarlesonTree {
            nodes,
            leaves,
            measure,
        })
    }

    /// Dyadic tree of every lattice cube; leaves are the finest cells.
    pub fn from_lattice(lat: &Lattice, a: &[Vec<f64>], mu: &Weight) -> Result<Self> {
        if mu.grid() != lat.grid() || a.len() != lat.levels().count() {
            return mismatch();
        }
        let h = lat.grid().cell_volume();
        let mut nodes = Vec::new();
        let mut index = std::collections::HashMap::new();
        for q in lat.all_cubes() {
            let parent = if q.level < 0 {
                Some(index[&lat.parent(&q)?])
            } else {
                None
            };
            let i = nodes.len();
            let mass = if q.level == lat.k_min() {
                mu.values()[lat.cells(&q)[0]] * h
            } else {
                0.0
            };
            let row = &a[lat.slot(q.level)];
            if row.len() != lat.cubes_at(q.level) {
                return mismatch();
            }
            nodes.push(CarlesonNode {
                cube: q,
                parent,
                children: vec![],
                a: row[lat.lin(&q)],
                mass,
            });
            if let Some(p) = parent {
                nodes[p].children.push(i);
            }
            index.insert(q, i);
        }
        Self::new(nodes)
    }

    /// I_0 ⊃ I_1 ⊃ ... ⊃ I_K with I_k = [0, 2^{-k}), leaves J_{k+1} = I_k \ I_{k+1} and I_K,
    /// mu(I_{k+1}) = theta_k mu(I_k), and the saturated sequence a_{I_k} = mu(J_{k+1}), a_{I_K} = mu(I_K).
    pub fn chain(thetas: &[f64]) -> Result<Self> {
        if thetas.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return invalid("chain ratios must lie in (0, 1)");
        }
        let k = thetas.len();
        let mut mu_i = vec![1.0; k + 1];
        for j in 0..k {
            mu_i[j + 1] = mu_i[j] * thetas[j];
        }
        let mut nodes: Vec<CarlesonNode> = Vec::with_capacity(2 * k + 1);
        let mut prev: Option<usize> = None;
        for j in 0..=k {
            let i = nodes.len();
            let leaf = j == k;
            let a = if leaf { mu_i[k] } else { mu_i[j] - mu_i[j + 1] };
            nodes.push(CarlesonNode {
                cube: CubeId::new(-(j as i32), [0, 0]),
                parent: prev,
                children: vec![],
                a,
                mass: if leaf { mu_i[k] } else { 0.0 },
            });
            if let Some(p) = prev {
                nodes[p].children.push(i);
                nodes.push(CarlesonNode {
                    cube: CubeId::new(-(j as i32), [1, 0]),
                    parent: Some(p),
                    children: vec![],
                    a: 0.0,
                    mass: mu_i[j - 1] - mu_i[j],
                });
                nodes[p].children.push(i + 1);
            }
            prev = Some(i);
        }
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[CarlesonNode] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[usize] {
        &self.leaves
    }

    pub fn measure(&self, node: usize) -> f64 {
        self.measure[node]
    }

    /// Checks sum_{Q ⊂ R} a_Q <= mu(R) for every node, returning the worst witness on failure.
    pub fn check_carleson(&self) -> Result<f64> {
        let mut sums: Vec<f64> = self.nodes.iter().map(|n| n.a).collect();
        for i in (1..self.nodes.len()).rev() {
            let p = self.nodes[i].parent.expect("non-root");
            sums[p] += sums[i];
        }
        let mut worst = (0.0, 0usize);
        for (i, &s) in sums.iter().enumerate() {
            let r = s / self.measure[i];
            if r > worst.0 {
                worst = (r, i);
            }
        }
        if worst.0 > 1.0 + SLACK {
            let i = worst.1;
            return Err(Error::CarlesonViolation {
                cube: self.nodes[i].cube,
                sum: sums[i],
                measure: self.measure[i],
            });
        }
        Ok(worst.0)
    }

    /// mu-averages of a leaf function over every node.
    pub fn averages(&self, f: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.nodes.len()];
        for (&l, &v) in self.leaves.iter().zip(f) {
            s[l] = v * self.measure[l];
        }
        for i in (1..self.nodes.len()).rev() {
            let p = self.nodes[i].parent.expect("non-root");
            s[p] += s[i];
        }
        s.iter().zip(&self.measure).map(|(a, m)| a / m).collect()
    }

    /// sum_R a_R |f_R|^2 / ||f||^2_{L2(mu)} for f given on the leaves.
    pub fn ratio(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.leaves.len() {
            return mismatch();
        }
        let den: f64 = self
            .leaves
            .iter()
            .zip(f)
            .map(|(&l, v)| v * v * self.measure[l])
            .sum();
        if den == 0.0 {
            return invalid("f vanishes in L2(mu)");
        }
        let avg = self.averages(f);
        let num: f64 = self.nodes.iter().zip(&avg).map(|(n, v)| n.a * v * v).sum();
        Ok(num / den)
    }

    fn apply(&self, x: &[f64], out: &mut [f64], s: &mut [f64]) {
        s.iter_mut().for_each(|v| *v = 0.0);
        for (&l, &v) in self.leaves.iter().zip(x) {
            s[l] = v * self.measure[l].sqrt();
        }
        for i in (1..self.nodes.len()).rev() {
            let p = self.nodes[i].parent.expect("non-root");
            s[p] += s[i];
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let own = n.a * s[i] / (self.measure[i] * self.measure[i]);
            s[i] = own + n.parent.map_or(0.0, |p| s[p]);
        }
        for (o, &l) in out.iter_mut().zip(&self.leaves) {
            *o = self.measure[l].sqrt() * s[l];
        }
    }

    /// Leaf function maximizing the embedding ratio (power iteration on the
    /// symmetrized embedding form), and the attained ratio.
    pub fn optimal_function(
        &self,
        start: Option<&[f64]>,
        tol: f64,
        max_iter: usize,
    ) -> (Vec<f64>, f64) {
        let n = self.leaves.len();
        let mut x: Vec<f64> = match start {
            Some(f) if f.len() == n => self
                .leaves
                .iter()
                .zip(f)
                .map(|(&l, v)| v * self.measure[l].sqrt())
                .collect(),
            _ => self
                .leaves
                .iter()
                .map(|&l| self.measure[l].sqrt())
                .collect(),
        };
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nx = norm(&x);
        x.iter_mut().for_each(|a| *a /= nx);
        let mut y = vec![0.0; n];
        let mut s = vec![0.0; self.nodes.len()];
        let mut lambda = 0.0;
        for _ in 0..max_iter {
            self.apply(&x, &mut y, &mut s);
            let new: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ny = norm(&y);
            if ny == 0.0 {
                break;
            }
            x.iter_mut().zip(&y).for_each(|(a, b)| *a = b / ny);
            let done = (new - lambda).abs() <= tol * new;
            lambda = new;
            if done {
                break;
            }
        }
        let f: Vec<f64> = self
            .leaves
            .iter()
            .zip(&x)
            .map(|(&l, v)| v / self.measure[l].sqrt())
            .collect();
        let r = self.ratio(&f).unwrap_or(0.0);
        (f, r)
    }
}

/// sum_R a_R |f_R|^2 / ||f||^2_{L2(mu)} over every lattice cube, after verifying
/// the Carleson condition; `a` is indexed `[slot(level)][lin]`.
pub fn carleson_embedding_ratio(
    lat: &Lattice,
    a: &[Vec<f64>],
    mu: &Weight,
    f: &StepFunction,
) -> Result<f64> {
    f.check_lattice(lat)?;
    let tree = CarlesonTree::from_lattice(lat, a, mu)?;
    tree.check_carleson()?;
    let leaf_values: Vec<f64> = tree
        .leaves()
        .iter()
        .map(|&l| f.values()[lat.cells(&tree.nodes()[l].cube)[0]])
        .collect();
    tree.ratio(&leaf_values)
}

/// Random measure, random function and a random Carleson sequence scaled to be admissible;
/// a quarter of the instances saturate the condition on one level.
pub fn random_carleson_instance(
    lat: &Lattice,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Weight, StepFunction)> {
    let mut g = rng::stream(seed, &[rng::WEIGHT_TAG, 0xca]);
    let n = lat.grid().len();
    let spread: f64 = g.gen_range(0.0..4.0);
    let mu = Weight::from_values(
        lat.grid(),
        (0..n)
            .map(|_| (spread * g.gen_range(-1.0..1.0)).exp())
            .collect(),
    )?;
    let f =
        StepFunction::from_values(lat.grid(), (0..n).map(|_| g.gen_range(-1.0..1.0)).collect())?;
    let measures = mu.cube_measures(lat)?;
    let mut a: Vec<Vec<f64>> = measures.iter().map(|row| vec![0.0; row.len()]).collect();
    if g.gen_bool(0.25) {
        let k = g.gen_range(lat.k_min()..=0);
        a[lat.slot(k)].clone_from(&measures[lat.slot(k)]);
    } else {
        let density: f64 = g.gen_range(0.05..1.0);
        for row in a.iter_mut() {
            for v in row.iter_mut() {
                if g.gen_bool(density) {
                    *v = g.gen_range(0.0..1.0);
                }
            }
        }
        let tree = CarlesonTree::from_lattice(lat, &a, &mu)?;
        let mut sums: Vec<f64> = tree.nodes().iter().map(|n| n.a).collect();
        for i in (1..sums.len()).rev() {
            sums[tree.nodes()[i].parent.expect("non-root")] += sums[i];
        }
        let worst = (0..sums.len())
            .map(|i| sums[i] / tree.measure(i))
            .fold(0.0, f64::max);
        if worst > 0.0 {
            let c = g.gen_range(0.5..1.0) / worst;
            a.iter_mut().flatten().for_each(|v| *v *= c);
        }
    }
    Ok((a, mu, f))
}

#[derive(Clone, Debug, Serialize)]
pub struct CarlesonSearch {
    pub ratio: f64,
    pub initial_ratio: f64,
    pub thetas: Vec<f64>,
    pub accepted: usize,
    pub iterations: usize,
    pub depth: usize,
    pub seed: u64,
    #[serde(skip)]
    pub tree: CarlesonTree,
    #[serde(skip)]
    pub f: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Randomized hill-climb over the branching ratios of a saturated chain of the
/// given depth, with the embedded function re-optimized at every proposal.
pub fn carleson_sharpness_search(
    depth: usize,
    iterations: usize,
    seed: u64,
) -> Result<CarlesonSearch> {
    if depth == 0 {
        return invalid("chain depth must be positive");
    }
    let mut g = rng::stream(seed, &[rng::SAMPLE_TAG, 0xc5]);
    let mut logits = vec![0.0; depth];
    let eval = |l: &[f64], start: Option<&[f64]>| -> Result<(Vec<f64>, f64)> {
        let t: Vec<f64> = l.iter().map(|&x| logistic(x)).collect();
        let tree = CarlesonTree::chain(&t)?;
        Ok(tree.optimal_function(start, 1e-13, 20_000))
    };
    let (mut f, initial) = eval(&logits, None)?;
    let mut best = initial;
    let mut accepted = 0;
    for _ in 0..iterations {
        let prop: Vec<f64> = logits
            .iter()
            .map(|&x| {
                let z: f64 = g.sample(StandardNormal);
                if g.gen_bool(0.2) {
                    x + 0.3 * z
                } else {
                    x
                }
            })
            .collect();
        let (pf, r) = eval(&prop, Some(&f))?;
        if r > best {
            best = r;
            logits = prop;
            f = pf;
            accepted += 1;
        }
    }
    let thetas: Vec<f64> = logits.iter().map(|&x| logistic(x)).collect();
    let tree = CarlesonTree::chain(&thetas)?;
    tree.check_carleson()?;
    let ratio = tree.ratio(&f)?;
    Ok(CarlesonSearch {
        ratio,
        initial_ratio: initial,
        thetas,
        accepted,
        iterations,
        depth,
        seed,
        tree,
        f,
    })
}
