use crate::error::{invalid, Result};
use crate::haar::haar_sign;
use crate::lattice::{CubeId, Lattice};
use crate::rng;
use crate::signal::StepFunction;

use super::{
    build_shift, cubes_from_level, descendants, ElementaryShift, PairFn, PairTerm, ShiftBlock,
};

fn pattern(j: usize, d: usize, c: f64) -> Vec<f64> {
    (0..1usize << d)
        .map(|eta| c * haar_sign(j, eta, d))
        .collect()
}

/// h^j_Q -> sign(Q) h^j_Q on every non-finest cube.
pub fn haar_multiplier(lat: &Lattice, signs: impl Fn(&CubeId) -> f64) -> Result<ElementaryShift> {
    let d = lat.dim();
    build_shift(
        lat,
        0,
        0,
        &cubes_from_level(lat, lat.k_min() + 1),
        |q, _, _| {
            let s = signs(q);
            (1..1usize << d)
                .map(|j| (pattern(j, d, 1.0), pattern(j, d, s)))
                .collect()
        },
    )
}

fn hash_bit(seed: u64, keys: &[u64]) -> bool {
    rng::derive(seed, keys) & 1 == 1
}

pub fn random_haar_multiplier(lat: &Lattice, seed: u64) -> Result<ElementaryShift> {
    haar_multiplier(lat, |q| {
        if hash_bit(
            seed,
            &[
                rng::SHIFT_TAG,
                q.level as i64 as u64,
                q.index[0],
                q.index[1],
            ],
        ) {
            1.0
        } else {
            -1.0
        }
    })
}

/// h_I -> 2^{-1/2} (h_{I-} - h_{I+}) on cubes with grandchildren.
pub fn petermichl_shift(lat: &Lattice) -> Result<ElementaryShift> {
    if lat.dim() != 1 {
        return invalid("the Petermichl shift is one-dimensional");
    }
    build_shift(
        lat,
        0,
        1,
        &cubes_from_level(lat, lat.k_min() + 2),
        |q, _, qo| {
            let minus = lat.child(q, 0) == *qo;
            let s = if minus { 1.0 } else { -1.0 };
            vec![(vec![-1.0, 1.0], vec![-s, s])]
        },
    )
}

#[derive(Clone, Debug)]
pub struct Paraproduct {
    pub shift: ElementaryShift,
    /// Factor applied to every Delta_Q b so that sup |h_Q| <= 1.
    pub scale: f64,
}

/// Pi f = sum_Q (E_Q f) h_Q with h_Q = scale * Delta_Q b, as a generalized (0,1) shift.
pub fn paraproduct(lat: &Lattice, b: &StepFunction) -> Result<Paraproduct> {
    let ints = b.cube_integrals(lat)?;
    let d = lat.dim();
    let mut raw: Vec<(CubeId, Vec<(CubeId, f64)>)> = Vec::new();
    let mut sup: f64 = 0.0;
    for q in cubes_from_level(lat, lat.k_min() + 1) {
        let avg = ints[lat.slot(q.level)][lat.lin(&q)] / lat.cube_volume(q.level);
        let cvol = lat.cube_volume(q.level - 1);
        let kids: Vec<(CubeId, f64)> = (0..1usize << d)
            .map(|eta| {
                let c = lat.child(&q, eta);
                (c, ints[lat.slot(c.level)][lat.lin(&c)] / cvol - avg)
            })
            .collect();
        sup = kids.iter().fold(sup, |m, k| m.max(k.1.abs()));
        raw.push((q, kids));
    }
    let scale = if sup > 1.0 { sup.recip() } else { 1.0 };
    let blocks = raw
        .into_iter()
        .map(|(q, kids)| ShiftBlock {
            cube: q,
            terms: kids
                .into_iter()
                .filter(|k| k.1 != 0.0)
                .map(|(c, v)| PairTerm {
                    input: PairFn::new(q, vec![1.0]),
                    output: PairFn::new(c, vec![v * scale]),
                })
                .collect(),
        })
        .collect();
    Ok(Paraproduct {
        shift: ElementaryShift::from_blocks(lat, 0, 1, true, blocks)?,
        scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RandomShiftKind {
    /// Every (Q', Q'') pair carries a random-sign Haar pair.
    Dense,
    /// One random (Q', Q'') pair per Q.
    Sparse,
}

/// Random normalized shift with parameters (m, n), active on every cube deep enough
/// (optionally only on `levels`).
pub fn random_shift(
    lat: &Lattice,
    m: u32,
    n: u32,
    kind: RandomShiftKind,
    seed: u64,
    levels: Option<&[i32]>,
) -> Result<ElementaryShift> {
    let d = lat.dim();
    let lowest = lat.k_min() + 1 + m.max(n) as i32;
    let active: Vec<CubeId> = cubes_from_level(lat, lowest)
        .into_iter()
        .filter(|q| levels.is_none_or(|ls| ls.contains(&q.level)))
        .collect();
    let key = |q: &CubeId, extra: u64| {
        rng::derive(
            seed,
            &[
                rng::SHIFT_TAG,
                q.level as i64 as u64,
                q.index[0],
                q.index[1],
                extra,
            ],
        )
    };
    let pick = |q: &CubeId, depth: u32, salt: u64| -> CubeId {
        let ds = descendants(lat, q, depth);
        ds[(key(q, salt) % ds.len() as u64) as usize]
    };
    let pj = |h: u64| if d == 1 { 1 } else { 1 + (h % 3) as usize };
    build_shift(lat, m, n, &active, |q, qi, qo| {
        let h = rng::derive(
            key(q, 0),
            &[qi.index[0], qi.index[1], qo.index[0], qo.index[1]],
        );
        let sign = if h & 1 == 1 { 1.0 } else { -1.0 };
        let term = vec![(pattern(pj(h >> 1), d, 1.0), pattern(pj(h >> 8), d, sign))];
        match kind {
            RandomShiftKind::Dense => term,
            RandomShiftKind::Sparse => {
                if *qi == pick(q, m, 1) && *qo == pick(q, n, 2) {
                    term
                } else {
                    vec![]
                }
            }
        }
    })
}
