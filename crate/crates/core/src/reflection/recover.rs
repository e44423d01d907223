use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{ReflectionState, C64};

/// Second eigenvalue below this fraction of the first counts as rank one.
pub const RANK_ONE_RATIO: f64 = 1e-8;

/// Unit-modulus v from a lifted column [v; t]: v_m ← e^{j·arg(v_m/t)}.
fn normalize(col: &DVector<C64>) -> Vec<C64> {
    let m = col.len() - 1;
    let last = col[m];
    let rot = if last.norm() > 0.0 { last.conj() / last.norm() } else { C64::new(1.0, 0.0) };
    (0..m)
        .map(|i| {
            let z = col[i] * rot;
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect()
}

fn eigen_desc(v: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = v.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_columns(&idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (vals, vecs)
}

pub fn is_rank_one(v: &DMatrix<C64>) -> bool {
    let (vals, _) = eigen_desc(v);
    vals.len() < 2 || vals[1] <= RANK_ONE_RATIO * vals[0]
}

/// Candidate unit-modulus vectors from V*: the principal eigenvector first,
/// then `count` Gaussian draws ξ ~ CN(0, V*). A rank-one V* yields only the
/// exact factor.
pub fn rank_one_candidates(v: &DMatrix<C64>, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let (vals, vecs) = eigen_desc(v);
    let principal = normalize(&vecs.column(0).into_owned());
    if vals.len() < 2 || vals[1] <= RANK_ONE_RATIO * vals[0] {
        return vec![principal];
    }
    let n = vals.len();
    let scales: Vec<f64> = vals.iter().map(|l| l.max(0.0).sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 1);
    out.push(principal);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..count {
        let r = DVector::from_fn(n, |i, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * h, im * h) * scales[i]
        });
        out.push(normalize(&(&vecs * r)));
    }
    out
}

/// Best candidate under `score` (`None` marks infeasible); `None` if no
/// candidate is feasible.
pub fn recover_rank_one<F>(v: &DMatrix<C64>, count: usize, seed: u64, mut score: F) -> Option<(Vec<C64>, f64)>
where
    F: FnMut(&[C64]) -> Option<f64>,
{
    let mut best: Option<(Vec<C64>, f64)> = None;
    for cand in rank_one_candidates(v, count, seed) {
        if let Some(s) = score(&cand) {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((cand, s));
            }
        }
    }
    best
}

/// Level index of the nearest phase in {(2l+1)Δ/2}; ties go to the smaller
/// element, with θ = 0 resolving to the first level.
pub fn quantize_phase(theta: f64, bits: u32) -> u32 {
    let levels = 1u64 << bits;
    let step = 2.0 * PI / levels as f64;
    let t = theta.rem_euclid(2.0 * PI);
    let l = (t / step).ceil() as i64 - 1;
    l.clamp(0, levels as i64 - 1) as u32
}

pub fn quantize(v: &[C64], bits: u32) -> ReflectionState {
    let levels: Vec<u32> = v.iter().map(|z| quantize_phase(z.arg(), bits)).collect();
    ReflectionState::from_levels(&levels, bits)
}

/// Level indices of a discrete reflection.
pub fn levels_of(reflection: &ReflectionState, bits: u32) -> Vec<u32> {
    reflection.theta.iter().map(|&t| quantize_phase(t, bits)).collect()
}
