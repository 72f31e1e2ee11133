use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rand_distr::StandardNormal;

use crate::bench::random_instance;
use crate::lqr_core::{
    bass_gain, in_stabilizing_set, kleinman, Gain, SystemInstance, DEFAULT_KLEINMAN_MAX_ITER,
    DEFAULT_KLEINMAN_TOL,
};
use crate::matlin::Mat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance with a stabilizing gain: the optimal gain moved along a
/// standard normal direction, halving the step until it stays stabilizing.
pub fn random_stabilizing_pair(
    rng: &mut ChaCha8Rng,
    n: RangeInclusive<usize>,
    m: RangeInclusive<usize>,
) -> (SystemInstance, Gain) {
    let n = rng.random_range(n);
    let m = rng.random_range(m);
    let sys = random_instance(n, m, 1.0, 1.0, rng).unwrap();
    let start = bass_gain(&sys).unwrap();
    let base = kleinman(&sys, &start, DEFAULT_KLEINMAN_TOL, DEFAULT_KLEINMAN_MAX_ITER)
        .unwrap()
        .k_star;
    let dir = Mat::from_fn(m, n, |_, _| rng.sample(StandardNormal));
    let mut scale = 1.0;
    loop {
        let k = Gain::new(base.as_mat() + &dir * scale).unwrap();
        if in_stabilizing_set(&sys, &k).unwrap() {
            return (sys, k);
        }
        scale *= 0.5;
    }
}

/// Central differences of a scalar function of a matrix,
/// step `h = 1e-6 · (1 + |entry|)`.
pub fn central_difference<F>(k: &Mat, mut f: F) -> Mat
where
    F: FnMut(&Mat) -> f64,
{
    let mut grad = Mat::zeros(k.nrows(), k.ncols());
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let h = 1e-6 * (1.0 + k[(i, j)].abs());
            let mut plus = k.clone();
            plus[(i, j)] += h;
            let mut minus = k.clone();
            minus[(i, j)] -= h;
            grad[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    grad
}
