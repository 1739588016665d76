//! Test-only oracles shared by unit tests: central finite differences and
//! tolerance helpers. Kept independent of the tape's gradient path.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Central finite-difference gradient of `f` at `x`.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g.push((fp - fm) / (2.0 * h));
    }
    g
}

/// Largest relative error between `got` and `want`, with an absolute floor
/// so that near-zero entries compare absolutely.
pub fn max_rel_err(got: &[f64], want: &[f64], abs_floor: f64) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(&a, &b)| (a - b).abs() / a.abs().max(b.abs()).max(abs_floor))
        .fold(0.0, f64::max)
}

pub fn seeded_rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}
