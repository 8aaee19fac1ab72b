//! Deterministic per-trajectory random streams.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TrajectoryRng = ChaCha8Rng;

/// Stream for trajectory `index` under `master_seed`.
///
/// Streams are ChaCha8 keyed by the master seed with the trajectory index as
/// the stream id, so each trajectory's draws depend only on (seed, index).
pub fn trajectory_rng(master_seed: u64, index: u64) -> TrajectoryRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible() {
        let a: u64 = trajectory_rng(7, 3).next_u64();
        assert_eq!(a, trajectory_rng(7, 3).next_u64());
        assert_ne!(a, trajectory_rng(7, 4).next_u64());
        assert_ne!(a, trajectory_rng(8, 3).next_u64());
    }

    #[test]
    fn neighbouring_streams_are_uncorrelated() {
        let n = 100_000;
        for (i, j) in [(0, 1), (1, 2), (5, 1000)] {
            let (mut a, mut b) = (trajectory_rng(42, i), trajectory_rng(42, j));
            let (mut sxy, mut sx, mut sy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                let (x, y) = (open01(&mut a), open01(&mut b));
                sx += x;
                sy += y;
                sxy += x * y;
                sxx += x * x;
                syy += y * y;
            }
            let nf = n as f64;
            let cov = sxy / nf - sx * sy / (nf * nf);
            let corr = cov / libm::sqrt((sxx / nf - sx * sx / (nf * nf)) * (syy / nf - sy * sy / (nf * nf)));
            assert!(corr.abs() < 4.0 / libm::sqrt(nf), "streams {i}, {j}: {corr}");
        }
    }
}
