use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};

/// Synthetic label noise: `percent` is the number of irrelevant labels to add,
/// as a percentage of each instance's ground-truth label count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseConfig {
    pub percent: u32,
    pub seed: u64,
}

/// Number of noise labels for an instance with `g` true labels out of `l`.
///
/// `g * percent / 100` rounded half up, capped so that at most `l - 1` labels
/// end up as candidates.
pub fn noise_count(g: usize, percent: u32, l: usize) -> usize {
    let wanted = (g * percent as usize + 50) / 100;
    wanted.min(l.saturating_sub(1).saturating_sub(g))
}

/// Builds candidate sets from the ground truth by adding uniformly drawn
/// irrelevant labels (without replacement) to every instance.
///
/// Instances are visited in order and share one ChaCha8 stream seeded from
/// `cfg.seed`, so the result is reproducible on every platform.
pub fn inject_noise(ds: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    let truth = ds
        .truth()
        .ok_or_else(|| Error::State("noise injection needs ground-truth labels".into()))?;
    let (n, l) = truth.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cand = truth.clone();
    for i in 0..n {
        let g = truth.row_count(i);
        if g == 0 {
            return Err(Error::Validation(format!("instance {i} has no ground-truth label")));
        }
        let m = noise_count(g, cfg.percent, l);
        if m == 0 {
            continue;
        }
        let mut pool: Vec<usize> = (0..l).filter(|&j| !truth.get(i, j)).collect();
        // Partial Fisher-Yates: the first m slots become a uniform m-subset.
        for t in 0..m {
            let r = rng.random_range(t..pool.len());
            pool.swap(t, r);
        }
        for &j in &pool[..m] {
            cand.set(i, j, true);
        }
    }
    Dataset::new(ds.features().clone(), cand, Some(truth.clone()))
}
