use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::capacitance::CapacitanceFrame;
use crate::error::{Error, Result};
use crate::par::{map_range, Execution};

/// Additive zero-mean Gaussian noise per channel with variance
/// `C_m^2 / 10^(snr_db / 10)`. `snr_db = +inf` disables noise.
pub fn add_noise(c: &CapacitanceFrame, snr_db: f64, seed: u64) -> CapacitanceFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    noisy(c, snr_db, &mut rng)
}

fn noisy(c: &CapacitanceFrame, snr_db: f64, rng: &mut ChaCha8Rng) -> CapacitanceFrame {
    if snr_db == f64::INFINITY {
        return c.clone();
    }
    let rel = 10f64.powf(-snr_db / 20.0);
    let values = c
        .values
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(rng);
            v + v.abs() * rel * z
        })
        .collect();
    CapacitanceFrame { values }
}

/// `n` independent noisy copies of `clean`. Frame `k` draws from stream `k`
/// of a ChaCha8 generator seeded with `seed`, so the output does not depend
/// on the execution policy.
pub fn noisy_frames(
    clean: &CapacitanceFrame,
    snr_db: f64,
    n: usize,
    seed: u64,
    exec: Execution,
) -> Vec<CapacitanceFrame> {
    map_range(exec, n, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        noisy(clean, snr_db, &mut rng)
    })
}

/// Per-channel arithmetic mean.
pub fn average_frames(frames: &[CapacitanceFrame]) -> Result<CapacitanceFrame> {
    let first = frames.first().ok_or(Error::EmptyFrames)?;
    let mut acc = vec![0.0; first.len()];
    for f in frames {
        if f.len() != acc.len() {
            return Err(Error::dim("frame length", acc.len(), f.len()));
        }
        acc.iter_mut().zip(&f.values).for_each(|(a, v)| *a += v);
    }
    let n = frames.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(CapacitanceFrame { values: acc })
}
