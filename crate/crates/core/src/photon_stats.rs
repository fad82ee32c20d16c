//! Seeded sampling primitives for photon counting.
//!
//! Every random draw in the crate goes through an [`RngStream`]. A stream is
//! a ChaCha8 generator whose 256-bit key is built directly from the master
//! seed and the first three components of the [`StreamKey`]; the fourth
//! component (the window index) selects the ChaCha stream id. No hashing is
//! involved, so distinct keys can never collide and the sequence a window
//! sees does not depend on which thread simulates it or in which order.

use rand::distr::{Bernoulli, Distribution};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Poisson};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("efficiency must lie in [0, 1], got {0}")]
    EfficiencyOutOfRange(f64),
    #[error("poisson mean must be finite and non-negative, got {0}")]
    InvalidMean(f64),
}

/// A probability in `[0, 1]`: detector quantum efficiency, optical
/// transmission, gate leakage, sample transmittance.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Efficiency(f64);

impl Efficiency {
    pub const ZERO: Efficiency = Efficiency(0.0);
    pub const ONE: Efficiency = Efficiency(1.0);

    pub fn new(value: f64) -> Result<Self, StatsError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Efficiency(value))
        } else {
            Err(StatsError::EfficiencyOutOfRange(value))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// Efficiency of two elements in series.
    #[inline]
    pub fn then(self, other: Efficiency) -> Efficiency {
        Efficiency(self.0 * other.0)
    }

    #[inline]
    pub fn complement(self) -> Efficiency {
        Efficiency(1.0 - self.0)
    }
}

impl TryFrom<f64> for Efficiency {
    type Error = StatsError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Efficiency::new(value)
    }
}

impl From<Efficiency> for f64 {
    fn from(e: Efficiency) -> f64 {
        e.0
    }
}

impl<'de> Deserialize<'de> for Efficiency {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        Efficiency::new(v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Efficiency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Coordinates of one substream: which scenario, which pixel, which
/// repetition of the scan and which integration window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamKey {
    pub scenario: u64,
    pub pixel: u64,
    pub repetition: u64,
    pub window: u64,
}

impl StreamKey {
    pub const fn new(scenario: u64, pixel: u64, repetition: u64, window: u64) -> Self {
        StreamKey {
            scenario,
            pixel,
            repetition,
            window,
        }
    }

    pub const fn with_window(self, window: u64) -> Self {
        StreamKey { window, ..self }
    }
}

/// Deterministic random stream addressed by `(master_seed, key)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    key: StreamKey,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, key: StreamKey) -> Self {
        let mut seed = [0u8; 32];
        seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
        seed[8..16].copy_from_slice(&key.scenario.to_le_bytes());
        seed[16..24].copy_from_slice(&key.pixel.to_le_bytes());
        seed[24..32].copy_from_slice(&key.repetition.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(key.window);
        RngStream {
            master_seed,
            key,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Fresh stream sharing this stream's master seed.
    pub fn derive(&self, key: StreamKey) -> RngStream {
        RngStream::new(self.master_seed, key)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// One exact Poisson variate (inversion for small means, transformed
/// rejection for large ones).
pub fn sample_poisson(mean: f64, stream: &mut RngStream) -> Result<u64, StatsError> {
    if !mean.is_finite() || mean < 0.0 {
        return Err(StatsError::InvalidMean(mean));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|_| StatsError::InvalidMean(mean))?;
    let k: f64 = dist.sample(stream);
    Ok(k as u64)
}

/// Binomial loss channel: each of `n` photons survives independently with
/// probability `p`.
pub fn thin_binomial(n: u64, p: Efficiency, stream: &mut RngStream) -> u64 {
    match p.get() {
        _ if n == 0 => 0,
        0.0 => 0,
        1.0 => n,
        // Binomial::new only rejects p outside [0, 1].
        x => Binomial::new(n, x)
            .expect("efficiency is a valid probability")
            .sample(stream),
    }
}

pub fn sample_bernoulli(p: Efficiency, stream: &mut RngStream) -> bool {
    Bernoulli::new(p.get())
        .expect("efficiency is a valid probability")
        .sample(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(seed: u64, window: u64) -> RngStream {
        RngStream::new(seed, StreamKey::new(1, 2, 3, window))
    }

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    #[test]
    fn efficiency_rejects_out_of_range() {
        assert!(Efficiency::new(-1e-9).is_err());
        assert!(Efficiency::new(1.0 + 1e-9).is_err());
        assert!(Efficiency::new(f64::NAN).is_err());
        assert_eq!(Efficiency::new(0.25).unwrap().get(), 0.25);
    }

    #[test]
    fn identical_keys_identical_sequences() {
        let mut a = stream(99, 7);
        let mut b = stream(99, 7);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
        let mut c = stream(99, 8);
        assert_ne!(xs[0], c.next_u64());
        let mut d = stream(100, 7);
        assert_ne!(xs[0], d.next_u64());
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        // Pairs of uniforms from neighbouring windows: mean, variance and
        // cross-correlation at 3 sigma.
        let n = 20_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for w in 0..n as u64 {
            let mut a = RngStream::new(5, StreamKey::new(0, 0, 0, w));
            let mut b = RngStream::new(5, StreamKey::new(0, 1, 0, w));
            xs.push(a.next_u64() as f64 / u64::MAX as f64);
            ys.push(b.next_u64() as f64 / u64::MAX as f64);
        }
        let (mx, vx) = mean_var(&xs);
        let (my, _) = mean_var(&ys);
        let se_mean = (1.0f64 / 12.0 / n as f64).sqrt();
        assert!((mx - 0.5).abs() < 3.0 * se_mean);
        assert!((my - 0.5).abs() < 3.0 * se_mean);
        assert!((vx - 1.0 / 12.0).abs() < 3.0 * (1.0 / 180.0 / n as f64).sqrt());
        let cov = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / (n as f64 - 1.0);
        let corr = cov / (1.0 / 12.0);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "corr {corr}");
    }

    #[test]
    fn poisson_degenerate_and_errors() {
        let mut s = stream(1, 0);
        assert_eq!(sample_poisson(0.0, &mut s), Ok(0));
        assert!(sample_poisson(-1.0, &mut s).is_err());
        assert!(sample_poisson(f64::INFINITY, &mut s).is_err());
        assert!(sample_poisson(f64::NAN, &mut s).is_err());
        for _ in 0..1000 {
            assert_eq!(sample_poisson(1e-12, &mut s).unwrap(), 0);
        }
    }

    #[test]
    fn poisson_large_mean_moments() {
        let mut s = stream(2, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_poisson(10_000.0, &mut s).unwrap() as f64)
            .collect();
        let (m, v) = mean_var(&xs);
        assert!((m - 10_000.0).abs() < 3.0 * (10_000.0f64 / n as f64).sqrt());
        // Var of the sample variance of a Poisson ~ 2 mu^2 / n for large mu.
        assert!((v - 10_000.0).abs() < 3.0 * (2.0 * 1e8 / n as f64).sqrt());
    }

    #[test]
    fn poisson_small_mean_pmf() {
        let mut s = stream(3, 0);
        let n = 100_000;
        let mu: f64 = 1.3;
        let mut zeros = 0;
        for _ in 0..n {
            if sample_poisson(mu, &mut s).unwrap() == 0 {
                zeros += 1;
            }
        }
        let p0 = (-mu).exp();
        let frac = zeros as f64 / n as f64;
        assert!((frac - p0).abs() < 3.0 * (p0 * (1.0 - p0) / n as f64).sqrt());
    }

    #[test]
    fn thinning_identity_and_opaque() {
        let mut s = stream(4, 0);
        assert_eq!(thin_binomial(57, Efficiency::ONE, &mut s), 57);
        assert_eq!(thin_binomial(57, Efficiency::ZERO, &mut s), 0);
        assert_eq!(thin_binomial(0, Efficiency::new(0.3).unwrap(), &mut s), 0);
        for _ in 0..500 {
            assert!(thin_binomial(57, Efficiency::new(0.4).unwrap(), &mut s) <= 57);
        }
    }

    #[test]
    fn bernoulli_edges_and_rate() {
        let mut s = stream(5, 0);
        assert!(sample_bernoulli(Efficiency::ONE, &mut s));
        assert!(!sample_bernoulli(Efficiency::ZERO, &mut s));
        let n = 100_000;
        let p = Efficiency::new(0.10).unwrap();
        let hits = (0..n).filter(|_| sample_bernoulli(p, &mut s)).count();
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.10).abs() < 0.003, "{frac}");
    }
}
