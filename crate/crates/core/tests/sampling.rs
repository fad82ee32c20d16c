mod common;

use common::{assert_within, chi_square_p, mean, variance};
use ssnscope_core::photon_stats::{sample_bernoulli, sample_poisson, thin_binomial};
use ssnscope_core::{Efficiency, RngStream, StreamKey};
use statrs::distribution::{Binomial, Discrete, Poisson};

fn eff(x: f64) -> Efficiency {
    Efficiency::new(x).unwrap()
}

fn stream(seed: u64, scenario: u64) -> RngStream {
    RngStream::new(seed, StreamKey::new(scenario, 0, 0, 0))
}

#[test]
fn thinned_poisson_is_poisson() {
    let (lambda, p) = (40.0, 0.35);
    let mut s = stream(11, 1);
    let xs: Vec<u64> = (0..20_000)
        .map(|_| {
            let n = sample_poisson(lambda, &mut s).unwrap();
            thin_binomial(n, eff(p), &mut s)
        })
        .collect();
    let reference = Poisson::new(lambda * p).unwrap();
    let pv = chi_square_p(&xs, |k| reference.pmf(k), 40);
    assert!(pv > 1e-3, "chi-square p = {pv}");
    let f: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
    let n = f.len() as f64;
    assert_within(mean(&f), lambda * p, (lambda * p / n).sqrt(), 4.0, "mean");
    // Var of the sample variance of a Poisson(m): (m + 2m²) / n.
    let m = lambda * p;
    assert_within(variance(&f), m, ((m + 2.0 * m * m) / n).sqrt(), 4.0, "variance");
}

#[test]
fn successive_thinning_composes() {
    let (n, a, b) = (30u64, 0.6, 0.45);
    let mut s = stream(12, 2);
    let xs: Vec<u64> = (0..20_000)
        .map(|_| {
            let k = thin_binomial(n, eff(a), &mut s);
            thin_binomial(k, eff(b), &mut s)
        })
        .collect();
    let reference = Binomial::new(a * b, n).unwrap();
    let pv = chi_square_p(&xs, |k| reference.pmf(k), n);
    assert!(pv > 1e-3, "chi-square p = {pv}");
}

#[test]
fn poisson_matches_pmf_at_large_mean() {
    let lambda = 2_500.0;
    let mut s = stream(13, 3);
    let xs: Vec<u64> = (0..20_000).map(|_| sample_poisson(lambda, &mut s).unwrap()).collect();
    let reference = Poisson::new(lambda).unwrap();
    // Shift to the bulk of the distribution: cells below 2300 are merged.
    let shifted: Vec<u64> = xs.iter().map(|&x| x.saturating_sub(2_300)).collect();
    let pmf = |k: u64| {
        if k == 0 {
            (0..=2_300).map(|j| reference.pmf(j)).sum()
        } else {
            reference.pmf(k + 2_300)
        }
    };
    let pv = chi_square_p(&shifted, pmf, 400);
    assert!(pv > 1e-3, "chi-square p = {pv}");
}

#[test]
fn bernoulli_rate_and_independent_keys() {
    let mut s = stream(14, 4);
    let hits = (0..50_000).filter(|_| sample_bernoulli(eff(0.3), &mut s)).count() as f64;
    assert_within(hits / 50_000.0, 0.3, (0.3 * 0.7 / 50_000.0f64).sqrt(), 4.0, "rate");

    // Counts drawn on neighbouring pixel keys are uncorrelated.
    let n = 5_000;
    let draw = |pixel: u64, w: u64| {
        let mut s = RngStream::new(99, StreamKey::new(0, pixel, 0, w));
        sample_poisson(100.0, &mut s).unwrap() as f64
    };
    let a: Vec<f64> = (0..n).map(|w| draw(0, w)).collect();
    let b: Vec<f64> = (0..n).map(|w| draw(1, w)).collect();
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64;
    let corr = cov / (variance(&a) * variance(&b)).sqrt();
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "correlation {corr}");
}
