#![allow(dead_code)]

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson chi-square p-value of integer samples against a pmf. Cells with
/// expected count below 5 are merged into their neighbour, and the tail
/// beyond `max_k` forms a final cell.
pub fn chi_square_p(samples: &[u64], pmf: impl Fn(u64) -> f64, max_k: u64) -> f64 {
    let n = samples.len() as f64;
    let mut observed = vec![0.0; max_k as usize + 2];
    for &s in samples {
        observed[(s.min(max_k + 1)) as usize] += 1.0;
    }
    let mut expected: Vec<f64> = (0..=max_k).map(|k| n * pmf(k)).collect();
    let head: f64 = expected.iter().sum();
    expected.push((n - head).max(0.0));

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (oi, ei) in observed.into_iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = cells.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = (cells.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Asserts `|observed − expected| ≤ k·se`.
pub fn assert_within(observed: f64, expected: f64, se: f64, k: f64, what: &str) {
    assert!(
        (observed - expected).abs() <= k * se,
        "{what}: observed {observed}, expected {expected}, se {se}"
    );
}
