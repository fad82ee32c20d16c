//! One integration window of the gated twin-beam experiment, plus the two
//! classical shot-noise-limited baselines.
//!
//! Photon path modelled per pair:
//!
//! ```text
//! pair ──► herald SPAD (eta_herald) ──fires──► gate open:   eta_switch
//!                                  └─silent──► gate closed: p_leak
//!      ──► probe optics (eta_pre_sample) ──► sample (eta_S)
//!      ──► post-sample optics (eta_opt) ──► camera (eta_det) + dark counts
//! ```
//!
//! Pair numbers are Poissonian and pairs are independent, so every stage is
//! an exact binomial thinning of the previous one.

use crate::photon_stats::{sample_poisson, thin_binomial, Efficiency, RngStream, StatsError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChainError {
    #[error("{field} must be finite and non-negative, got {value}")]
    NegativeRate { field: &'static str, value: f64 },
    #[error("no photon can reach the sample with this chain")]
    Degenerate,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Efficiencies and rates of the source → gate → sample → camera path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalChain {
    /// Mean photon pairs generated per window.
    pub pair_rate: f64,
    /// Herald arm collection times SPAD efficiency.
    pub eta_herald: Efficiency,
    /// Probe transmission through the open gate.
    pub eta_switch: Efficiency,
    /// Probability that an unheralded photon gets through the closed gate.
    pub p_leak: Efficiency,
    pub eta_pre_sample: Efficiency,
    /// Optics between sample and camera.
    pub eta_opt: Efficiency,
    /// Camera quantum efficiency.
    pub eta_det: Efficiency,
    /// Mean camera dark (background) counts per window.
    pub dark_mean: f64,
}

/// Which Klyshko pair to report: with the sample factor folded into `eta_p`,
/// or the bare instrument value that callers multiply by `eta_S` themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFactor {
    Excluded,
    Included,
}

/// Heralding (Klyshko) efficiencies implied by a chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveKlyshko {
    /// Probability that a heralded photon produces a camera count.
    pub eta_p: Efficiency,
    /// Fraction of sample-exposing photons that were heralded.
    pub eta_r: Efficiency,
}

/// Photon record of one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountsWindow {
    pub n_pairs: u64,
    /// Herald clicks, `N_R`.
    pub n_herald: u64,
    /// Photons that reached the sample, heralded or leaked.
    pub n_exposed: u64,
    /// Subset of `n_exposed` whose partner was heralded.
    pub n_exposed_heralded: u64,
    /// Camera photo-counts from heralded photons, i.e. what a time-resolving
    /// detector would report as coincidences `N_C`.
    pub n_coincident: u64,
    /// All camera counts, dark counts included.
    pub n_detected: u64,
    pub n_dark: u64,
}

/// Closed-form means of the [`CountsWindow`] fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedCounts {
    pub pairs: f64,
    pub herald: f64,
    pub exposed: f64,
    pub exposed_heralded: f64,
    pub coincident: f64,
    pub detected: f64,
}

impl OpticalChain {
    pub fn validate(&self) -> Result<(), ChainError> {
        if !self.pair_rate.is_finite() || self.pair_rate < 0.0 {
            return Err(ChainError::NegativeRate {
                field: "pair_rate",
                value: self.pair_rate,
            });
        }
        if !self.dark_mean.is_finite() || self.dark_mean < 0.0 {
            return Err(ChainError::NegativeRate {
                field: "dark_mean",
                value: self.dark_mean,
            });
        }
        Ok(())
    }

    /// Chain calibrated against the reported instrument: 40 000 heralds per
    /// 1 s window, 15% gate loss, 10% leakage, heralded fraction at the
    /// sample of 0.90 and a 90% efficient camera. Pre-sample transmission and
    /// background are set so that the camera-count precision ratio is 1.76 at
    /// unit transmittance and crosses the shot-noise limit near 0.4.
    pub fn reference_setup() -> Self {
        let eta_switch = Efficiency::new(0.85).unwrap();
        let p_leak = Efficiency::new(0.10).unwrap();
        let eta_herald = herald_efficiency_for(0.90, eta_switch, p_leak).unwrap();
        OpticalChain {
            pair_rate: 40_000.0 / eta_herald.get(),
            eta_herald,
            eta_switch,
            p_leak,
            eta_pre_sample: Efficiency::new(0.75).unwrap(),
            eta_opt: Efficiency::ONE,
            eta_det: Efficiency::new(0.90).unwrap(),
            dark_mean: 2_000.0,
        }
    }

    /// Everything lossless, no leakage, no background.
    pub fn lossless(pair_rate: f64) -> Self {
        OpticalChain {
            pair_rate,
            eta_herald: Efficiency::ONE,
            eta_switch: Efficiency::ONE,
            p_leak: Efficiency::ZERO,
            eta_pre_sample: Efficiency::ONE,
            eta_opt: Efficiency::ONE,
            eta_det: Efficiency::ONE,
            dark_mean: 0.0,
        }
    }

    /// Same chain with the source brightness scaled by `factor`.
    pub fn with_brightness(mut self, factor: f64) -> Self {
        self.pair_rate *= factor;
        self
    }

    /// Mean herald clicks per window.
    pub fn heralds_per_window(&self) -> f64 {
        self.pair_rate * self.eta_herald.get()
    }

    /// Transmission from the back of the sample to a camera count.
    pub fn post_sample(&self) -> Efficiency {
        self.eta_opt.then(self.eta_det)
    }

    fn heralded_to_sample(&self) -> Efficiency {
        self.eta_switch.then(self.eta_pre_sample)
    }

    fn unheralded_to_sample(&self) -> Efficiency {
        self.p_leak.then(self.eta_pre_sample)
    }

    pub fn expected(&self, eta_sample: Efficiency) -> ExpectedCounts {
        let herald = self.heralds_per_window();
        let exposed_heralded = herald * self.heralded_to_sample().get();
        let exposed_leaked =
            (self.pair_rate - herald) * self.unheralded_to_sample().get();
        let to_camera = eta_sample.get() * self.post_sample().get();
        ExpectedCounts {
            pairs: self.pair_rate,
            herald,
            exposed: exposed_heralded + exposed_leaked,
            exposed_heralded,
            coincident: exposed_heralded * to_camera,
            detected: (exposed_heralded + exposed_leaked) * to_camera + self.dark_mean,
        }
    }
}

/// Herald efficiency that makes the heralded fraction at the sample equal
/// `eta_r`, given the gate transmission and leakage.
pub fn herald_efficiency_for(
    eta_r: f64,
    eta_switch: Efficiency,
    p_leak: Efficiency,
) -> Result<Efficiency, ChainError> {
    let s = eta_switch.get();
    let l = p_leak.get();
    let denom = s * (1.0 - eta_r) + eta_r * l;
    if denom <= 0.0 {
        return Err(ChainError::Degenerate);
    }
    Ok(Efficiency::new(eta_r * l / denom)?)
}

pub fn simulate_window(
    chain: &OpticalChain,
    eta_sample: Efficiency,
    stream: &mut RngStream,
) -> Result<CountsWindow, ChainError> {
    chain.validate()?;
    let n_pairs = sample_poisson(chain.pair_rate, stream)?;
    let n_herald = thin_binomial(n_pairs, chain.eta_herald, stream);

    let exposed_heralded = thin_binomial(n_herald, chain.heralded_to_sample(), stream);
    let exposed_leaked = thin_binomial(n_pairs - n_herald, chain.unheralded_to_sample(), stream);

    let transmitted_heralded = thin_binomial(exposed_heralded, eta_sample, stream);
    let transmitted_leaked = thin_binomial(exposed_leaked, eta_sample, stream);

    let post = chain.post_sample();
    let n_coincident = thin_binomial(transmitted_heralded, post, stream);
    let leaked_counts = thin_binomial(transmitted_leaked, post, stream);
    let n_dark = sample_poisson(chain.dark_mean, stream)?;

    Ok(CountsWindow {
        n_pairs,
        n_herald,
        n_exposed: exposed_heralded + exposed_leaked,
        n_exposed_heralded: exposed_heralded,
        n_coincident,
        n_detected: n_coincident + leaked_counts + n_dark,
        n_dark,
    })
}

/// Analytic Klyshko pair of the gated source.
///
/// With `p_leak = 0` every photon at the sample was heralded and
/// `eta_r == 1`; likewise when the herald never misses.
pub fn effective_klyshko(
    chain: &OpticalChain,
    eta_sample: Efficiency,
    factor: SampleFactor,
) -> Result<EffectiveKlyshko, ChainError> {
    let heralded = chain.eta_herald.get() * chain.eta_switch.get();
    let leaked = chain.eta_herald.complement().get() * chain.p_leak.get();
    if heralded + leaked <= 0.0 || chain.eta_pre_sample.get() == 0.0 {
        return Err(ChainError::Degenerate);
    }
    let eta_r = if leaked == 0.0 {
        Efficiency::ONE
    } else {
        Efficiency::new(heralded / (heralded + leaked))?
    };
    let mut eta_p = chain.heralded_to_sample().then(chain.post_sample());
    if factor == SampleFactor::Included {
        eta_p = eta_p.then(eta_sample);
    }
    Ok(EffectiveKlyshko { eta_p, eta_r })
}

/// Coherent-state window: photons reaching the sample and camera counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassicalWindow {
    pub exposed: u64,
    pub detected: u64,
}

pub fn simulate_direct_classical_window(
    mean_photons_at_sample: f64,
    eta_sample: Efficiency,
    eta_det: Efficiency,
    stream: &mut RngStream,
) -> Result<ClassicalWindow, ChainError> {
    let exposed = sample_poisson(mean_photons_at_sample, stream)?;
    let transmitted = thin_binomial(exposed, eta_sample, stream);
    Ok(ClassicalWindow {
        exposed,
        detected: thin_binomial(transmitted, eta_det, stream),
    })
}

/// Shot-noise-limited direct measurement: a Poisson variate of mean
/// `mean · eta_S · eta_det`.
pub fn simulate_direct_classical(
    mean_photons_at_sample: f64,
    eta_sample: Efficiency,
    eta_det: Efficiency,
    stream: &mut RngStream,
) -> Result<u64, ChainError> {
    simulate_direct_classical_window(mean_photons_at_sample, eta_sample, eta_det, stream)
        .map(|w| w.detected)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DifferentialWindow {
    /// Photons sent towards the sample.
    pub exposed: u64,
    pub signal: u64,
    pub monitor: u64,
}

/// Beam-splitter differential measurement. A fraction `split` of the source
/// photons is sent through the sample, the rest to a monitor detector.
pub fn simulate_differential_classical_window(
    mean_photons: f64,
    split: Efficiency,
    eta_sample: Efficiency,
    eta_det: Efficiency,
    stream: &mut RngStream,
) -> Result<DifferentialWindow, ChainError> {
    let total = sample_poisson(mean_photons, stream)?;
    let exposed = thin_binomial(total, split, stream);
    let monitor = thin_binomial(total - exposed, eta_det, stream);
    let transmitted = thin_binomial(exposed, eta_sample, stream);
    Ok(DifferentialWindow {
        exposed,
        signal: thin_binomial(transmitted, eta_det, stream),
        monitor,
    })
}

pub fn simulate_differential_classical(
    mean_photons: f64,
    split: Efficiency,
    eta_sample: Efficiency,
    eta_det: Efficiency,
    stream: &mut RngStream,
) -> Result<(u64, u64), ChainError> {
    simulate_differential_classical_window(mean_photons, split, eta_sample, eta_det, stream)
        .map(|w| (w.signal, w.monitor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::StreamKey;

    fn eff(x: f64) -> Efficiency {
        Efficiency::new(x).unwrap()
    }

    fn streams(seed: u64, n: u64) -> impl Iterator<Item = RngStream> {
        (0..n).map(move |w| RngStream::new(seed, StreamKey::new(7, 0, 0, w)))
    }

    #[test]
    fn empty_source_gives_empty_window() {
        let mut chain = OpticalChain::reference_setup();
        chain.pair_rate = 0.0;
        chain.dark_mean = 0.0;
        for mut s in streams(1, 20) {
            assert_eq!(simulate_window(&chain, eff(0.5), &mut s).unwrap(), CountsWindow::default());
        }
    }

    #[test]
    fn lossless_chain_counts_every_pair() {
        let mut chain = OpticalChain::lossless(500.0);
        chain.p_leak = eff(0.3);
        for mut s in streams(2, 50) {
            let w = simulate_window(&chain, Efficiency::ONE, &mut s).unwrap();
            assert_eq!(w.n_herald, w.n_pairs);
            assert_eq!(w.n_exposed, w.n_pairs);
            assert_eq!(w.n_detected, w.n_pairs);
            assert_eq!(w.n_coincident, w.n_pairs);
        }
    }

    #[test]
    fn rejects_bad_rates() {
        let mut chain = OpticalChain::reference_setup();
        chain.dark_mean = -1.0;
        let mut s = RngStream::new(0, StreamKey::default());
        assert!(simulate_window(&chain, Efficiency::ONE, &mut s).is_err());
        chain.dark_mean = 0.0;
        chain.pair_rate = f64::NAN;
        assert!(chain.validate().is_err());
    }

    #[test]
    fn photon_accounting_per_window() {
        let chain = OpticalChain::reference_setup();
        for mut s in streams(3, 200) {
            let w = simulate_window(&chain, eff(0.6), &mut s).unwrap();
            assert!(w.n_herald <= w.n_pairs);
            assert!(w.n_exposed <= w.n_pairs);
            assert!(w.n_dark <= w.n_detected);
            assert!(w.n_detected - w.n_dark <= w.n_exposed);
            assert!(w.n_coincident <= w.n_exposed_heralded);
        }
        let mut gated = chain;
        gated.p_leak = Efficiency::ZERO;
        gated.dark_mean = 0.0;
        for mut s in streams(4, 200) {
            let w = simulate_window(&gated, eff(0.9), &mut s).unwrap();
            assert!(w.n_detected <= w.n_herald);
            assert_eq!(w.n_detected, w.n_coincident);
        }
    }

    #[test]
    fn klyshko_limits() {
        let mut chain = OpticalChain::reference_setup();
        chain.p_leak = Efficiency::ZERO;
        let k = effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded).unwrap();
        assert_eq!(k.eta_r, Efficiency::ONE);

        let mut chain = OpticalChain::reference_setup();
        chain.eta_herald = Efficiency::ONE;
        let k = effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded).unwrap();
        assert_eq!(k.eta_r, Efficiency::ONE);

        let chain = OpticalChain::reference_setup();
        let k = effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded).unwrap();
        assert!((k.eta_r.get() - 0.90).abs() < 1e-12);
        assert!((k.eta_p.get() - 0.85 * 0.75 * 0.9).abs() < 1e-12);
        let with = effective_klyshko(&chain, eff(0.5), SampleFactor::Included).unwrap();
        assert!((with.eta_p.get() - 0.5 * k.eta_p.get()).abs() < 1e-15);
    }

    #[test]
    fn klyshko_degenerate_chain() {
        let mut chain = OpticalChain::reference_setup();
        chain.eta_switch = Efficiency::ZERO;
        chain.p_leak = Efficiency::ZERO;
        assert_eq!(
            effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded),
            Err(ChainError::Degenerate)
        );
        let mut chain = OpticalChain::reference_setup();
        chain.eta_pre_sample = Efficiency::ZERO;
        assert!(effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded).is_err());
    }

    #[test]
    fn herald_efficiency_solves_target() {
        let x = herald_efficiency_for(0.9, eff(0.85), eff(0.10)).unwrap().get();
        assert!((0.90 - x * 0.85 / (x * 0.85 + (1.0 - x) * 0.10)).abs() < 1e-12);
        assert!((x - 0.09 / 0.175).abs() < 1e-12);
    }

    #[test]
    fn classical_edges() {
        let mut s = RngStream::new(0, StreamKey::default());
        assert_eq!(simulate_direct_classical(0.0, eff(0.5), eff(0.9), &mut s), Ok(0));
        assert_eq!(
            simulate_differential_classical(0.0, eff(0.5), eff(1.0), eff(1.0), &mut s),
            Ok((0, 0))
        );
        for _ in 0..100 {
            let (_, m) =
                simulate_differential_classical(1000.0, Efficiency::ONE, eff(0.7), eff(0.9), &mut s)
                    .unwrap();
            assert_eq!(m, 0);
        }
        assert!(simulate_direct_classical(-1.0, eff(0.5), eff(0.9), &mut s).is_err());
    }
}
