//! Transmittance estimators and precision ratios.
//!
//! The quantum estimator is the ratio of heralding efficiencies measured
//! with and without the sample. Precision is reported as `Γ`, the variance
//! a shot-noise-limited measurement would reach with the same number of
//! photons through the sample divided by the variance actually obtained.
//! `Γ > 1` is sub-shot-noise.

use crate::photon_stats::{Efficiency, RngStream, StreamKey};
use crate::twin_beam::{
    effective_klyshko, simulate_differential_classical_window, ChainError, CountsWindow, OpticalChain, SampleFactor,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimationError {
    #[error("estimate undefined: {0}")]
    Undefined(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("precision ratio singular: eta_S * eta_P = {0} >= 1")]
    Singular(f64),
    #[error("series has {0} entries, at least 2 are required")]
    SeriesTooShort(usize),
    #[error("experimental variance is zero; precision ratio is infinite")]
    ZeroVariance,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

type Result<T> = std::result::Result<T, EstimationError>;

/// Which counts stand in for coincidences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountSource {
    /// All camera counts, dark-corrected with the configured mean. This is
    /// what the CCD hybrid scheme actually observes.
    Camera,
    /// Camera counts from heralded photons only, as a time-resolving
    /// detector would register them.
    Coincidence,
}

/// Summed counts over one or more windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountsAggregate {
    pub windows: u64,
    pub n_herald: u64,
    pub n_exposed: u64,
    pub n_exposed_heralded: u64,
    pub n_coincident: u64,
    pub n_detected: u64,
}

impl CountsAggregate {
    pub fn push(&mut self, w: &CountsWindow) {
        self.windows += 1;
        self.n_herald += w.n_herald;
        self.n_exposed += w.n_exposed;
        self.n_exposed_heralded += w.n_exposed_heralded;
        self.n_coincident += w.n_coincident;
        self.n_detected += w.n_detected;
    }

    /// Heralds per window.
    pub fn herald_mean(&self) -> f64 {
        self.n_herald as f64 / self.windows.max(1) as f64
    }

    pub fn detected_mean(&self) -> f64 {
        self.n_detected as f64 / self.windows.max(1) as f64
    }
}

impl<'a> FromIterator<&'a CountsWindow> for CountsAggregate {
    fn from_iter<I: IntoIterator<Item = &'a CountsWindow>>(iter: I) -> Self {
        let mut agg = CountsAggregate::default();
        for w in iter {
            agg.push(w);
        }
        agg
    }
}

impl FromIterator<CountsWindow> for CountsAggregate {
    fn from_iter<I: IntoIterator<Item = CountsWindow>>(iter: I) -> Self {
        let mut agg = CountsAggregate::default();
        for w in iter {
            agg.push(&w);
        }
        agg
    }
}

impl From<&CountsWindow> for CountsAggregate {
    fn from(w: &CountsWindow) -> Self {
        std::iter::once(w).collect()
    }
}

/// A point estimate and whether dark correction had to be clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmittanceEstimate {
    pub value: f64,
    pub clamped: bool,
}

/// `N_C / N_R`. Dark counts counted as coincidences can push this above 1;
/// the value is returned as is.
pub fn klyshko_efficiency(n_coinc: u64, n_singles: u64) -> Result<f64> {
    if n_singles == 0 {
        return Err(EstimationError::Undefined("no singles counts"));
    }
    Ok(n_coinc as f64 / n_singles as f64)
}

/// Heralding ratio of an aggregate, `(counts − dark) / heralds`.
pub fn heralding_ratio(
    agg: &CountsAggregate,
    source: CountSource,
    dark_mean: f64,
) -> Result<TransmittanceEstimate> {
    if agg.n_herald == 0 {
        return Err(EstimationError::Undefined("no herald counts"));
    }
    let net = match source {
        CountSource::Camera => agg.n_detected as f64 - dark_mean * agg.windows as f64,
        CountSource::Coincidence => agg.n_coincident as f64,
    };
    Ok(TransmittanceEstimate {
        value: net.max(0.0) / agg.n_herald as f64,
        clamped: net < 0.0,
    })
}

/// Ratio of the heralding efficiency with the sample in place to the one
/// measured without it.
pub fn estimate_transmittance_klyshko(
    with_sample: &CountsAggregate,
    no_sample: &CountsAggregate,
    source: CountSource,
    dark_mean: f64,
) -> Result<TransmittanceEstimate> {
    let reference = heralding_ratio(no_sample, source, dark_mean)?;
    if reference.value <= 0.0 {
        return Err(EstimationError::Undefined("reference heralding ratio is zero"));
    }
    let with = heralding_ratio(with_sample, source, dark_mean)?;
    Ok(TransmittanceEstimate {
        value: with.value / reference.value,
        clamped: with.clamped || reference.clamped,
    })
}

/// Repeated transmittance estimates of one quantity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EstimateSeries {
    pub estimates: Vec<f64>,
    /// Mean photons reaching the sample per estimate, `⟨N_In⟩`.
    pub n_input_photons_mean: Option<f64>,
}

impl EstimateSeries {
    pub fn new(estimates: Vec<f64>) -> Self {
        EstimateSeries {
            estimates,
            n_input_photons_mean: None,
        }
    }

    pub fn with_input_photons(mut self, n: f64) -> Self {
        self.n_input_photons_mean = Some(n);
        self
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.estimates.iter().sum::<f64>() / self.len() as f64)
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> Result<f64> {
        sample_variance(&self.estimates)
    }

    pub fn std_error(&self) -> Result<f64> {
        Ok((self.variance()? / self.len() as f64).sqrt())
    }
}

pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    let n = xs.len();
    if n < 2 {
        return Err(EstimationError::SeriesTooShort(n));
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    Ok(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64)
}

/// Direct measurement: `detected / (N_in · eta_det)` per window.
pub fn estimate_transmittance_direct(
    detected: &[u64],
    mean_input: f64,
    eta_det: Efficiency,
) -> Result<EstimateSeries> {
    let norm = mean_input * eta_det.get();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(EstimationError::InvalidParameter(format!(
            "direct normalisation mean_input * eta_det = {norm}"
        )));
    }
    let estimates = detected.iter().map(|&d| d as f64 / norm).collect();
    Ok(EstimateSeries::new(estimates).with_input_photons(mean_input))
}

/// Output of the differential estimator: windows with a silent monitor
/// cannot be normalised and are dropped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DifferentialSeries {
    pub series: EstimateSeries,
    pub dropped: usize,
}

/// `(signal / monitor) / calibration_ratio` per window, where the
/// calibration ratio is the signal/monitor ratio without the sample.
pub fn estimate_transmittance_differential(
    signal: &[u64],
    monitor: &[u64],
    calibration_ratio: f64,
) -> Result<DifferentialSeries> {
    if signal.len() != monitor.len() {
        return Err(EstimationError::InvalidParameter(format!(
            "signal ({}) and monitor ({}) lengths differ",
            signal.len(),
            monitor.len()
        )));
    }
    if !(calibration_ratio > 0.0 && calibration_ratio.is_finite()) {
        return Err(EstimationError::InvalidParameter(format!(
            "calibration ratio {calibration_ratio}"
        )));
    }
    let mut out = DifferentialSeries::default();
    for (&s, &m) in signal.iter().zip(monitor) {
        if m == 0 {
            out.dropped += 1;
        } else {
            out.series
                .estimates
                .push(s as f64 / m as f64 / calibration_ratio);
        }
    }
    Ok(out)
}

/// Photons incident on the sample, inferred from the mean camera signal:
/// `(⟨N_det⟩ − ⟨N_dc⟩) / (eta_opt · eta_S)`.
///
/// `eta_opt` is the whole transmission between the back of the sample and a
/// recorded count, camera quantum efficiency included.
pub fn input_photons(n_det_mean: f64, n_dc_mean: f64, eta_opt: Efficiency, eta_sample: f64) -> Result<f64> {
    let denom = eta_opt.get() * eta_sample;
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(EstimationError::InvalidParameter(format!(
            "eta_opt * eta_sample = {denom}"
        )));
    }
    let net = n_det_mean - n_dc_mean;
    if net < 0.0 {
        return Err(EstimationError::InvalidParameter(format!(
            "mean counts {n_det_mean} below dark level {n_dc_mean}"
        )));
    }
    Ok(net / denom)
}

/// Shot-noise variance of the direct estimator: `eta_S / (eta_det · N_in)`.
pub fn coherent_variance(eta_sample: f64, eta_det: Efficiency, n_input: f64) -> Result<f64> {
    if !(n_input > 0.0 && n_input.is_finite()) {
        return Err(EstimationError::InvalidParameter(format!("n_input = {n_input}")));
    }
    if eta_det.get() == 0.0 {
        return Err(EstimationError::InvalidParameter("eta_det = 0".into()));
    }
    Ok(eta_sample / (eta_det.get() * n_input))
}

/// `Γ = eta_R / (1 − eta_S·eta_P)` for coincidence counting.
pub fn gamma_analytic(eta_sample: f64, eta_p: Efficiency, eta_r: Efficiency) -> Result<f64> {
    let product = eta_sample * eta_p.get();
    if product >= 1.0 {
        return Err(EstimationError::Singular(product));
    }
    Ok(eta_r.get() / (1.0 - product))
}

/// Sub-shot-noise is reachable at all only if `eta_P + eta_R > 1`.
pub fn ssn_threshold(eta_p: Efficiency, eta_r: Efficiency) -> bool {
    eta_r.get() > 1.0 - eta_p.get()
}

/// Parameters of the closed-form precision ratio for camera-count
/// detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Heralded photon → camera count, sample excluded.
    pub eta_p: Efficiency,
    /// Heralded fraction of the photons at the sample.
    pub eta_r: Efficiency,
    pub heralds_per_window: f64,
    pub dark_mean: f64,
    /// Transmission from the back of the sample to a count (optics × QE).
    pub post_sample: Efficiency,
}

impl CameraModel {
    pub fn from_chain(chain: &OpticalChain) -> Result<Self> {
        let k = effective_klyshko(chain, Efficiency::ONE, SampleFactor::Excluded)?;
        Ok(CameraModel {
            eta_p: k.eta_p,
            eta_r: k.eta_r,
            heralds_per_window: chain.heralds_per_window(),
            dark_mean: chain.dark_mean,
            post_sample: chain.post_sample(),
        })
    }
}

/// Precision ratio of the camera-count Klyshko estimator against a
/// coherent baseline detected with efficiency `baseline_eta_det`.
///
/// The camera cannot tell leaked from heralded photons, so leakage adds
/// Poisson noise that the coincidence formula does not see; dark counts
/// add a term that dominates at low transmittance. To first order in the
/// herald-number fluctuations,
///
/// ```text
/// Γ = (q/e) / (1 − 2·ηP·ηS + ηP·ηS/ηR + ηR·d/(H·ηP·ηS))
/// ```
///
/// with `q` the post-sample efficiency, `e` the baseline efficiency, `H`
/// heralds and `d` dark counts per window. With `ηR = 1` and `d = 0` this
/// reduces to the coincidence result.
pub fn gamma_camera_analytic(eta_sample: f64, model: &CameraModel, baseline_eta_det: Efficiency) -> Result<f64> {
    if !(eta_sample > 0.0) {
        return Err(EstimationError::InvalidParameter(format!("eta_sample = {eta_sample}")));
    }
    if model.eta_r.get() == 0.0 || model.eta_p.get() == 0.0 || !(model.heralds_per_window > 0.0) {
        return Err(EstimationError::InvalidParameter("degenerate camera model".into()));
    }
    if baseline_eta_det.get() == 0.0 {
        return Err(EstimationError::InvalidParameter("baseline eta_det = 0".into()));
    }
    let p = model.eta_p.get() * eta_sample;
    let r = model.eta_r.get();
    let denom = 1.0 - 2.0 * p + p / r + r * model.dark_mean / (model.heralds_per_window * p);
    Ok(model.post_sample.get() / baseline_eta_det.get() / denom)
}

/// Which classical reference a precision ratio was taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    SameDetectorEfficiency,
    IdealDetector,
    Differential,
}

/// Per-photon variance of a classical reference measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    /// Coherent light detected with the given efficiency.
    Coherent(Efficiency),
    /// Variance × photons-at-sample of the differential scheme, from
    /// [`differential_per_photon_variance`].
    Differential { per_photon_variance: f64 },
}

impl Baseline {
    pub fn kind(&self) -> BaselineKind {
        match self {
            Baseline::Coherent(e) if e.get() == 1.0 => BaselineKind::IdealDetector,
            Baseline::Coherent(_) => BaselineKind::SameDetectorEfficiency,
            Baseline::Differential { .. } => BaselineKind::Differential,
        }
    }

    /// Variance the baseline reaches with `n_input` photons at the sample.
    pub fn variance(&self, eta_sample: f64, n_input: f64) -> Result<f64> {
        match *self {
            Baseline::Coherent(e) => coherent_variance(eta_sample, e, n_input),
            Baseline::Differential { per_photon_variance } => {
                if !(n_input > 0.0) {
                    return Err(EstimationError::InvalidParameter(format!("n_input = {n_input}")));
                }
                Ok(per_photon_variance / n_input)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionReport {
    pub gamma: f64,
    pub gamma_stderr: f64,
    pub baseline_kind: BaselineKind,
    pub eta_sample_est: f64,
}

/// `Γ` of one series against a coherent baseline with efficiency
/// `baseline_eta_det`, evaluated at `eta_sample_ref`.
pub fn gamma_empirical(
    experimental: &EstimateSeries,
    baseline_eta_det: Efficiency,
    eta_sample_ref: f64,
) -> Result<PrecisionReport> {
    gamma_against(experimental, &Baseline::Coherent(baseline_eta_det), eta_sample_ref)
}

pub fn gamma_against(
    experimental: &EstimateSeries,
    baseline: &Baseline,
    eta_sample_ref: f64,
) -> Result<PrecisionReport> {
    let n_in = experimental
        .n_input_photons_mean
        .ok_or_else(|| EstimationError::InvalidParameter("series has no input photon count".into()))?;
    let var = experimental.variance()?;
    if var == 0.0 {
        return Err(EstimationError::ZeroVariance);
    }
    let gamma = baseline.variance(eta_sample_ref, n_in)? / var;
    // The sample variance of n Gaussian values has relative spread sqrt(2/(n-1)).
    let dof = (experimental.len() - 1) as f64;
    Ok(PrecisionReport {
        gamma,
        gamma_stderr: gamma * (2.0 / dof).sqrt(),
        baseline_kind: baseline.kind(),
        eta_sample_est: experimental.mean().unwrap_or(f64::NAN),
    })
}

/// Precision ratio of several independent series of the same measurement,
/// computed two ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPrecision {
    /// Baseline variance over the mean of the per-series variances; the
    /// uncertainty is the standard deviation of the mean of those variances
    /// propagated to `Γ`.
    pub pooled: PrecisionReport,
    /// Mean of the per-series `Γ` values with the standard deviation of the
    /// mean across series.
    pub per_series: PrecisionReport,
}

pub fn gamma_from_series(
    series: &[EstimateSeries],
    baseline: &Baseline,
    eta_sample_ref: f64,
) -> Result<SeriesPrecision> {
    if series.len() < 2 {
        return Err(EstimationError::SeriesTooShort(series.len()));
    }
    let mut variances = Vec::with_capacity(series.len());
    let mut coherent = Vec::with_capacity(series.len());
    let mut gammas = Vec::with_capacity(series.len());
    let mut means = Vec::with_capacity(series.len());
    for s in series {
        let r = gamma_against(s, baseline, eta_sample_ref)?;
        let var = s.variance()?;
        variances.push(var);
        coherent.push(r.gamma * var);
        gammas.push(r.gamma);
        means.push(r.eta_sample_est);
    }
    let k = series.len() as f64;
    let mean_of = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var_mean = mean_of(&variances);
    let pooled_gamma = mean_of(&coherent) / var_mean;
    let pooled_se = pooled_gamma * (sample_variance(&variances)? / k).sqrt() / var_mean;
    let eta_est = mean_of(&means);
    Ok(SeriesPrecision {
        pooled: PrecisionReport {
            gamma: pooled_gamma,
            gamma_stderr: pooled_se,
            baseline_kind: baseline.kind(),
            eta_sample_est: eta_est,
        },
        per_series: PrecisionReport {
            gamma: mean_of(&gammas),
            gamma_stderr: (sample_variance(&gammas)? / k).sqrt(),
            baseline_kind: baseline.kind(),
            eta_sample_est: eta_est,
        },
    })
}

/// Minimum window count for the Monte Carlo differential baseline.
pub const DIFFERENTIAL_BASELINE_MIN_WINDOWS: usize = 10_000;

/// Variance × photons-at-sample of an ideal beam-splitter differential
/// measurement, obtained by simulation. The ideal scheme knows its split
/// ratio exactly, so no calibration noise enters.
pub fn differential_per_photon_variance(
    eta_sample: Efficiency,
    eta_det: Efficiency,
    split: Efficiency,
    photons_at_sample: f64,
    windows: usize,
    seed: u64,
    scenario: u64,
) -> Result<f64> {
    if windows < DIFFERENTIAL_BASELINE_MIN_WINDOWS {
        return Err(EstimationError::InvalidParameter(format!(
            "differential baseline needs at least {DIFFERENTIAL_BASELINE_MIN_WINDOWS} windows, got {windows}"
        )));
    }
    if !(split.get() > 0.0 && split.get() < 1.0) {
        return Err(EstimationError::InvalidParameter(format!("split = {split}")));
    }
    if !(photons_at_sample > 0.0) {
        return Err(EstimationError::InvalidParameter(format!(
            "photons_at_sample = {photons_at_sample}"
        )));
    }
    let total = photons_at_sample / split.get();
    let ratio = split.get() / (1.0 - split.get());
    let mut signal = Vec::with_capacity(windows);
    let mut monitor = Vec::with_capacity(windows);
    for w in 0..windows as u64 {
        let mut stream = RngStream::new(seed, StreamKey::new(scenario, u64::MAX, 0, w));
        let win = simulate_differential_classical_window(total, split, eta_sample, eta_det, &mut stream)?;
        signal.push(win.signal);
        monitor.push(win.monitor);
    }
    let est = estimate_transmittance_differential(&signal, &monitor, ratio)?;
    Ok(est.series.variance()? * photons_at_sample)
}
