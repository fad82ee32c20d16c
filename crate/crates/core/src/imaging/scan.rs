use super::{effective_transmittance, ImagingError, ProbeSpot, TransmittanceMap};
use crate::estimation::{estimate_transmittance_klyshko, CountSource, CountsAggregate};
use crate::photon_stats::{Efficiency, RngStream, StreamKey};
use crate::twin_beam::{
    simulate_differential_classical_window, simulate_direct_classical_window, simulate_window,
    OpticalChain,
};
use rayon::prelude::*;

/// Pixel index reserved for the no-sample calibration run.
pub const CALIBRATION_PIXEL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    /// Heralded photons, heralding-ratio estimator.
    Klyshko,
    /// Coherent light, direct transmitted-intensity estimator.
    Direct,
    /// Coherent light split onto a monitor detector.
    Differential,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Klyshko => "klyshko",
            EstimatorKind::Direct => "direct",
            EstimatorKind::Differential => "differential",
        }
    }
}

/// Raster geometry. Pixel `(row, col)` is centred at
/// `origin + (col·step, row·step)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub step_um: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub windows_per_pixel: usize,
    pub repetitions: usize,
    pub origin_um: (f64, f64),
}

impl ScanConfig {
    /// A scan of the given size centred on `map`.
    pub fn centered_on(
        map: &TransmittanceMap,
        step_um: f64,
        width_px: usize,
        height_px: usize,
        windows_per_pixel: usize,
        repetitions: usize,
    ) -> Self {
        let span = |n: usize| n.saturating_sub(1) as f64 * step_um;
        ScanConfig {
            step_um,
            width_px,
            height_px,
            windows_per_pixel,
            repetitions,
            origin_um: (
                0.5 * (map.width_um() - span(width_px)),
                0.5 * (map.height_um() - span(height_px)),
            ),
        }
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.step_um > 0.0 && self.step_um.is_finite()) {
            return Err(ImagingError::InvalidScan(format!("step {} um", self.step_um)));
        }
        if self.width_px == 0 || self.height_px == 0 || self.windows_per_pixel == 0 || self.repetitions == 0 {
            return Err(ImagingError::InvalidScan(
                "scan dimensions, windows and repetitions must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn total_windows(&self) -> usize {
        self.pixels() * self.windows_per_pixel * self.repetitions
    }

    pub fn pixel_centre(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_um.0 + col as f64 * self.step_um,
            self.origin_um.1 + row as f64 * self.step_um,
        )
    }
}

/// How each pixel is illuminated and estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub chain: OpticalChain,
    pub estimator: EstimatorKind,
    pub count_source: CountSource,
    /// Windows in the automatic no-sample calibration run.
    pub calibration_windows: usize,
    /// Fraction of classical light sent to the sample in the differential
    /// scheme.
    pub split: Efficiency,
    /// Fractional change of source brightness per repetition.
    pub drift_per_repetition: f64,
    /// Scenario component of every stream key.
    pub scenario: u64,
    pub parallel: bool,
}

impl Acquisition {
    pub fn new(chain: OpticalChain, estimator: EstimatorKind) -> Self {
        Acquisition {
            chain,
            estimator,
            count_source: CountSource::Camera,
            calibration_windows: 1_000,
            split: Efficiency::new(0.5).unwrap(),
            drift_per_repetition: 0.0,
            scenario: 0,
            parallel: true,
        }
    }

    /// Photons at the sample per window of the quantum source; the classical
    /// schemes are run at this same exposure.
    pub fn photons_at_sample(&self) -> f64 {
        self.chain.expected(Efficiency::ONE).exposed
    }

    fn brightness(&self, repetition: usize) -> f64 {
        1.0 + self.drift_per_repetition * repetition as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelFailure {
    pub repetition: usize,
    pub row: usize,
    pub col: usize,
    pub reason: String,
}

/// Repeated scans of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageStack {
    pub config: ScanConfig,
    pub estimator: EstimatorKind,
    /// `repetitions × height × width` transmittance estimates; NaN where the
    /// estimator failed.
    pub images: Vec<f64>,
    /// Per `(repetition, pixel)`: mean dark-corrected counts per window
    /// divided by the post-sample efficiency, i.e. photons leaving the sample.
    pub transmitted: Vec<f64>,
    /// Per `(repetition, pixel)`: photons that reached the sample, summed
    /// over windows, whether or not they were ever detected.
    pub exposed: Vec<u64>,
    /// Spot-averaged ground truth per pixel.
    pub truth: Vec<f64>,
    pub failures: Vec<PixelFailure>,
}

impl ImageStack {
    pub fn width(&self) -> usize {
        self.config.width_px
    }

    pub fn height(&self) -> usize {
        self.config.height_px
    }

    pub fn repetitions(&self) -> usize {
        self.config.repetitions
    }

    pub fn pixels(&self) -> usize {
        self.config.pixels()
    }

    #[inline]
    pub fn index(&self, repetition: usize, row: usize, col: usize) -> usize {
        (repetition * self.height() + row) * self.width() + col
    }

    pub fn estimate(&self, repetition: usize, row: usize, col: usize) -> f64 {
        self.images[self.index(repetition, row, col)]
    }

    /// Estimates of one pixel across repetitions.
    pub fn pixel_series(&self, pixel: usize) -> Vec<f64> {
        (0..self.repetitions())
            .map(|r| self.images[r * self.pixels() + pixel])
            .collect()
    }

    /// Across-repetition mean of each pixel, ignoring failed entries.
    pub fn mean_image(&self) -> Vec<f64> {
        (0..self.pixels())
            .map(|p| {
                let xs: Vec<f64> = self.pixel_series(p).into_iter().filter(|v| v.is_finite()).collect();
                if xs.is_empty() {
                    f64::NAN
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            })
            .collect()
    }

    /// Per-pixel `⟨N_In⟩` per window inferred from the camera signal, using
    /// the pixel's mean transmittance estimate.
    pub fn input_photons(&self) -> Vec<f64> {
        let mean = self.mean_image();
        (0..self.pixels())
            .map(|p| {
                let t: f64 = (0..self.repetitions())
                    .map(|r| self.transmitted[r * self.pixels() + p])
                    .sum::<f64>()
                    / self.repetitions() as f64;
                if mean[p] > 0.0 {
                    t / mean[p]
                } else {
                    f64::NAN
                }
            })
            .collect()
    }

    /// Mean photons at the sample per window at each pixel, from the
    /// simulation record.
    pub fn exposure_per_window(&self) -> Vec<f64> {
        let windows = (self.repetitions() * self.config.windows_per_pixel) as f64;
        (0..self.pixels())
            .map(|p| {
                (0..self.repetitions())
                    .map(|r| self.exposed[r * self.pixels() + p] as f64)
                    .sum::<f64>()
                    / windows
            })
            .collect()
    }

    pub fn total_exposure(&self) -> u64 {
        self.exposed.iter().sum()
    }
}

struct PixelResult {
    estimate: f64,
    transmitted: f64,
    exposed: u64,
    failure: Option<String>,
}

enum Calibration {
    Klyshko(CountsAggregate),
    Differential(f64),
    None,
}

fn calibrate(acq: &Acquisition, seed: u64) -> Result<Calibration, ImagingError> {
    let key = StreamKey::new(acq.scenario, CALIBRATION_PIXEL, 0, 0);
    match acq.estimator {
        EstimatorKind::Klyshko => {
            let mut agg = CountsAggregate::default();
            for w in 0..acq.calibration_windows as u64 {
                let mut s = RngStream::new(seed, key.with_window(w));
                agg.push(&simulate_window(&acq.chain, Efficiency::ONE, &mut s)?);
            }
            Ok(Calibration::Klyshko(agg))
        }
        EstimatorKind::Differential => {
            let total = acq.photons_at_sample() / acq.split.get();
            let eta_det = acq.chain.post_sample();
            let (mut sig, mut mon) = (0u64, 0u64);
            for w in 0..acq.calibration_windows as u64 {
                let mut s = RngStream::new(seed, key.with_window(w));
                let win =
                    simulate_differential_classical_window(total, acq.split, Efficiency::ONE, eta_det, &mut s)?;
                sig += win.signal;
                mon += win.monitor;
            }
            if sig == 0 || mon == 0 {
                return Err(ImagingError::Calibration("differential calibration run recorded no counts".into()));
            }
            Ok(Calibration::Differential(sig as f64 / mon as f64))
        }
        EstimatorKind::Direct => Ok(Calibration::None),
    }
}

fn acquire_pixel(
    acq: &Acquisition,
    calibration: &Calibration,
    eta: Efficiency,
    windows: usize,
    repetition: usize,
    key: StreamKey,
    seed: u64,
) -> Result<PixelResult, ImagingError> {
    let brightness = acq.brightness(repetition);
    let post = acq.chain.post_sample();
    let nominal = acq.photons_at_sample();
    let windows_f = windows as f64;
    let stream = |w: usize| RngStream::new(seed, key.with_window(w as u64));

    Ok(match (acq.estimator, calibration) {
        (EstimatorKind::Klyshko, Calibration::Klyshko(reference)) => {
            let chain = acq.chain.with_brightness(brightness);
            let mut agg = CountsAggregate::default();
            for w in 0..windows {
                agg.push(&simulate_window(&chain, eta, &mut stream(w))?);
            }
            let dark = acq.chain.dark_mean;
            let transmitted = (agg.detected_mean() - dark) / post.get();
            match estimate_transmittance_klyshko(&agg, reference, acq.count_source, dark) {
                Ok(e) => PixelResult {
                    estimate: e.value,
                    transmitted,
                    exposed: agg.n_exposed,
                    failure: None,
                },
                Err(err) => PixelResult {
                    estimate: f64::NAN,
                    transmitted,
                    exposed: agg.n_exposed,
                    failure: Some(err.to_string()),
                },
            }
        }
        (EstimatorKind::Direct, _) => {
            let mut detected = 0u64;
            let mut exposed = 0u64;
            for w in 0..windows {
                let win = simulate_direct_classical_window(nominal * brightness, eta, post, &mut stream(w))?;
                detected += win.detected;
                exposed += win.exposed;
            }
            // The estimator assumes the nominal source intensity.
            PixelResult {
                estimate: detected as f64 / (windows_f * nominal * post.get()),
                transmitted: detected as f64 / windows_f / post.get(),
                exposed,
                failure: None,
            }
        }
        (EstimatorKind::Differential, Calibration::Differential(ratio)) => {
            let total = nominal * brightness / acq.split.get();
            let (mut sig, mut mon, mut exposed) = (0u64, 0u64, 0u64);
            for w in 0..windows {
                let win = simulate_differential_classical_window(total, acq.split, eta, post, &mut stream(w))?;
                sig += win.signal;
                mon += win.monitor;
                exposed += win.exposed;
            }
            let transmitted = sig as f64 / windows_f / post.get();
            if mon == 0 {
                PixelResult {
                    estimate: f64::NAN,
                    transmitted,
                    exposed,
                    failure: Some("monitor recorded no counts".into()),
                }
            } else {
                PixelResult {
                    estimate: sig as f64 / mon as f64 / ratio,
                    transmitted,
                    exposed,
                    failure: None,
                }
            }
        }
        _ => unreachable!("calibration matches estimator kind"),
    })
}

/// Spot-averaged transmittance at every scan pixel, row-major.
pub fn effective_field(
    map: &TransmittanceMap,
    spot: &ProbeSpot,
    config: &ScanConfig,
) -> Result<Vec<f64>, ImagingError> {
    let mut out = Vec::with_capacity(config.pixels());
    for row in 0..config.height_px {
        for col in 0..config.width_px {
            out.push(effective_transmittance(map, spot, config.pixel_centre(row, col))?);
        }
    }
    Ok(out)
}

/// Scan `map` `config.repetitions` times. Pixel `p` in repetition `r`
/// draws window `w` from stream `(scenario, p, r, w)`, so the stack is a
/// function of `master_seed` alone regardless of scheduling.
pub fn raster_scan(
    map: &TransmittanceMap,
    spot: &ProbeSpot,
    config: &ScanConfig,
    acquisition: &Acquisition,
    master_seed: u64,
) -> Result<ImageStack, ImagingError> {
    config.validate()?;
    acquisition.chain.validate()?;
    let truth = effective_field(map, spot, config)?;
    let calibration = calibrate(acquisition, master_seed)?;
    let pixels = config.pixels();
    let jobs = pixels * config.repetitions;

    let run = |k: usize| -> Result<PixelResult, ImagingError> {
        let repetition = k / pixels;
        let pixel = k % pixels;
        let eta = Efficiency::new(truth[pixel])?;
        let key = StreamKey::new(acquisition.scenario, pixel as u64, repetition as u64, 0);
        acquire_pixel(
            acquisition,
            &calibration,
            eta,
            config.windows_per_pixel,
            repetition,
            key,
            master_seed,
        )
    };
    let results: Vec<PixelResult> = if acquisition.parallel {
        (0..jobs).into_par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        (0..jobs).map(run).collect::<Result<_, _>>()?
    };

    let mut stack = ImageStack {
        config: *config,
        estimator: acquisition.estimator,
        images: Vec::with_capacity(jobs),
        transmitted: Vec::with_capacity(jobs),
        exposed: Vec::with_capacity(jobs),
        truth,
        failures: Vec::new(),
    };
    for (k, r) in results.into_iter().enumerate() {
        if let Some(reason) = r.failure {
            let pixel = k % pixels;
            stack.failures.push(PixelFailure {
                repetition: k / pixels,
                row: pixel / config.width_px,
                col: pixel % config.width_px,
                reason,
            });
        }
        stack.images.push(r.estimate);
        stack.transmitted.push(r.transmitted);
        stack.exposed.push(r.exposed);
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_and_geometry() {
        let map = TransmittanceMap::uniform(10, 20, 1.0, 0.5).unwrap();
        let c = ScanConfig::centered_on(&map, 2.0, 5, 3, 1, 2);
        c.validate().unwrap();
        assert_eq!(c.total_windows(), 5 * 3 * 2);
        assert_eq!(c.pixel_centre(0, 0), (6.0, 3.0));
        assert_eq!(c.pixel_centre(2, 4), (14.0, 7.0));
        let mut bad = c;
        bad.repetitions = 0;
        assert!(bad.validate().is_err());
        bad = c;
        bad.step_um = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scan_outside_map_fails() {
        let map = TransmittanceMap::uniform(4, 4, 1.0, 0.5).unwrap();
        let c = ScanConfig {
            step_um: 2.0,
            width_px: 4,
            height_px: 1,
            windows_per_pixel: 1,
            repetitions: 1,
            origin_um: (0.5, 0.5),
        };
        let acq = Acquisition::new(OpticalChain::reference_setup(), EstimatorKind::Direct);
        assert!(matches!(
            raster_scan(&map, &ProbeSpot::default(), &c, &acq, 0),
            Err(ImagingError::OutsideMap { .. })
        ));
    }

    #[test]
    fn opaque_pixels_recorded_not_fatal() {
        let map = TransmittanceMap::uniform(6, 6, 1.0, 0.0).unwrap();
        let c = ScanConfig::centered_on(&map, 1.0, 2, 2, 1, 1);
        let mut chain = OpticalChain::lossless(1000.0);
        chain.dark_mean = 0.0;
        let acq = Acquisition::new(chain, EstimatorKind::Differential);
        let stack = raster_scan(&map, &ProbeSpot::default(), &c, &acq, 1).unwrap();
        assert!(stack.failures.is_empty());
        assert!(stack.images.iter().all(|&v| v == 0.0));

        let mut acq = Acquisition::new(chain, EstimatorKind::Differential);
        acq.split = Efficiency::ONE;
        assert!(raster_scan(&map, &ProbeSpot::default(), &c, &acq, 1).is_err());
    }
}
