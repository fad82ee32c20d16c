use ssnscope_core::imaging::{
    glyph_phantom, pixelwise_precision, raster_scan, EstimatorKind, HistogramSpec, ImageStack, PixelwisePrecision,
};
use ssnscope_core::{gamma_analytic, gamma_camera_analytic, effective_klyshko, CameraModel, CountSource, Efficiency, SampleFactor};

use super::{acquisition, mean_and_se, pixel_variances, scan_config, spot, Exec, RunError};
use crate::config::Config;
use crate::output::{num, RunDir};

const SCENARIO_KEY: u64 = 4;

#[derive(Debug, Clone)]
pub struct VarianceRun {
    pub map_mean: f64,
    pub quantum: ImageStack,
    pub differential: ImageStack,
    pub precision: PixelwisePrecision,
    /// Calibration-relation Γ at the mean map transmittance.
    pub expected_at_mean: Option<f64>,
    pub quantum_variance: (f64, f64),
    pub differential_variance: (f64, f64),
}

impl VarianceRun {
    /// How many standard errors the quantum image's mean pixel variance
    /// lies below the differential image's.
    pub fn variance_separation(&self) -> f64 {
        let (q, qs) = self.quantum_variance;
        let (d, ds) = self.differential_variance;
        (d - q) / qs.hypot(ds)
    }
}

pub fn histogram_spec(config: &Config) -> HistogramSpec {
    if config.histogram_bin_width > 0.0 {
        HistogramSpec::Width(config.histogram_bin_width)
    } else {
        HistogramSpec::Bins(config.histogram_bins)
    }
}

/// Predicted Γ as a function of transmittance for the configured detector.
pub fn expected_gamma(config: &Config) -> Result<Box<dyn Fn(f64) -> Option<f64> + Send + Sync>, RunError> {
    let chain = config.chain();
    let eta_det = chain.eta_det;
    Ok(match CountSource::from(config.count_source) {
        CountSource::Camera => {
            let model = CameraModel::from_chain(&chain)?;
            Box::new(move |eta| gamma_camera_analytic(eta, &model, eta_det).ok())
        }
        CountSource::Coincidence => {
            let k = effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded)?;
            Box::new(move |eta| gamma_analytic(eta, k.eta_p, k.eta_r).ok())
        }
    })
}

pub fn compute(config: &Config, exec: Exec) -> Result<VarianceRun, RunError> {
    let mut map = glyph_phantom(&config.phantom())?;
    if config.mean_transmittance > 0.0 {
        map = map.with_mean(config.mean_transmittance)?;
    }
    let spot = spot(config)?;
    let scan = scan_config(&map, config);
    let q_acq = acquisition(config, EstimatorKind::Klyshko, SCENARIO_KEY * 10, exec);
    let d_acq = acquisition(config, EstimatorKind::Differential, SCENARIO_KEY * 10 + 1, exec);
    log::info!("scanning quantum stack");
    let quantum = raster_scan(&map, &spot, &scan, &q_acq, config.seed)?;
    log::info!("scanning differential stack");
    let differential = raster_scan(&map, &spot, &scan, &d_acq, config.seed)?;
    let expected = expected_gamma(config)?;
    let precision = pixelwise_precision(&quantum, config.eta_det, histogram_spec(config), Some(&*expected))?;
    Ok(VarianceRun {
        map_mean: map.mean(),
        expected_at_mean: expected(map.mean()),
        quantum_variance: mean_and_se(&pixel_variances(&quantum)),
        differential_variance: mean_and_se(&pixel_variances(&differential)),
        quantum,
        differential,
        precision,
    })
}

pub fn write(result: &VarianceRun, out: &mut RunDir) -> Result<(), RunError> {
    let (w, h) = (result.quantum.width(), result.quantum.height());
    let p = &result.precision;
    let hi = p.gamma_map.iter().copied().filter(|g| g.is_finite()).fold(0.0, f64::max);
    out.pgm("gamma_map.pgm", w, h, &p.gamma_map, 0.0, hi.max(1.0))?;
    out.grid_csv("gamma_map.csv", w, &p.gamma_map)?;
    out.grid_csv("quantum_mean.csv", w, &result.quantum.mean_image())?;
    out.grid_csv("differential_mean.csv", w, &result.differential.mean_image())?;
    let opt = |x: Option<f64>| x.map(num).unwrap_or_else(|| "NaN".into());
    let bins = p.histogram.bins.iter().map(|b| {
        vec![num(b.lo), num(b.hi), b.count.to_string(), opt(b.expected_gamma)]
    });
    out.csv("histogram.csv", &["bin_lo", "bin_hi", "count", "expected_gamma"], bins)?;
    let rows: Vec<(&str, String)> = vec![
        ("pixels", result.quantum.pixels().to_string()),
        ("repetitions", result.quantum.repetitions().to_string()),
        ("map_mean_transmittance", num(result.map_mean)),
        ("weighted_mean_transmittance", num(p.histogram.weighted_mean)),
        ("mean_gamma", num(p.mean_gamma)),
        ("mean_gamma_stderr", num(p.mean_gamma_stderr)),
        ("mean_gamma_raw", num(p.mean_gamma_raw)),
        ("pooled_gamma", num(p.pooled_gamma)),
        ("expected_mean_gamma", opt(p.expected_mean_gamma)),
        ("expected_gamma_at_map_mean", opt(result.expected_at_mean)),
        ("quantum_mean_variance", num(result.quantum_variance.0)),
        ("quantum_mean_variance_stderr", num(result.quantum_variance.1)),
        ("differential_mean_variance", num(result.differential_variance.0)),
        ("differential_mean_variance_stderr", num(result.differential_variance.1)),
        ("variance_separation_sigmas", num(result.variance_separation())),
        ("quantum_total_exposure", result.quantum.total_exposure().to_string()),
        ("differential_total_exposure", result.differential.total_exposure().to_string()),
    ];
    out.csv(
        "variance_summary.csv",
        &["quantity", "value"],
        rows.into_iter().map(|(k, v)| vec![k.to_string(), v]),
    )?;
    out.note("mean_gamma", num(p.mean_gamma));
    Ok(())
}
