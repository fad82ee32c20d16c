use rayon::prelude::*;
use ssnscope_core::estimation::{
    differential_per_photon_variance, gamma_analytic, gamma_camera_analytic, gamma_from_series, heralding_ratio,
    input_photons, EstimateSeries, SeriesPrecision,
};
use ssnscope_core::imaging::CALIBRATION_PIXEL;
use ssnscope_core::{
    effective_klyshko, simulate_window, Baseline, CameraModel, CountSource, CountsAggregate, Efficiency, OpticalChain,
    RngStream, SampleFactor, StreamKey,
};

use super::{Exec, RunError};
use crate::config::Config;
use crate::output::{num, RunDir};

const SCENARIO_KEY: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub eta_sample: f64,
    pub eta_estimate: f64,
    /// Γ against a coherent beam seen by the same camera.
    pub gamma: Option<SeriesPrecision>,
    /// Γ against a coherent beam seen by a perfect detector.
    pub gamma_abs: Option<SeriesPrecision>,
    /// Γ against the ideal beam-splitter differential scheme.
    pub gamma_dif: Option<SeriesPrecision>,
    pub gamma_analytic: f64,
    pub gamma_camera_analytic: f64,
    /// Why the row has no precision ratio.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub chain: OpticalChain,
    pub reference_ratio: f64,
    /// Heralded fraction of the photons reaching the camera in the
    /// no-sample run, `N_C / N_P`.
    pub heralded_fraction: f64,
    pub rows: Vec<CalibrationRow>,
}

impl Calibration {
    /// Smallest swept transmittance whose Γ exceeds 1.
    pub fn ssn_crossing(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.gamma.is_some_and(|g| g.pooled.gamma > 1.0))
            .map(|r| r.eta_sample)
            .min_by(f64::total_cmp)
    }

    /// Row closest to unit transmittance.
    pub fn near_unity(&self) -> Option<&CalibrationRow> {
        self.rows
            .iter()
            .min_by(|a, b| (1.0 - a.eta_sample).abs().total_cmp(&(1.0 - b.eta_sample).abs()))
    }
}

fn reference(config: &Config, chain: &OpticalChain, source: CountSource) -> Result<(f64, f64), RunError> {
    let key = StreamKey::new(SCENARIO_KEY, CALIBRATION_PIXEL, 0, 0);
    let mut agg = CountsAggregate::default();
    let (mut coincident, mut signal) = (0u64, 0u64);
    for w in 0..config.calibration_windows as u64 {
        let win = simulate_window(chain, Efficiency::ONE, &mut RngStream::new(config.seed, key.with_window(w)))?;
        coincident += win.n_coincident;
        signal += win.n_detected - win.n_dark;
        agg.push(&win);
    }
    let ratio = heralding_ratio(&agg, source, chain.dark_mean)?.value;
    Ok((ratio, coincident as f64 / signal as f64))
}

fn sweep_point(
    config: &Config,
    chain: &OpticalChain,
    source: CountSource,
    reference_ratio: f64,
    index: usize,
    eta: f64,
) -> Result<CalibrationRow, RunError> {
    let k = effective_klyshko(chain, Efficiency::ONE, SampleFactor::Excluded)?;
    let model = CameraModel::from_chain(chain)?;
    let mut row = CalibrationRow {
        eta_sample: eta,
        eta_estimate: f64::NAN,
        gamma: None,
        gamma_abs: None,
        gamma_dif: None,
        gamma_analytic: gamma_analytic(eta, k.eta_p, k.eta_r)?,
        gamma_camera_analytic: gamma_camera_analytic(eta, &model, chain.eta_det).unwrap_or(f64::NAN),
        flag: None,
    };
    let eta_eff = Efficiency::new(eta)?;
    let mut raw = Vec::with_capacity(config.series);
    for s in 0..config.series {
        let key = StreamKey::new(SCENARIO_KEY, index as u64, s as u64, 0);
        let mut estimates = Vec::with_capacity(config.windows_per_series);
        let mut detected = 0u64;
        for w in 0..config.windows_per_series as u64 {
            let win = simulate_window(chain, eta_eff, &mut RngStream::new(config.seed, key.with_window(w)))?;
            detected += win.n_detected;
            let r = heralding_ratio(&CountsAggregate::from(&win), source, chain.dark_mean)?;
            estimates.push(r.value / reference_ratio);
        }
        raw.push((estimates, detected as f64 / config.windows_per_series as f64));
    }
    let all = EstimateSeries::new(raw.iter().flat_map(|(e, _)| e.iter().copied()).collect());
    row.eta_estimate = all.mean().unwrap_or(f64::NAN);
    let se = all.std_error().unwrap_or(f64::INFINITY);
    if !(row.eta_estimate > 3.0 * se) {
        row.flag = Some("transmittance estimate consistent with zero; input photon number undefined".into());
        return Ok(row);
    }
    let mut series = Vec::with_capacity(raw.len());
    for (estimates, det_mean) in raw {
        let series_mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
        match input_photons(det_mean, chain.dark_mean, chain.post_sample(), series_mean) {
            Ok(n) => series.push(EstimateSeries::new(estimates).with_input_photons(n)),
            Err(e) => {
                row.flag = Some(format!("undefined input photon number: {e}"));
                return Ok(row);
            }
        }
    }
    let eta_ref = row.eta_estimate;
    let attempt = |baseline: &Baseline| gamma_from_series(&series, baseline, eta_ref);
    match attempt(&Baseline::Coherent(chain.eta_det)) {
        Ok(g) => row.gamma = Some(g),
        Err(e) => {
            row.flag = Some(e.to_string());
            return Ok(row);
        }
    }
    row.gamma_abs = attempt(&Baseline::Coherent(Efficiency::ONE)).ok();
    let per_photon = differential_per_photon_variance(
        eta_eff,
        chain.post_sample(),
        config.differential_split,
        chain.expected(Efficiency::ONE).exposed,
        config.differential_windows,
        config.seed,
        SCENARIO_KEY + 100 + index as u64,
    )?;
    row.gamma_dif = attempt(&Baseline::Differential {
        per_photon_variance: per_photon,
    })
    .ok();
    Ok(row)
}

pub fn compute(config: &Config, exec: Exec) -> Result<Calibration, RunError> {
    let chain = config.chain();
    let source = config.count_source.into();
    let (reference_ratio, heralded_fraction) = reference(config, &chain, source)?;
    if !(reference_ratio > 0.0) {
        return Err(RunError::Runtime("no-sample reference run recorded no signal".into()));
    }
    let point = |(i, &eta): (usize, &f64)| sweep_point(config, &chain, source, reference_ratio, i, eta);
    let rows = if exec.parallel() {
        config.eta_sweep.par_iter().enumerate().map(point).collect::<Result<Vec<_>, _>>()?
    } else {
        config.eta_sweep.iter().enumerate().map(point).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Calibration {
        chain,
        reference_ratio,
        heralded_fraction,
        rows,
    })
}

pub fn write(result: &Calibration, out: &mut RunDir) -> Result<(), RunError> {
    let opt = |g: Option<SeriesPrecision>, f: fn(&SeriesPrecision) -> f64| g.as_ref().map(f).map(num).unwrap_or_else(|| "NaN".into());
    let rows = result.rows.iter().map(|r| {
        vec![
            num(r.eta_sample),
            num(r.eta_estimate),
            opt(r.gamma, |g| g.pooled.gamma),
            opt(r.gamma, |g| g.pooled.gamma_stderr),
            num(r.gamma_analytic),
            num(r.gamma_camera_analytic),
            opt(r.gamma, |g| g.per_series.gamma),
            opt(r.gamma, |g| g.per_series.gamma_stderr),
            opt(r.gamma_abs, |g| g.pooled.gamma),
            opt(r.gamma_abs, |g| g.pooled.gamma_stderr),
            opt(r.gamma_dif, |g| g.pooled.gamma),
            opt(r.gamma_dif, |g| g.pooled.gamma_stderr),
            r.flag.clone().unwrap_or_default(),
        ]
    });
    out.csv(
        "calibration.csv",
        &[
            "eta_sample",
            "eta_estimate",
            "gamma_empirical",
            "gamma_stderr",
            "gamma_analytic",
            "gamma_camera_analytic",
            "gamma_per_series",
            "gamma_per_series_stderr",
            "gamma_abs",
            "gamma_abs_stderr",
            "gamma_dif",
            "gamma_dif_stderr",
            "flag",
        ],
        rows,
    )?;
    out.note("reference_heralding_ratio", num(result.reference_ratio));
    out.note("heralded_fraction", num(result.heralded_fraction));
    out.note(
        "ssn_crossing",
        result.ssn_crossing().map(num).unwrap_or_else(|| "none".into()),
    );
    Ok(())
}
