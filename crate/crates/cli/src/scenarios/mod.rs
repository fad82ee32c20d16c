//! The five experiments. Each module has a `compute` step returning plain
//! data and a `write` step that renders it into a [`RunDir`].

use std::io;
use std::path::{Path, PathBuf};

use ssnscope_core::imaging::{Acquisition, EstimatorKind, ImageStack};
use ssnscope_core::{ChainError, EstimationError, ImagingError, ProbeSpot, ScanConfig, StatsError, TransmittanceMap};

use crate::config::{Config, ConfigError, Scenario};
use crate::output::RunDir;

pub mod calibrate;
pub mod figure1;
pub mod scan;
pub mod target;
pub mod variance;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Runtime(String),
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Io(e.into())
    }
}

impl RunError {
    /// 2 for bad configuration, 4 for file-system trouble, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Io(_) => 4,
            _ => 3,
        }
    }
}

/// How much parallelism to use. Results never depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct Exec {
    pub threads: usize,
}

impl Exec {
    pub const SERIAL: Exec = Exec { threads: 1 };

    pub fn parallel(self) -> bool {
        self.threads != 1
    }
}


pub(crate) fn spot(config: &Config) -> Result<ProbeSpot, RunError> {
    Ok(ProbeSpot::from_fwhm(config.spot_fwhm_um)?)
}

pub(crate) fn scan_config(map: &TransmittanceMap, config: &Config) -> ScanConfig {
    ScanConfig::centered_on(
        map,
        config.step_um,
        config.width_px,
        config.height_px,
        config.windows_per_pixel,
        config.repetitions,
    )
}

pub(crate) fn acquisition(config: &Config, kind: EstimatorKind, scenario: u64, exec: Exec) -> Acquisition {
    Acquisition {
        count_source: config.count_source.into(),
        calibration_windows: config.calibration_windows,
        split: config.differential_split,
        drift_per_repetition: config.drift_per_repetition,
        scenario,
        parallel: exec.parallel(),
        ..Acquisition::new(config.chain(), kind)
    }
}

/// Sample variance of every pixel across repetitions.
pub(crate) fn pixel_variances(stack: &ImageStack) -> Vec<f64> {
    (0..stack.pixels())
        .map(|p| {
            let s: Vec<f64> = stack.pixel_series(p).into_iter().filter(|v| v.is_finite()).collect();
            let n = s.len() as f64;
            if s.len() < 2 {
                return f64::NAN;
            }
            let m = s.iter().sum::<f64>() / n;
            s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
        })
        .collect()
}

/// Mean of the finite values and its standard error.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Run `config` into `out_dir` and return the manifest path.
pub fn run(config: &Config, out_dir: &Path, exec: Exec) -> Result<PathBuf, RunError> {
    config.validate()?;
    let body = || -> Result<PathBuf, RunError> {
        let mut out = RunDir::create(out_dir, config)?;
        match config.scenario {
            Scenario::Figure1 => figure1::write(&figure1::compute(config, exec)?, &mut out)?,
            Scenario::Calibrate => calibrate::write(&calibrate::compute(config, exec)?, &mut out)?,
            Scenario::Scan => scan::write(&scan::compute(config, exec)?, &mut out)?,
            Scenario::Variance => variance::write(&variance::compute(config, exec)?, &mut out)?,
            Scenario::Target => target::write(&target::compute(config, exec)?, &mut out)?,
        }
        Ok(out.finish()?)
    };
    if exec.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(exec.threads)
            .build()
            .map_err(|e| RunError::Runtime(format!("thread pool: {e}")))?
            .install(body)
    } else {
        body()
    }
}
