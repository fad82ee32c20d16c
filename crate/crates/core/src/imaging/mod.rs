//! Raster-scan image formation and pixel-wise precision analysis.

mod analysis;
pub mod io;
mod map;
mod scan;
mod spot;

pub use analysis::{
    pixelwise_precision, regression_slope, resolution_metric, transmittance_histogram, GroupResolution,
    HistogramBin, HistogramSpec, PixelwisePrecision, ResolutionReport, TransmittanceHistogram,
    RESOLUTION_DIP_SIGMAS,
};
pub use map::{
    glyph_phantom, make_resolution_target, make_resolution_target_with, LineGroup, PhantomSpec,
    ResolutionTarget, TargetSpec, TransmittanceMap,
};
pub use scan::{
    effective_field, raster_scan, Acquisition, EstimatorKind, ImageStack, PixelFailure, ScanConfig,
    CALIBRATION_PIXEL,
};
pub use spot::{effective_transmittance, ProbeSpot};

use crate::photon_stats::StatsError;
use crate::twin_beam::ChainError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImagingError {
    #[error("invalid transmittance map: {0}")]
    InvalidMap(String),
    #[error("invalid probe spot: {0}")]
    InvalidSpot(String),
    #[error("invalid scan: {0}")]
    InvalidScan(String),
    #[error("position ({x_um}, {y_um}) um lies outside the map")]
    OutsideMap { x_um: f64, y_um: f64 },
    #[error("pitch {pitch_um} um gives fewer than 4 cells across the {smallest_um} um line")]
    PitchTooCoarse { pitch_um: f64, smallest_um: f64 },
    #[error("no bitmap for glyph {0:?}")]
    UnsupportedGlyph(char),
    #[error("analysis needs at least 2 repetitions, got {0}")]
    TooFewRepetitions(usize),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}
