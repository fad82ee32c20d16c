//! Simulation and estimation toolkit for a heralded-photon, sub-shot-noise
//! transmittance microscope.
//!
//! * [`photon_stats`]: keyed random streams and exact Poisson / binomial
//!   samplers.
//! * [`twin_beam`]: one integration window of the gated pair source and the
//!   classical baselines.
//! * [`estimation`]: transmittance estimators and precision ratios.
//! * [`imaging`]: transmittance maps, probe spot, raster scans and
//!   pixel-wise analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimation;
pub mod imaging;
pub mod photon_stats;
pub mod twin_beam;

pub use estimation::{
    gamma_analytic, gamma_camera_analytic, gamma_empirical, ssn_threshold, Baseline, BaselineKind,
    CameraModel, CountSource, CountsAggregate, EstimateSeries, EstimationError, PrecisionReport,
};
pub use imaging::{ImageStack, ImagingError, ProbeSpot, ScanConfig, TransmittanceMap};
pub use photon_stats::{Efficiency, RngStream, StatsError, StreamKey};
pub use twin_beam::{
    effective_klyshko, simulate_window, ChainError, CountsWindow, EffectiveKlyshko, OpticalChain,
    SampleFactor,
};
