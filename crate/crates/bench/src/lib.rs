//! Fixtures shared by the benchmarks.

use ssnscope_core::imaging::{glyph_phantom, Acquisition, EstimatorKind, PhantomSpec};
use ssnscope_core::{OpticalChain, ProbeSpot, ScanConfig, TransmittanceMap};

pub struct ScanFixture {
    pub map: TransmittanceMap,
    pub spot: ProbeSpot,
    pub config: ScanConfig,
    pub acquisition: Acquisition,
}

/// A `width × height` scan of the default phantom with the reference chain.
pub fn scan_fixture(width: usize, height: usize, repetitions: usize, estimator: EstimatorKind, parallel: bool) -> ScanFixture {
    let map = glyph_phantom(&PhantomSpec::default()).expect("default phantom");
    let config = ScanConfig::centered_on(&map, 2.0, width, height, 1, repetitions);
    ScanFixture {
        spot: ProbeSpot::from_fwhm(3.0).expect("valid spot"),
        acquisition: Acquisition {
            parallel,
            ..Acquisition::new(OpticalChain::reference_setup(), estimator)
        },
        map,
        config,
    }
}
