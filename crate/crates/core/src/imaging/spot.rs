use super::{ImagingError, TransmittanceMap};
use statrs::function::erf::erfc;

/// Gaussian intensity profile of the focused probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpot {
    pub sigma_um: f64,
    /// Kernel support radius in units of `sigma_um`.
    pub truncation_radius: f64,
}

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2 sqrt(2 ln 2)

impl ProbeSpot {
    /// Default spot: 3 µm FWHM (σ ≈ 1.27 µm).
    pub const DEFAULT_FWHM_UM: f64 = 3.0;
    pub const DEFAULT_TRUNCATION: f64 = 4.0;

    pub fn new(sigma_um: f64, truncation_radius: f64) -> Result<Self, ImagingError> {
        if !(sigma_um > 0.0 && sigma_um.is_finite()) {
            return Err(ImagingError::InvalidSpot(format!("sigma {sigma_um} um")));
        }
        if !(truncation_radius > 0.0) {
            return Err(ImagingError::InvalidSpot(format!("truncation {truncation_radius}")));
        }
        Ok(ProbeSpot {
            sigma_um,
            truncation_radius,
        })
    }

    pub fn from_fwhm(fwhm_um: f64) -> Result<Self, ImagingError> {
        Self::new(fwhm_um / FWHM_PER_SIGMA, Self::DEFAULT_TRUNCATION)
    }

    pub fn fwhm_um(&self) -> f64 {
        self.sigma_um * FWHM_PER_SIGMA
    }

    fn support_um(&self) -> f64 {
        self.sigma_um * self.truncation_radius
    }
}

impl Default for ProbeSpot {
    fn default() -> Self {
        ProbeSpot::from_fwhm(Self::DEFAULT_FWHM_UM).unwrap()
    }
}

#[inline]
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Fraction of a 1-D Gaussian centred at `centre` falling into each of
/// `n` cells of size `pitch`, restricted to `centre ± support`.
/// Returns the first cell index and the weights.
fn axis_weights(centre: f64, sigma: f64, support: f64, pitch: f64, n: usize) -> (usize, Vec<f64>) {
    let lo = ((centre - support) / pitch).floor().max(0.0) as usize;
    let hi = (((centre + support) / pitch).ceil() as usize).min(n);
    let weights = (lo..hi)
        .map(|i| {
            let a = (i as f64 * pitch).max(centre - support);
            let b = ((i + 1) as f64 * pitch).min(centre + support);
            if b <= a {
                0.0
            } else {
                normal_cdf((b - centre) / sigma) - normal_cdf((a - centre) / sigma)
            }
        })
        .collect();
    (lo, weights)
}

/// Kernel-weighted mean transmittance under the spot centred at
/// `(x_um, y_um)`. Each cell's weight is the exact Gaussian integral over
/// the cell; support outside the map is dropped and the rest renormalised.
pub fn effective_transmittance(
    map: &TransmittanceMap,
    spot: &ProbeSpot,
    position: (f64, f64),
) -> Result<f64, ImagingError> {
    let (x, y) = position;
    if !(0.0..=map.width_um()).contains(&x) || !(0.0..=map.height_um()).contains(&y) {
        return Err(ImagingError::OutsideMap { x_um: x, y_um: y });
    }
    let support = spot.support_um();
    let (c0, wx) = axis_weights(x, spot.sigma_um, support, map.pitch_um(), map.cols());
    let (r0, wy) = axis_weights(y, spot.sigma_um, support, map.pitch_um(), map.rows());
    let norm: f64 = wx.iter().sum::<f64>() * wy.iter().sum::<f64>();
    if !(norm > 0.0) {
        return Err(ImagingError::InvalidSpot("kernel has no support inside the map".into()));
    }
    let mut acc = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (j, wyj) in wy.iter().enumerate() {
        if *wyj == 0.0 {
            continue;
        }
        let mut row_acc = 0.0;
        for (i, wxi) in wx.iter().enumerate() {
            if *wxi == 0.0 {
                continue;
            }
            let v = map.get(r0 + j, c0 + i);
            lo = lo.min(v);
            hi = hi.max(v);
            row_acc += wxi * v;
        }
        acc += wyj * row_acc;
    }
    // A convex combination; clamp away rounding excursions.
    Ok((acc / norm).clamp(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_validation() {
        assert!(ProbeSpot::new(0.0, 4.0).is_err());
        assert!(ProbeSpot::new(1.0, 0.0).is_err());
        let s = ProbeSpot::from_fwhm(3.0).unwrap();
        assert!((s.sigma_um - 1.274).abs() < 1e-3);
        assert!((s.fwhm_um() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_weights_sum_to_one_inside() {
        let (_, w) = axis_weights(50.0, 1.3, 5.2, 0.25, 400);
        let total: f64 = w.iter().sum();
        let expected = normal_cdf(4.0) - normal_cdf(-4.0);
        assert!((total - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_map_is_fixed_point() {
        let m = TransmittanceMap::uniform(40, 60, 0.5, 0.95).unwrap();
        let s = ProbeSpot::from_fwhm(3.0).unwrap();
        for &(x, y) in &[(0.0, 0.0), (15.0, 10.0), (30.0, 20.0), (0.3, 19.9)] {
            let v = effective_transmittance(&m, &s, (x, y)).unwrap();
            assert!((v - 0.95).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn sharp_edge_gives_half() {
        let (rows, cols) = (20, 80);
        let grid = (0..rows * cols)
            .map(|i| if i % cols < cols / 2 { 1.0 } else { 0.0 })
            .collect();
        let m = TransmittanceMap::new(rows, cols, 0.25, grid).unwrap();
        let s = ProbeSpot::from_fwhm(3.0).unwrap();
        let v = effective_transmittance(&m, &s, (10.0, 2.5)).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn outside_map_is_error() {
        let m = TransmittanceMap::uniform(4, 4, 1.0, 0.5).unwrap();
        let s = ProbeSpot::default();
        assert!(effective_transmittance(&m, &s, (-0.1, 1.0)).is_err());
        assert!(effective_transmittance(&m, &s, (1.0, 4.1)).is_err());
    }
}
