use super::{ImageStack, ImagingError, ResolutionTarget};
use crate::estimation::{coherent_variance, sample_variance};
use crate::photon_stats::Efficiency;

/// Dip threshold, in pooled standard errors, for calling a line pair
/// resolved.
pub const RESOLUTION_DIP_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupResolution {
    pub width_um: f64,
    pub gap_mean: f64,
    pub line_mean: f64,
    /// Standard error of `gap_mean − line_mean`.
    pub pooled_se: f64,
    pub resolved: bool,
    /// The same gap/line contrast on the noiseless spot-averaged field.
    pub truth_dip: f64,
}

impl GroupResolution {
    pub fn dip(&self) -> f64 {
        self.gap_mean - self.line_mean
    }

    /// Whether the noiseless contrast clears the same threshold.
    pub fn truth_resolved(&self) -> bool {
        self.truth_dip > 0.0 && self.truth_dip >= RESOLUTION_DIP_SIGMAS * self.pooled_se
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    pub groups: Vec<GroupResolution>,
    /// Narrowest resolved width; `None` when nothing is resolved.
    pub smallest_resolved_um: Option<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Line-pair resolution from a scan of a [`ResolutionTarget`].
///
/// A pair is resolved when the mean estimate over pixels centred in the gap
/// exceeds the mean over pixels centred on the two lines by at least
/// [`RESOLUTION_DIP_SIGMAS`] standard errors. The standard error uses the
/// within-pixel variance across repetitions, pooled over the group.
pub fn resolution_metric(stack: &ImageStack, target: &ResolutionTarget) -> Result<ResolutionReport, ImagingError> {
    let reps = stack.repetitions();
    if reps < 2 {
        return Err(ImagingError::TooFewRepetitions(reps));
    }
    let mut groups = Vec::with_capacity(target.groups.len());
    for g in &target.groups {
        let inside = |x: f64, (a, b): (f64, f64)| x >= a && x < b;
        let mut gap = Vec::new();
        let mut line = Vec::new();
        let (mut truth_gap, mut truth_line) = (Vec::new(), Vec::new());
        let mut ss = 0.0;
        let mut dof = 0usize;
        for row in 0..stack.height() {
            for col in 0..stack.width() {
                let (x, _) = stack.config.pixel_centre(row, col);
                let (bucket, truth) = if inside(x, g.gap) {
                    (&mut gap, &mut truth_gap)
                } else if inside(x, g.lines[0]) || inside(x, g.lines[1]) {
                    (&mut line, &mut truth_line)
                } else {
                    continue;
                };
                truth.push(stack.truth[row * stack.width() + col]);
                let series: Vec<f64> = stack
                    .pixel_series(row * stack.width() + col)
                    .into_iter()
                    .filter(|v| v.is_finite())
                    .collect();
                if series.len() >= 2 {
                    let m = mean(&series);
                    ss += series.iter().map(|v| (v - m).powi(2)).sum::<f64>();
                    dof += series.len() - 1;
                }
                bucket.extend(series);
            }
        }
        if gap.is_empty() || line.is_empty() {
            groups.push(GroupResolution {
                width_um: g.width_um,
                gap_mean: f64::NAN,
                line_mean: f64::NAN,
                pooled_se: f64::NAN,
                resolved: false,
                truth_dip: f64::NAN,
            });
            continue;
        }
        let pooled_var = if dof > 0 { ss / dof as f64 } else { 0.0 };
        let se = (pooled_var / gap.len() as f64 + pooled_var / line.len() as f64).sqrt();
        let (gm, lm) = (mean(&gap), mean(&line));
        let dip = gm - lm;
        groups.push(GroupResolution {
            width_um: g.width_um,
            gap_mean: gm,
            line_mean: lm,
            pooled_se: se,
            resolved: dip > 0.0 && dip >= RESOLUTION_DIP_SIGMAS * se,
            truth_dip: mean(&truth_gap) - mean(&truth_line),
        });
    }
    let smallest_resolved_um = groups
        .iter()
        .filter(|g| g.resolved)
        .map(|g| g.width_um)
        .min_by(f64::total_cmp);
    Ok(ResolutionReport {
        groups,
        smallest_resolved_um,
    })
}

/// How the transmittance histogram is binned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramSpec {
    Bins(usize),
    Width(f64),
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec::Bins(20)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Precision ratio the calibration relation predicts at the bin centre.
    pub expected_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmittanceHistogram {
    pub bins: Vec<HistogramBin>,
    /// Exposure-weighted mean of the per-pixel mean transmittance.
    pub weighted_mean: f64,
}

/// Histogram of `values` with exposure `weights`; `expected` maps a
/// transmittance to a predicted precision ratio.
pub fn transmittance_histogram(
    values: &[f64],
    weights: &[f64],
    spec: HistogramSpec,
    expected: Option<&dyn Fn(f64) -> Option<f64>>,
) -> Result<TransmittanceHistogram, ImagingError> {
    let pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(v, w)| v.is_finite() && w.is_finite())
        .map(|(&v, &w)| (v, w))
        .collect();
    if pairs.is_empty() {
        return Err(ImagingError::Analysis("no finite pixels to histogram".into()));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (n, width) = match spec {
        HistogramSpec::Bins(0) => return Err(ImagingError::Analysis("zero histogram bins".into())),
        HistogramSpec::Bins(n) => (n, if hi > lo { (hi - lo) / n as f64 } else { 1.0 }),
        HistogramSpec::Width(w) if w > 0.0 && w.is_finite() => {
            (((hi - lo) / w).ceil().max(1.0) as usize, w)
        }
        HistogramSpec::Width(w) => return Err(ImagingError::Analysis(format!("bin width {w}"))),
    };
    let mut bins: Vec<HistogramBin> = (0..n)
        .map(|i| {
            let a = lo + i as f64 * width;
            let b = a + width;
            HistogramBin {
                lo: a,
                hi: b,
                count: 0,
                expected_gamma: expected.and_then(|f| f(0.5 * (a + b))),
            }
        })
        .collect();
    for &(v, _) in &pairs {
        let i = (((v - lo) / width) as usize).min(n - 1);
        bins[i].count += 1;
    }
    let wsum: f64 = pairs.iter().map(|p| p.1).sum();
    let weighted_mean = pairs.iter().map(|p| p.0 * p.1).sum::<f64>() / wsum;
    Ok(TransmittanceHistogram { bins, weighted_mean })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelwisePrecision {
    /// Per-pixel precision ratio (row-major), NaN where undefined.
    pub gamma_map: Vec<f64>,
    /// Mean of the per-pixel ratios, corrected for the `(n−1)/(n−3)` bias of
    /// an inverse sample variance.
    pub mean_gamma: f64,
    pub mean_gamma_stderr: f64,
    /// Uncorrected mean of the per-pixel ratios.
    pub mean_gamma_raw: f64,
    /// Mean baseline variance over mean observed variance.
    pub pooled_gamma: f64,
    /// Calibration-relation prediction averaged over pixels.
    pub expected_mean_gamma: Option<f64>,
    pub mean_variance: f64,
    pub histogram: TransmittanceHistogram,
}

/// Pixel-by-pixel variance across repeated scans, compared with the
/// shot-noise variance each pixel would have with the same exposure.
pub fn pixelwise_precision(
    stack: &ImageStack,
    baseline_eta_det: Efficiency,
    histogram: HistogramSpec,
    expected: Option<&dyn Fn(f64) -> Option<f64>>,
) -> Result<PixelwisePrecision, ImagingError> {
    let reps = stack.repetitions();
    if reps < 2 {
        return Err(ImagingError::TooFewRepetitions(reps));
    }
    let means = stack.mean_image();
    let n_in = stack.input_photons();
    let mut gamma_map = vec![f64::NAN; stack.pixels()];
    let mut gammas = Vec::new();
    let mut coh_sum = 0.0;
    let mut var_sum = 0.0;
    let mut expected_sum = 0.0;
    let mut expected_count = 0usize;
    let mut bias = None;
    for p in 0..stack.pixels() {
        let series: Vec<f64> = stack.pixel_series(p).into_iter().filter(|v| v.is_finite()).collect();
        let Ok(var) = sample_variance(&series) else { continue };
        let Ok(coh) = coherent_variance(means[p], baseline_eta_det, n_in[p]) else { continue };
        if var <= 0.0 {
            continue;
        }
        let n = series.len() as f64;
        bias.get_or_insert(if n > 3.0 { (n - 3.0) / (n - 1.0) } else { 1.0 });
        let g = coh / var;
        gamma_map[p] = g;
        gammas.push(g);
        coh_sum += coh;
        var_sum += var;
        if let Some(e) = expected.and_then(|f| f(means[p])) {
            expected_sum += e;
            expected_count += 1;
        }
    }
    if gammas.len() < 2 {
        return Err(ImagingError::Analysis("fewer than two pixels with a defined precision ratio".into()));
    }
    let bias = bias.unwrap_or(1.0);
    let raw = mean(&gammas);
    let se = (sample_variance(&gammas).unwrap_or(0.0) / gammas.len() as f64).sqrt();
    let histogram = transmittance_histogram(&means, &stack.exposure_per_window(), histogram, expected)?;
    Ok(PixelwisePrecision {
        gamma_map,
        mean_gamma: raw * bias,
        mean_gamma_stderr: se * bias,
        mean_gamma_raw: raw,
        pooled_gamma: coh_sum / var_sum,
        expected_mean_gamma: (expected_count > 0).then(|| expected_sum / expected_count as f64),
        mean_variance: var_sum / gammas.len() as f64,
        histogram,
    })
}

/// Least-squares slope of `ys` against `xs` and its standard error,
/// skipping non-finite points.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
        .sum();
    Some((slope, (resid / (n - 2.0) / sxx).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_bins_by_width() {
        let v = [0.90, 0.905, 0.91, 0.93, 0.95];
        let w = [1.0; 5];
        let h = transmittance_histogram(&v, &w, HistogramSpec::Width(0.01), None).unwrap();
        assert_eq!(h.bins.len(), 5);
        assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(h.bins[0].count, 2);
        assert_eq!(h.bins[4].count, 1);
        let h = transmittance_histogram(&v, &w, HistogramSpec::Bins(20), Some(&|x| Some(2.0 * x))).unwrap();
        assert_eq!(h.bins.len(), 20);
        let b = h.bins[3];
        assert!((b.expected_gamma.unwrap() - (b.lo + b.hi)).abs() < 1e-12);
        assert!(transmittance_histogram(&v, &w, HistogramSpec::Width(0.0), None).is_err());
        assert!(transmittance_histogram(&v, &w, HistogramSpec::Bins(0), None).is_err());
    }

    #[test]
    fn histogram_weighted_mean() {
        let h = transmittance_histogram(&[0.5, 1.0], &[3.0, 1.0], HistogramSpec::Bins(2), None).unwrap();
        assert!((h.weighted_mean - 0.625).abs() < 1e-15);
    }

    #[test]
    fn slope_of_line() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let (s, se) = regression_slope(&xs, &ys).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
        assert!(se < 1e-10);
        assert!(regression_slope(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
    }
}
