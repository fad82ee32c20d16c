use ssnscope_core::imaging::{
    make_resolution_target_with, raster_scan, resolution_metric, EstimatorKind, ResolutionReport, ResolutionTarget,
    TargetSpec,
};

use super::{acquisition, scan_config, spot, Exec, RunError};
use crate::config::Config;
use crate::output::{num, RunDir};

const SCENARIO_KEY: u64 = 5;

#[derive(Debug, Clone)]
pub struct TargetRun {
    pub target: ResolutionTarget,
    pub spot_fwhm_um: f64,
    pub report: ResolutionReport,
    pub mean_image: Vec<f64>,
    pub width_px: usize,
}

impl TargetRun {
    /// Smallest width whose noiseless contrast clears the threshold.
    pub fn truth_smallest_resolved(&self) -> Option<f64> {
        self.report
            .groups
            .iter()
            .filter(|g| g.truth_resolved())
            .map(|g| g.width_um)
            .min_by(f64::total_cmp)
    }
}

pub fn compute(config: &Config, exec: Exec) -> Result<TargetRun, RunError> {
    let spec = TargetSpec {
        line_eta: config.line_eta,
        ..TargetSpec::default()
    };
    let target = make_resolution_target_with(&config.target_widths_um, config.target_pitch_um, &spec)?;
    let spot = spot(config)?;
    let scan = scan_config(&target.map, config);
    let acq = acquisition(config, EstimatorKind::Klyshko, SCENARIO_KEY * 10, exec);
    let stack = raster_scan(&target.map, &spot, &scan, &acq, config.seed)?;
    let report = resolution_metric(&stack, &target)?;
    Ok(TargetRun {
        spot_fwhm_um: spot.fwhm_um(),
        mean_image: stack.mean_image(),
        width_px: stack.width(),
        target,
        report,
    })
}

pub fn write(result: &TargetRun, out: &mut RunDir) -> Result<(), RunError> {
    let rows = result.report.groups.iter().map(|g| {
        vec![
            num(g.width_um),
            num(g.gap_mean),
            num(g.line_mean),
            num(g.dip()),
            num(g.pooled_se),
            g.resolved.to_string(),
            num(g.truth_dip),
            g.truth_resolved().to_string(),
        ]
    });
    out.csv(
        "resolution.csv",
        &[
            "width_um",
            "gap_mean",
            "line_mean",
            "dip",
            "pooled_se",
            "resolved",
            "truth_dip",
            "truth_resolved",
        ],
        rows,
    )?;
    out.grid_csv("target_mean.csv", result.width_px, &result.mean_image)?;
    let h = result.mean_image.len() / result.width_px.max(1);
    out.pgm("target_mean.pgm", result.width_px, h, &result.mean_image, 0.0, 1.0)?;
    let show = |x: Option<f64>| x.map(num).unwrap_or_else(|| "none".into());
    out.note("spot_fwhm_um", num(result.spot_fwhm_um));
    out.note("smallest_resolved_um", show(result.report.smallest_resolved_um));
    out.note("truth_smallest_resolved_um", show(result.truth_smallest_resolved()));
    Ok(())
}
