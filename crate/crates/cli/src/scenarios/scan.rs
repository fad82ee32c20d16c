use ssnscope_core::imaging::{glyph_phantom, raster_scan, Acquisition, EstimatorKind, ImageStack};
use ssnscope_core::TransmittanceMap;

use super::{acquisition, mean_and_se, pixel_variances, scan_config, spot, Exec, RunError};
use crate::config::Config;
use crate::output::{num, RunDir};

const SCENARIO_KEY: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSummary {
    pub name: &'static str,
    pub total_exposure: u64,
    pub exposure_per_pixel: f64,
    pub mean_pixel_variance: f64,
    pub mean_pixel_variance_stderr: f64,
    pub rms_error: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ScanRun {
    pub map: TransmittanceMap,
    pub stacks: Vec<(&'static str, ImageStack)>,
    pub summaries: Vec<ImageSummary>,
}

fn summarize(name: &'static str, stack: &ImageStack) -> ImageSummary {
    let (v, se) = mean_and_se(&pixel_variances(stack));
    let mean = stack.mean_image();
    let sq: Vec<f64> = mean
        .iter()
        .zip(&stack.truth)
        .map(|(m, t)| (m - t).powi(2))
        .filter(|x| x.is_finite())
        .collect();
    let total = stack.total_exposure();
    ImageSummary {
        name,
        total_exposure: total,
        exposure_per_pixel: total as f64 / (stack.pixels() * stack.repetitions()) as f64,
        mean_pixel_variance: v,
        mean_pixel_variance_stderr: se,
        rms_error: (sq.iter().sum::<f64>() / sq.len() as f64).sqrt(),
        failures: stack.failures.len(),
    }
}

pub fn compute(config: &Config, exec: Exec) -> Result<ScanRun, RunError> {
    let mut map = glyph_phantom(&config.phantom())?;
    if config.mean_transmittance > 0.0 {
        map = map.with_mean(config.mean_transmittance)?;
    }
    let spot = spot(config)?;
    let scan = scan_config(&map, config);
    let quantum = acquisition(config, EstimatorKind::Klyshko, SCENARIO_KEY * 10, exec);
    let differential = acquisition(config, EstimatorKind::Differential, SCENARIO_KEY * 10 + 1, exec);
    let bright = Acquisition {
        chain: config.chain().with_brightness(config.bright_factor),
        ..acquisition(config, EstimatorKind::Direct, SCENARIO_KEY * 10 + 2, exec)
    };
    let mut stacks = Vec::new();
    for (name, acq) in [("quantum", &quantum), ("differential", &differential), ("bright", &bright)] {
        log::info!("scanning {name} image");
        stacks.push((name, raster_scan(&map, &spot, &scan, acq, config.seed)?));
    }
    let summaries = stacks.iter().map(|(n, s)| summarize(n, s)).collect();
    Ok(ScanRun { map, stacks, summaries })
}

pub fn write(result: &ScanRun, out: &mut RunDir) -> Result<(), RunError> {
    let (w, h) = {
        let s = &result.stacks[0].1;
        (s.width(), s.height())
    };
    out.pgm("truth.pgm", w, h, &result.stacks[0].1.truth, 0.0, 1.0)?;
    out.grid_csv("truth.csv", w, &result.stacks[0].1.truth)?;
    let mut failures = Vec::new();
    for (name, stack) in &result.stacks {
        let mean = stack.mean_image();
        out.pgm(&format!("{name}.pgm"), w, h, &mean, 0.0, 1.0)?;
        out.grid_csv(&format!("{name}.csv"), w, &mean)?;
        failures.extend(stack.failures.iter().map(|f| {
            vec![
                name.to_string(),
                f.repetition.to_string(),
                f.row.to_string(),
                f.col.to_string(),
                f.reason.clone(),
            ]
        }));
    }
    out.csv("failures.csv", &["image", "repetition", "row", "col", "reason"], failures)?;
    let rows = result.summaries.iter().map(|s| {
        vec![
            s.name.to_string(),
            s.total_exposure.to_string(),
            num(s.exposure_per_pixel),
            num(s.mean_pixel_variance),
            num(s.mean_pixel_variance_stderr),
            num(s.rms_error),
            s.failures.to_string(),
        ]
    });
    out.csv(
        "scan_summary.csv",
        &[
            "image",
            "total_exposure",
            "exposure_per_pixel",
            "mean_pixel_variance",
            "mean_pixel_variance_stderr",
            "rms_error",
            "failures",
        ],
        rows,
    )?;
    out.note("map_mean_transmittance", num(result.map.mean()));
    for s in &result.summaries {
        out.note(&format!("{}_total_exposure", s.name), s.total_exposure);
    }
    Ok(())
}
