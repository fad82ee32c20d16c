//! Scenario configuration.
//!
//! A config file is flat TOML. Every key has a per-scenario default; a file
//! only needs the keys it changes. Keys that the selected scenario does not
//! use are rejected, as are unknown keys. `--set key=value` flags are applied
//! after the file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ssnscope_core::estimation::CountSource;
use ssnscope_core::imaging::PhantomSpec;
use ssnscope_core::{Efficiency, OpticalChain};
use std::fmt;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}` is not used by scenario `{scenario}`")]
    UnusedKey { key: String, scenario: Scenario },
    #[error("config is for scenario `{found}` but `{expected}` was requested")]
    ScenarioMismatch { expected: Scenario, found: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("malformed override `{0}`, expected key=value")]
    Override(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Figure1,
    Calibrate,
    Scan,
    Variance,
    Target,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Figure1,
        Scenario::Calibrate,
        Scenario::Scan,
        Scenario::Variance,
        Scenario::Target,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Figure1 => "figure1",
            Scenario::Calibrate => "calibrate",
            Scenario::Scan => "scan",
            Scenario::Variance => "variance",
            Scenario::Target => "target",
        }
    }

    /// Keys read by this scenario, besides `scenario` and `seed`.
    pub fn keys(self) -> Vec<&'static str> {
        const CHAIN: &[&str] = &[
            "pair_rate",
            "eta_herald",
            "eta_switch",
            "p_leak",
            "eta_pre_sample",
            "eta_opt",
            "eta_det",
            "dark_mean",
            "count_source",
        ];
        const SCAN: &[&str] = &[
            "calibration_windows",
            "step_um",
            "width_px",
            "height_px",
            "windows_per_pixel",
            "repetitions",
            "spot_fwhm_um",
        ];
        const PHANTOM: &[&str] = &[
            "differential_split",
            "drift_per_repetition",
            "phantom_text",
            "phantom_stroke_um",
            "phantom_background",
            "phantom_contrast",
            "phantom_rows",
            "phantom_cols",
            "phantom_pitch_um",
            "mean_transmittance",
        ];
        let parts: &[&[&str]] = match self {
            Scenario::Figure1 => &[&[
                "source_klyshko",
                "switch_loss",
                "leakage",
                "grid_points",
                "mc_points",
                "mc_windows",
                "mc_heralds",
            ]],
            Scenario::Calibrate => &[
                CHAIN,
                &[
                    "eta_sweep",
                    "series",
                    "windows_per_series",
                    "calibration_windows",
                    "differential_windows",
                    "differential_split",
                ],
            ],
            Scenario::Scan => &[CHAIN, SCAN, PHANTOM, &["bright_factor"]],
            Scenario::Variance => &[CHAIN, SCAN, PHANTOM, &["histogram_bins", "histogram_bin_width"]],
            Scenario::Target => &[CHAIN, SCAN, &["target_widths_um", "line_eta", "target_pitch_um"]],
        };
        parts.concat()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKey {
    Camera,
    Coincidence,
}

impl From<SourceKey> for CountSource {
    fn from(k: SourceKey) -> Self {
        match k {
            SourceKey::Camera => CountSource::Camera,
            SourceKey::Coincidence => CountSource::Coincidence,
        }
    }
}

/// Fully resolved configuration. Only the keys listed by
/// [`Scenario::keys`] are meaningful for a given scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    pub seed: u64,

    pub pair_rate: f64,
    pub eta_herald: Efficiency,
    pub eta_switch: Efficiency,
    pub p_leak: Efficiency,
    pub eta_pre_sample: Efficiency,
    pub eta_opt: Efficiency,
    pub eta_det: Efficiency,
    pub dark_mean: f64,
    pub count_source: SourceKey,

    pub source_klyshko: Vec<f64>,
    pub switch_loss: Efficiency,
    pub leakage: Efficiency,
    pub grid_points: usize,
    pub mc_points: Vec<f64>,
    pub mc_windows: usize,
    pub mc_heralds: f64,

    pub eta_sweep: Vec<f64>,
    pub series: usize,
    pub windows_per_series: usize,
    pub calibration_windows: usize,
    pub differential_windows: usize,
    pub differential_split: Efficiency,

    pub step_um: f64,
    pub width_px: usize,
    pub height_px: usize,
    pub windows_per_pixel: usize,
    pub repetitions: usize,
    pub spot_fwhm_um: f64,
    pub drift_per_repetition: f64,

    pub phantom_text: String,
    pub phantom_stroke_um: f64,
    pub phantom_background: f64,
    pub phantom_contrast: f64,
    pub phantom_rows: usize,
    pub phantom_cols: usize,
    pub phantom_pitch_um: f64,
    /// Shift the phantom to this mean transmittance; 0 keeps it as drawn.
    pub mean_transmittance: f64,
    pub bright_factor: f64,

    pub histogram_bins: usize,
    /// Bin width in transmittance units; 0 uses `histogram_bins`.
    pub histogram_bin_width: f64,

    pub target_widths_um: Vec<f64>,
    pub line_eta: f64,
    pub target_pitch_um: f64,
}

fn eff(x: f64) -> Efficiency {
    Efficiency::new(x).expect("default efficiency in range")
}

impl Config {
    pub fn defaults(scenario: Scenario) -> Self {
        let chain = OpticalChain::reference_setup();
        let phantom = PhantomSpec::default();
        let mut c = Config {
            scenario,
            seed: 1,
            pair_rate: chain.pair_rate,
            eta_herald: chain.eta_herald,
            eta_switch: chain.eta_switch,
            p_leak: chain.p_leak,
            eta_pre_sample: chain.eta_pre_sample,
            eta_opt: chain.eta_opt,
            eta_det: chain.eta_det,
            dark_mean: chain.dark_mean,
            count_source: SourceKey::Camera,
            source_klyshko: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            switch_loss: eff(0.15),
            leakage: eff(0.10),
            grid_points: 101,
            mc_points: vec![0.4, 0.7, 1.0],
            mc_windows: 4_000,
            mc_heralds: 2_000.0,
            eta_sweep: (0..=20).map(|i| i as f64 / 20.0).collect(),
            series: 13,
            windows_per_series: 40,
            calibration_windows: 520,
            differential_windows: 10_000,
            differential_split: eff(0.5),
            step_um: 2.0,
            width_px: 150,
            height_px: 75,
            windows_per_pixel: 1,
            repetitions: 4,
            spot_fwhm_um: 3.0,
            drift_per_repetition: 0.0,
            phantom_text: phantom.text,
            phantom_stroke_um: phantom.stroke_um,
            phantom_background: phantom.background,
            phantom_contrast: phantom.contrast,
            phantom_rows: phantom.rows,
            phantom_cols: phantom.cols,
            phantom_pitch_um: phantom.pitch_um,
            mean_transmittance: 0.0,
            bright_factor: 1e4,
            histogram_bins: 20,
            histogram_bin_width: 0.0,
            target_widths_um: vec![5.0, 4.0, 3.0, 2.0, 1.0],
            line_eta: 0.05,
            target_pitch_um: 0.25,
        };
        match scenario {
            Scenario::Scan => c.calibration_windows = 1_000,
            Scenario::Variance => {
                c.calibration_windows = 1_000;
                c.width_px = 26;
                c.height_px = 14;
                c.repetitions = 80;
                c.phantom_stroke_um = 2.0;
                c.phantom_contrast = 0.1;
                c.phantom_rows = 28;
                c.phantom_cols = 52;
                c.mean_transmittance = 0.911;
            }
            Scenario::Target => {
                c.calibration_windows = 1_000;
                c.step_um = 0.25;
                c.width_px = 480;
                c.height_px = 3;
            }
            Scenario::Figure1 | Scenario::Calibrate => {}
        }
        c
    }

    /// Defaults for `scenario`, then `file` (TOML text), then `overrides`.
    pub fn resolve(
        scenario: Scenario,
        file: Option<&str>,
        overrides: &[(String, toml::Value)],
    ) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(Config::defaults(scenario))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        let known: Vec<String> = table.keys().cloned().collect();
        let mut apply = |key: String, value: toml::Value| -> Result<(), ConfigError> {
            match key.as_str() {
                "scenario" => {
                    let found = value.as_str().unwrap_or_default().to_string();
                    if found != scenario.name() {
                        return Err(ConfigError::ScenarioMismatch {
                            expected: scenario,
                            found,
                        });
                    }
                }
                "seed" => {}
                k if scenario.keys().contains(&k) => {}
                k if known.iter().any(|n| n == k) => {
                    return Err(ConfigError::UnusedKey { key, scenario });
                }
                _ => return Err(ConfigError::UnknownKey(key)),
            }
            table.insert(key, value);
            Ok(())
        };
        if let Some(text) = file {
            let parsed: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
            for (k, v) in parsed {
                apply(k, v)?;
            }
        }
        for (k, v) in overrides {
            apply(k.clone(), v.clone())?;
        }
        let config: Config = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = self.scenario;
        let keys = s.keys();
        let uses = |k: &str| keys.contains(&k);
        let bad = |key: &'static str, reason: String| Err(ConfigError::Invalid { key, reason });
        if uses("pair_rate") {
            if let Err(e) = self.chain().validate() {
                return bad("pair_rate", e.to_string());
            }
            if !(self.pair_rate > 0.0) {
                return bad("pair_rate", "must be positive".into());
            }
        }
        if uses("source_klyshko") {
            if self.source_klyshko.is_empty() || self.source_klyshko.iter().any(|k| !(*k > 0.0 && *k < 1.0)) {
                return bad("source_klyshko", "values must lie in (0, 1)".into());
            }
            if self.grid_points < 2 {
                return bad("grid_points", "need at least 2 grid points".into());
            }
            if self.mc_points.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
                return bad("mc_points", "values must lie in (0, 1]".into());
            }
            if self.mc_windows < 3 {
                return bad("mc_windows", "need at least 3 windows".into());
            }
            if !(self.mc_heralds > 0.0 && self.mc_heralds.is_finite()) {
                return bad("mc_heralds", "must be positive".into());
            }
        }
        if uses("eta_sweep") {
            if self.eta_sweep.is_empty() || self.eta_sweep.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return bad("eta_sweep", "values must lie in [0, 1]".into());
            }
            if self.series < 2 {
                return bad("series", "need at least 2 series".into());
            }
            if self.windows_per_series < 2 {
                return bad("windows_per_series", "need at least 2 windows".into());
            }
            if self.differential_windows < ssnscope_core::estimation::DIFFERENTIAL_BASELINE_MIN_WINDOWS {
                return bad("differential_windows", "need at least 10000 windows".into());
            }
        }
        if uses("calibration_windows") && self.calibration_windows == 0 {
            return bad("calibration_windows", "must be positive".into());
        }
        if uses("differential_split") && !(self.differential_split.get() > 0.0 && self.differential_split.get() < 1.0) {
            return bad("differential_split", "must lie in (0, 1)".into());
        }
        if uses("step_um") {
            if !(self.step_um > 0.0 && self.step_um.is_finite()) {
                return bad("step_um", "must be positive".into());
            }
            if self.width_px == 0 || self.height_px == 0 {
                return bad("width_px", "scan dimensions must be positive".into());
            }
            if self.windows_per_pixel == 0 {
                return bad("windows_per_pixel", "must be positive".into());
            }
            if self.repetitions < 2 {
                return bad("repetitions", "need at least 2 repetitions".into());
            }
            if !(self.spot_fwhm_um > 0.0 && self.spot_fwhm_um.is_finite()) {
                return bad("spot_fwhm_um", "must be positive".into());
            }
        }
        if uses("drift_per_repetition") && !(self.drift_per_repetition.is_finite() && self.drift_per_repetition > -1.0 / self.repetitions as f64) {
            return bad("drift_per_repetition", "brightness would reach zero".into());
        }
        if uses("phantom_text") {
            for (key, v) in [("phantom_background", self.phantom_background), ("phantom_contrast", self.phantom_contrast)] {
                if !(0.0..=1.0).contains(&v) {
                    return bad(key, format!("{v} outside [0, 1]"));
                }
            }
            if self.phantom_contrast > self.phantom_background {
                return bad("phantom_contrast", "exceeds the background".into());
            }
            if !(self.phantom_stroke_um > 0.0 && self.phantom_pitch_um > 0.0) || self.phantom_rows == 0 || self.phantom_cols == 0 {
                return bad("phantom_stroke_um", "phantom geometry must be positive".into());
            }
            if !(0.0..=1.0).contains(&self.mean_transmittance) {
                return bad("mean_transmittance", "must lie in [0, 1]".into());
            }
        }
        if uses("bright_factor") && !(self.bright_factor >= 1.0 && self.bright_factor.is_finite()) {
            return bad("bright_factor", "must be at least 1".into());
        }
        if uses("histogram_bins") {
            if self.histogram_bins == 0 {
                return bad("histogram_bins", "must be positive".into());
            }
            if !(self.histogram_bin_width >= 0.0 && self.histogram_bin_width.is_finite()) {
                return bad("histogram_bin_width", "must be non-negative".into());
            }
        }
        if uses("target_widths_um") {
            if self.target_widths_um.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                return bad("target_widths_um", "widths must be positive".into());
            }
            if !(0.0..=1.0).contains(&self.line_eta) {
                return bad("line_eta", "must lie in [0, 1]".into());
            }
            if !(self.target_pitch_um > 0.0) {
                return bad("target_pitch_um", "must be positive".into());
            }
        }
        Ok(())
    }

    pub fn chain(&self) -> OpticalChain {
        OpticalChain {
            pair_rate: self.pair_rate,
            eta_herald: self.eta_herald,
            eta_switch: self.eta_switch,
            p_leak: self.p_leak,
            eta_pre_sample: self.eta_pre_sample,
            eta_opt: self.eta_opt,
            eta_det: self.eta_det,
            dark_mean: self.dark_mean,
        }
    }

    pub fn phantom(&self) -> PhantomSpec {
        PhantomSpec {
            text: self.phantom_text.clone(),
            stroke_um: self.phantom_stroke_um,
            background: self.phantom_background,
            contrast: self.phantom_contrast,
            rows: self.phantom_rows,
            cols: self.phantom_cols,
            pitch_um: self.phantom_pitch_um,
        }
    }

    /// The keys this scenario reads, as TOML, sorted by key.
    pub fn to_toml(&self) -> String {
        let full = toml::Table::try_from(self).expect("config serialises");
        let keys = self.scenario.keys();
        let keep = |k: &str| k == "scenario" || k == "seed" || keys.contains(&k);
        let filtered: toml::Table = full.into_iter().filter(|(k, _)| keep(k)).collect();
        toml::to_string(&filtered).expect("table serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// One-line identifier carried by every output file.
    pub fn stamp(&self) -> String {
        format!(
            "manifest scenario={} seed={} config_sha256={}",
            self.scenario,
            self.seed,
            self.hash()
        )
    }
}

/// Parse a `key=value` flag; the value is read as TOML, falling back to a
/// bare string.
pub fn parse_override(s: &str) -> Result<(String, toml::Value), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Override(s.to_string()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(ConfigError::Override(s.to_string()));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {v}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(v.trim().to_string()));
    Ok((k.to_string(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_key_is_a_config_field() {
        let table = toml::Table::try_from(Config::defaults(Scenario::Scan)).unwrap();
        for s in Scenario::ALL {
            for k in s.keys() {
                assert!(table.contains_key(k), "{s}: {k}");
            }
            Config::defaults(s).validate().unwrap();
        }
    }

    #[test]
    fn file_values_override_defaults() {
        let c = Config::resolve(Scenario::Calibrate, Some("eta_det = 0.8\nseed = 7\n"), &[]).unwrap();
        assert_eq!(c.eta_det.get(), 0.8);
        assert_eq!(c.seed, 7);
        let o = parse_override("eta_det=0.7").unwrap();
        let c = Config::resolve(Scenario::Calibrate, Some("eta_det = 0.8\n"), &[o]).unwrap();
        assert_eq!(c.eta_det.get(), 0.7);
    }

    #[test]
    fn rejects_bad_keys_and_values() {
        assert!(matches!(
            Config::resolve(Scenario::Scan, Some("nonsense = 1\n"), &[]),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            Config::resolve(Scenario::Figure1, Some("repetitions = 3\n"), &[]),
            Err(ConfigError::UnusedKey { .. })
        ));
        assert!(matches!(
            Config::resolve(Scenario::Calibrate, Some("eta_det = 1.5\n"), &[]),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            Config::resolve(Scenario::Scan, Some("scenario = \"target\"\n"), &[]),
            Err(ConfigError::ScenarioMismatch { .. })
        ));
        assert!(matches!(
            Config::resolve(Scenario::Variance, Some("repetitions = 1\n"), &[]),
            Err(ConfigError::Invalid { key: "repetitions", .. })
        ));
        assert!(matches!(
            Config::resolve(Scenario::Figure1, Some("grid_points = 1\n"), &[]),
            Err(ConfigError::Invalid { .. })
        ));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn manifest_round_trips() {
        let c = Config::resolve(Scenario::Target, Some("seed = 3\nline_eta = 0.1\n"), &[]).unwrap();
        let text = c.to_toml();
        assert!(!text.contains("phantom_text"));
        let again = Config::resolve(Scenario::Target, Some(&text), &[]).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }
}
