use rayon::prelude::*;
use ssnscope_core::estimation::{gamma_analytic, gamma_empirical, heralding_ratio, EstimateSeries};
use ssnscope_core::{
    effective_klyshko, simulate_window, CountSource, CountsAggregate, Efficiency, EffectiveKlyshko, OpticalChain,
    RngStream, SampleFactor, StreamKey,
};

use super::{Exec, RunError};
use crate::config::Config;
use crate::output::{num, RunDir};

const SCENARIO_KEY: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Direct,
    FeedForward,
}

impl Curve {
    pub fn name(self) -> &'static str {
        match self {
            Curve::Direct => "direct",
            Curve::FeedForward => "feedforward",
        }
    }
}

/// Source whose signal photon is detected with the same efficiency as its
/// herald, sending every pair to the sample.
pub fn direct_chain(eta0: f64, heralds: f64) -> Result<OpticalChain, RunError> {
    let k = Efficiency::new(eta0)?;
    Ok(OpticalChain {
        pair_rate: heralds / eta0,
        eta_herald: k,
        eta_switch: Efficiency::ONE,
        p_leak: Efficiency::ONE,
        eta_pre_sample: Efficiency::ONE,
        eta_opt: Efficiency::ONE,
        eta_det: k,
        dark_mean: 0.0,
    })
}

/// The same source with the switch in the probe arm.
pub fn feedforward_chain(eta0: f64, heralds: f64, switch_loss: Efficiency, leakage: Efficiency) -> Result<OpticalChain, RunError> {
    Ok(OpticalChain {
        eta_switch: switch_loss.complement(),
        p_leak: leakage,
        ..direct_chain(eta0, heralds)?
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePair {
    pub source_klyshko: f64,
    pub feedforward: EffectiveKlyshko,
    /// Γ at each grid point, direct and feed-forward.
    pub direct: Vec<f64>,
    pub feedforward_gamma: Vec<f64>,
}

impl CurvePair {
    /// Smallest grid transmittance with Γ > 1.
    pub fn crossing(&self, grid: &[f64], curve: Curve) -> Option<f64> {
        let g = match curve {
            Curve::Direct => &self.direct,
            Curve::FeedForward => &self.feedforward_gamma,
        };
        grid.iter().zip(g).find(|(_, g)| **g > 1.0).map(|(e, _)| *e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpotCheck {
    pub source_klyshko: f64,
    pub curve: Curve,
    pub eta_sample: f64,
    pub gamma_mc: f64,
    pub gamma_stderr: f64,
    pub gamma_analytic: f64,
}

impl SpotCheck {
    pub fn z(&self) -> f64 {
        (self.gamma_mc - self.gamma_analytic) / self.gamma_stderr
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure1 {
    pub grid: Vec<f64>,
    pub curves: Vec<CurvePair>,
    pub checks: Vec<SpotCheck>,
}

/// Per-window coincidence estimates against the exact no-sample ratio; the
/// precision ratio is taken against a coherent beam with the same detector.
pub fn coincidence_gamma(
    chain: &OpticalChain,
    eta: f64,
    windows: usize,
    seed: u64,
    key: StreamKey,
) -> Result<(f64, f64), RunError> {
    let e1 = chain.expected(Efficiency::ONE);
    let reference = e1.coincident / e1.herald;
    let mut estimates = Vec::with_capacity(windows);
    let mut exposed = 0u64;
    for w in 0..windows as u64 {
        let win = simulate_window(chain, Efficiency::new(eta)?, &mut RngStream::new(seed, key.with_window(w)))?;
        exposed += win.n_exposed;
        let r = heralding_ratio(&CountsAggregate::from(&win), CountSource::Coincidence, 0.0)?;
        estimates.push(r.value / reference);
    }
    let series = EstimateSeries::new(estimates).with_input_photons(exposed as f64 / windows as f64);
    let eta_hat = series.mean().unwrap_or(eta);
    let r = gamma_empirical(&series, chain.post_sample(), eta_hat)?;
    Ok((r.gamma, r.gamma_stderr))
}

pub fn compute(config: &Config, exec: Exec) -> Result<Figure1, RunError> {
    let n = config.grid_points;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mut curves = Vec::new();
    for &k0 in &config.source_klyshko {
        let eff_k0 = Efficiency::new(k0)?;
        let ff = feedforward_chain(k0, config.mc_heralds, config.switch_loss, config.leakage)?;
        let kf = effective_klyshko(&ff, Efficiency::ONE, SampleFactor::Excluded)?;
        let direct = grid
            .iter()
            .map(|&e| gamma_analytic(e, eff_k0, eff_k0))
            .collect::<Result<Vec<_>, _>>()?;
        let feedforward_gamma = grid
            .iter()
            .map(|&e| gamma_analytic(e, kf.eta_p, kf.eta_r))
            .collect::<Result<Vec<_>, _>>()?;
        curves.push(CurvePair {
            source_klyshko: k0,
            feedforward: kf,
            direct,
            feedforward_gamma,
        });
    }

    let mut jobs = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        for curve in [Curve::Direct, Curve::FeedForward] {
            for (j, &eta) in config.mc_points.iter().enumerate() {
                jobs.push((i, c.source_klyshko, curve, j, eta));
            }
        }
    }
    let run = |&(i, k0, curve, j, eta): &(usize, f64, Curve, usize, f64)| -> Result<SpotCheck, RunError> {
        let chain = match curve {
            Curve::Direct => direct_chain(k0, config.mc_heralds)?,
            Curve::FeedForward => feedforward_chain(k0, config.mc_heralds, config.switch_loss, config.leakage)?,
        };
        let kp = effective_klyshko(&chain, Efficiency::ONE, SampleFactor::Excluded)?;
        let key = StreamKey::new(SCENARIO_KEY, (i * 2 + curve as usize) as u64, j as u64, 0);
        let (gamma_mc, gamma_stderr) = coincidence_gamma(&chain, eta, config.mc_windows, config.seed, key)?;
        Ok(SpotCheck {
            source_klyshko: k0,
            curve,
            eta_sample: eta,
            gamma_mc,
            gamma_stderr,
            gamma_analytic: gamma_analytic(eta, kp.eta_p, kp.eta_r)?,
        })
    };
    let checks = if exec.parallel() {
        jobs.par_iter().map(run).collect::<Result<Vec<_>, _>>()?
    } else {
        jobs.iter().map(run).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Figure1 { grid, curves, checks })
}

pub fn write(result: &Figure1, out: &mut RunDir) -> Result<(), RunError> {
    let mut header = vec!["eta_sample".to_string()];
    for c in &result.curves {
        header.push(format!("gamma_direct_k{}", c.source_klyshko));
        header.push(format!("gamma_feedforward_k{}", c.source_klyshko));
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = result.grid.iter().enumerate().map(|(i, e)| {
        let mut row = vec![num(*e)];
        for c in &result.curves {
            row.push(num(c.direct[i]));
            row.push(num(c.feedforward_gamma[i]));
        }
        row
    });
    out.csv("figure1.csv", &header_refs, rows)?;

    let summary = result.curves.iter().map(|c| {
        let last = result.grid.len() - 1;
        let crossing = |curve| c.crossing(&result.grid, curve).map(num).unwrap_or_else(|| "none".into());
        vec![
            num(c.source_klyshko),
            num(c.feedforward.eta_p.get()),
            num(c.feedforward.eta_r.get()),
            num(c.direct[last]),
            num(c.feedforward_gamma[last]),
            crossing(Curve::Direct),
            crossing(Curve::FeedForward),
        ]
    });
    out.csv(
        "figure1_summary.csv",
        &[
            "source_klyshko",
            "feedforward_eta_p",
            "feedforward_eta_r",
            "gamma_direct_at_1",
            "gamma_feedforward_at_1",
            "crossing_direct",
            "crossing_feedforward",
        ],
        summary,
    )?;

    let checks = result.checks.iter().map(|c| {
        vec![
            num(c.source_klyshko),
            c.curve.name().to_string(),
            num(c.eta_sample),
            num(c.gamma_mc),
            num(c.gamma_stderr),
            num(c.gamma_analytic),
            num(c.z()),
        ]
    });
    out.csv(
        "figure1_montecarlo.csv",
        &[
            "source_klyshko",
            "curve",
            "eta_sample",
            "gamma_mc",
            "gamma_stderr",
            "gamma_analytic",
            "z",
        ],
        checks,
    )?;
    Ok(())
}
