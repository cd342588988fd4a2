//! Diffusive scaling of the quenched walk and the normalization of `Σ`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::density::q_mean_rates;
use crate::env::{mix64, EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{torus, SolverOptions};
use crate::stats::Moments;
use crate::walker::{positions_at, stream_rng, SpaceTime};

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CltConfig {
    pub ensemble: usize,
    pub times: Vec<f64>,
    /// Paths in total, split evenly over the ensemble.
    pub n_samples: u64,
    pub mc_seed: u64,
    /// Torus and window for the `Q`-average of the rates.
    pub side: usize,
    pub window: f64,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for CltConfig {
    fn default() -> Self {
        CltConfig {
            ensemble: 5,
            times: vec![50.0, 100.0, 200.0],
            n_samples: 100_000,
            mc_seed: 0,
            side: 64,
            window: 64.0,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

/// Candidate normalizations `Σ_i = factor · E_Q[a_i]`.
pub const SIGMA_FACTORS: [f64; 2] = [1.0, 2.0];

pub fn verify_clt(env: &EnvParams, cfg: &CltConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("stability", 0.05), ("cross_z", 3.0), ("sigma_mismatch", 0.05)]).merged(overrides)?;
    let d = env.d;
    if cfg.ensemble == 0 || cfg.times.is_empty() || cfg.n_samples < cfg.ensemble as u64 {
        return Err(Error::Param("clt needs environments, times and samples".into()));
    }
    let opts = SolverOptions::with_courant(cfg.courant);
    let envs = env.ensemble(cfg.ensemble);
    let per_env = cfg.n_samples / cfg.ensemble as u64;
    let nt = cfg.times.len();
    let mut sq: Vec<Vec<Moments>> = vec![vec![Moments::default(); d]; nt];
    let mut cross: Vec<Moments> = vec![Moments::default(); nt];
    let mut q_rates = vec![0.0; d];
    let sites = torus(d, cfg.side)?;
    let burn = cfg.burn_in_factor * (cfg.side * cfg.side) as f64;
    for e in &envs {
        let field = RateField::new(e.clone())?;
        let a = q_mean_rates(&field, &sites, 0.0, cfg.window, burn, &opts)?;
        for (q, v) in q_rates.iter_mut().zip(a) {
            *q += v / envs.len() as f64;
        }
        let start = SpaceTime::origin(d);
        let seed = mix64(cfg.mc_seed ^ mix64(e.seed));
        for k in 0..per_env {
            let mut rng = stream_rng(seed, k);
            let pos = positions_at(&field, &start, &cfg.times, &mut rng);
            for (j, x) in pos.iter().enumerate() {
                let t = cfg.times[j];
                for i in 0..d {
                    sq[j][i].push((x[i] * x[i]) as f64 / t);
                }
                if d >= 2 {
                    cross[j].push((x[0] * x[1]) as f64 / t);
                }
            }
        }
    }

    let mut b = ReportBuilder::new("clt", env, cfg);
    b.seeds(envs.iter().map(|e| e.seed));
    let mut stability: f64 = 0.0;
    let mut cross_z: f64 = 0.0;
    for i in 0..d {
        b.metric(format!("q_rate_axis{i}"), q_rates[i]);
        let v: Vec<f64> = (0..nt).map(|j| sq[j][i].mean()).collect();
        for j in 0..nt {
            let t = cfg.times[j];
            b.metric(format!("var_over_t_axis{i}_t{t}"), v[j]);
            b.metric(format!("var_over_t_se_axis{i}_t{t}"), sq[j][i].std_err());
            b.metric(format!("ratio_to_q_rate_axis{i}_t{t}"), v[j] / q_rates[i]);
        }
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        stability = stability.max(hi / lo - 1.0);
    }
    if d >= 2 {
        for j in 0..nt {
            let z = cross[j].mean().abs() / cross[j].std_err();
            b.metric(format!("cross_cov_t{}", cfg.times[j]), cross[j].mean());
            cross_z = cross_z.max(if z.is_finite() { z } else { 0.0 });
        }
    }
    // normalization: compare Var/t at the longest time with both candidates
    let last = nt - 1;
    let ratio: f64 = (0..d).map(|i| sq[last][i].mean() / q_rates[i]).sum::<f64>() / d as f64;
    let (factor, mismatch) = SIGMA_FACTORS
        .iter()
        .map(|&f| (f, (ratio / f - 1.0).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    b.metric("stability", stability)
        .metric("cross_z", cross_z)
        .metric("variance_to_q_rate", ratio)
        .metric("sigma_factor", factor)
        .metric("sigma_mismatch", mismatch)
        .require("Var/t stable in t", "stability", Cmp::Lt, th.get("stability"))
        .require("cross covariance vanishes", "cross_z", Cmp::Le, th.get("cross_z"))
        .require("normalization resolved", "sigma_mismatch", Cmp::Lt, th.get("sigma_mismatch"))
        .key("variance_to_q_rate");
    for i in 0..d {
        b.metric(format!("sigma_axis{i}"), factor * q_rates[i]);
    }
    b.note(format!("per-axis variance matches {factor} x E_Q[a_i]"));
    b.finish()
}

/// Resolved factor `Σ_i / E_Q[a_i]` from a passing clt report.
pub fn sigma_factor_from_report(report: &VerificationReport) -> Result<f64> {
    if report.check != "clt" || !report.pass {
        return Err(Error::SigmaUnresolved);
    }
    report.metric("sigma_factor").ok_or(Error::SigmaUnresolved)
}

/// Resolved `Σ` from a clt report.
pub fn sigma_from_report(report: &VerificationReport) -> Result<Vec<f64>> {
    if report.check != "clt" || !report.pass {
        return Err(Error::SigmaUnresolved);
    }
    (0..report.env.d)
        .map(|i| report.metric(&format!("sigma_axis{i}")).ok_or(Error::SigmaUnresolved))
        .collect()
}
