//! Local limit: `n^d p(0; ⌊nx⌋, n²t) / ρ(⌊nx⌋, n²t)` against `p_t^Σ(0, x)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::gauss::periodized_density;
use crate::kernel::{heat_kernel_run, norm2, torus, SolverOptions};
use crate::walker::SpaceTime;

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LltConfig {
    /// `Σ_i = sigma_factor · E_Q[a_i]`, the normalization resolved by the
    /// clt check.
    pub sigma_factor: Option<f64>,
    pub k: f64,
    pub t0: f64,
    pub n: Vec<usize>,
    /// Macroscopic spacing of the probe grid in `x`.
    pub spacing: f64,
    /// Number of probe times in `[t0, 2 t0]`.
    pub time_points: usize,
    /// Torus side is `period · n`.
    pub period: usize,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for LltConfig {
    fn default() -> Self {
        LltConfig {
            sigma_factor: None,
            k: 2.0,
            t0: 1.0,
            n: vec![8, 16, 32],
            spacing: 0.25,
            time_points: 5,
            period: 6,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

/// Lattice points `y` with `y/n` on the grid of the given spacing and `|y/n| ≤ k`.
pub(crate) fn probe_grid(d: usize, n: usize, k: f64, spacing: f64) -> Vec<Vec<i64>> {
    let step = ((spacing * n as f64).round() as i64).max(1);
    let reach = (k * n as f64).floor() as i64 / step;
    let mut out = Vec::new();
    let mut idx = vec![-reach; d];
    loop {
        let y: Vec<i64> = idx.iter().map(|i| i * step).collect();
        if (norm2(&y) as f64).sqrt() <= k * n as f64 + 1e-9 {
            out.push(y);
        }
        let mut a = 0;
        loop {
            if a == d {
                return out;
            }
            idx[a] += 1;
            if idx[a] <= reach {
                break;
            }
            idx[a] = -reach;
            a += 1;
        }
    }
}

pub struct LltLevel {
    pub n: usize,
    pub discrepancy: f64,
    pub sigma: Vec<f64>,
    /// `(y, t, q)` at every probe.
    pub samples: Vec<(Vec<i64>, f64, f64)>,
}

/// `E(n)` for one level.
pub fn llt_level(field: &RateField, cfg: &LltConfig, factor: f64, n: usize) -> Result<LltLevel> {
    let d = field.dim();
    let side = cfg.period * n;
    let sites = torus(d, side)?;
    let scale = (n * n) as f64;
    let times: Vec<f64> = (0..cfg.time_points)
        .map(|j| cfg.t0 * scale * (1.0 + j as f64 / (cfg.time_points.max(2) - 1) as f64))
        .collect();
    let burn = cfg.burn_in_factor * (side * side) as f64;
    let run = heat_kernel_run(field, &sites, &SpaceTime::origin(d), &times, burn, &SolverOptions::with_courant(cfg.courant))?;
    let sigma: Vec<f64> = run
        .q_rates
        .as_ref()
        .ok_or_else(|| Error::Param("empty time window".into()))?
        .iter()
        .map(|a| factor * a)
        .collect();
    let grid = probe_grid(d, n, cfg.k, cfg.spacing);
    let nd = (n as f64).powi(d as i32);
    let mut worst: f64 = 0.0;
    let mut samples = Vec::new();
    for (slice, &t) in run.slices.iter().zip(&times) {
        let tm = t / scale;
        for y in &grid {
            let x: Vec<f64> = y.iter().map(|&c| c as f64 / n as f64).collect();
            let g = periodized_density(&x, &sigma, tm, cfg.period as f64);
            let q = slice.q(y)?;
            worst = worst.max((nd * q - g).abs());
            samples.push((y.clone(), t, q));
        }
    }
    Ok(LltLevel { n, discrepancy: worst, sigma, samples })
}

pub fn verify_llt(env: &EnvParams, cfg: &LltConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("final_to_first", 0.5)]).merged(overrides)?;
    let factor = cfg.sigma_factor.ok_or(Error::SigmaUnresolved)?;
    if cfg.n.len() < 2 || cfg.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Param("n list must increase".into()));
    }
    let field = RateField::new(env.clone())?;
    let mut b = ReportBuilder::new("llt", env, cfg);
    b.seeds([env.seed]);
    let mut e = Vec::new();
    for &n in &cfg.n {
        let lv = llt_level(&field, cfg, factor, n)?;
        b.metric(format!("discrepancy_n{n}"), lv.discrepancy);
        for (i, s) in lv.sigma.iter().enumerate() {
            b.metric(format!("sigma_axis{i}_n{n}"), *s);
        }
        e.push(lv.discrepancy);
    }
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    b.metric("final_to_first", e[e.len() - 1] / e[0])
        .flag("strictly decreasing", decreasing)
        .require("final below half of first", "final_to_first", Cmp::Lt, th.get("final_to_first"))
        .key("final_to_first");
    b.note("Gaussian comparator is periodized with the torus period");
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_symmetric_and_bounded() {
        let g = probe_grid(2, 8, 2.0, 0.25);
        assert!(g.iter().all(|y| norm2(y) <= 256));
        assert!(g.contains(&vec![0, 0]) && g.contains(&vec![16, 0]) && g.contains(&vec![-8, 8]));
        assert_eq!(g.len(), 197);
    }
}
