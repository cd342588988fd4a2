//! Forward kernel against closed-form oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::Result;
use crate::kernel::{forward, forward_times, torus, SolverOptions};
use crate::walker::SpaceTime;

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Per-direction rate of the homogeneous walk compared with the oracle.
    pub rate: f64,
    pub time: f64,
    pub side: usize,
    /// Torus for the Chapman–Kolmogorov check in the supplied environment.
    pub ck_side: usize,
    pub ck_times: [f64; 3],
    pub courant: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            rate: 0.25,
            time: 8.0,
            side: 48,
            ck_side: 16,
            ck_times: [0.0, 1.0, 2.0],
            courant: 0.02,
        }
    }
}

/// `e^{−x} I_k(x)` by its power series; adequate for moderate `x`.
pub fn scaled_bessel_i(k: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // first term (x/2)^k / k!
    let mut term = (1..=k).fold(1.0, |acc, j| acc * half / j as f64);
    let mut sum = 0.0;
    for m in 0.. {
        sum += term;
        term *= half * half / ((m + 1) as f64 * (m + 1 + k) as f64);
        if term < 1e-18 * sum && m > 2 {
            break;
        }
    }
    sum * (-x).exp()
}

/// One-dimensional walk jumping to each neighbour at rate `a`:
/// `P(X_t = k) = e^{−2at} I_k(2at)`.
pub fn walk_1d(k: i64, a: f64, t: f64) -> f64 {
    scaled_bessel_i(k.unsigned_abs() as u32, 2.0 * a * t)
}

pub fn verify_kernel_oracle(env: &EnvParams, cfg: &OracleConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("oracle_max_abs", 1e-8), ("ck_residual", 1e-8)]).merged(overrides)?;
    let opts = SolverOptions::with_courant(cfg.courant);
    let d = env.d;

    let hom = RateField::new(EnvParams::homogeneous(d, cfg.rate))?;
    let sites = torus(d, cfg.side)?;
    let k = forward(&hom, &sites, &SpaceTime::origin(d), cfg.time, &opts)?;
    let mut oracle_err: f64 = 0.0;
    for (i, &v) in k.values.iter().enumerate() {
        let x = sites.site(i);
        let exact: f64 = x.iter().map(|&c| walk_1d(c, cfg.rate, cfg.time)).product();
        oracle_err = oracle_err.max((v - exact).abs());
    }

    let field = RateField::new(env.clone())?;
    let ck = torus(d, cfg.ck_side)?;
    let [t0, t1, t2] = cfg.ck_times;
    let start = SpaceTime::new(vec![0; d], t0);
    let direct = forward_times(&field, &ck, &start, &[t1, t2], &opts)?;
    let mut composed = vec![0.0; ck.len()];
    for (z, &w) in direct[0].values.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let s = forward(&field, &ck, &SpaceTime::new(ck.site(z).to_vec(), t1), t2, &opts)?;
        for (c, v) in composed.iter_mut().zip(&s.values) {
            *c += w * v;
        }
    }
    let ck_res = composed
        .iter()
        .zip(&direct[1].values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut b = ReportBuilder::new("kernel_oracle", env, cfg);
    b.seeds([env.seed])
        .metric("oracle_max_abs", oracle_err)
        .metric("ck_residual", ck_res)
        .metric("direct_mass", direct[1].mass())
        .require("oracle agreement", "oracle_max_abs", Cmp::Lt, th.get("oracle_max_abs"))
        .require("Chapman-Kolmogorov", "ck_residual", Cmp::Lt, th.get("ck_residual"))
        .key("oracle_max_abs");
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_small_values() {
        // e^{-x} I_0(x) at x = 1 and e^{-2} I_1(2)
        assert!((scaled_bessel_i(0, 1.0) - 0.465_759_607_593_640_2).abs() < 1e-15);
        assert!((scaled_bessel_i(1, 2.0) - 0.215_269_289_248_937).abs() < 1e-14);
    }

    #[test]
    fn walk_1d_sums_to_one() {
        let s: f64 = (-60..=60).map(|k| walk_1d(k, 0.25, 8.0)).sum();
        assert!((s - 1.0).abs() < 1e-14);
    }
}
