//! Green-function asymptotics from time integrals of `q = p/ρ`.
//!
//! d = 2: `(1/log n) ∫ [q(0; 0, t) − q(0; ⌊nx⌋, t)] dt → 1/(π√det Σ)`.
//! d ≥ 3: `n^{d−2} ∫ q(0; ⌊nx⌋, t) dt → g^Σ(0, x)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::gauss;
use crate::kernel::{heat_integrals, torus, SolverOptions};
use crate::stats::linear_fit;
use crate::walker::SpaceTime;

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

fn lattice_point(x: &[f64], n: usize) -> Vec<i64> {
    x.iter().map(|c| (c * n as f64).floor() as i64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Green2dConfig {
    /// `Σ_i = sigma_factor · E_Q[a_i]`, resolved by the clt check.
    pub sigma_factor: Option<f64>,
    pub x: Vec<f64>,
    pub n: Vec<usize>,
    /// Integration horizon `T = horizon_factor · n²`.
    pub horizon_factor: f64,
    /// Torus side `max(min_side, side_factor · |⌊nx⌋|_∞)`.
    pub side_factor: usize,
    pub min_side: usize,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for Green2dConfig {
    fn default() -> Self {
        Green2dConfig {
            sigma_factor: None,
            x: vec![0.25, 0.0],
            n: vec![8, 16, 32],
            horizon_factor: 20.0,
            side_factor: 16,
            min_side: 32,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

pub struct Green2dLevel {
    pub n: usize,
    pub a: f64,
    pub a_reflected: f64,
    pub target: f64,
    /// `T · |q(0,T) − q(y,T)|`, a bound on the neglected tail when the
    /// integrand decays at least like `1/t`.
    pub tail: f64,
}

pub fn green2d_level(field: &RateField, cfg: &Green2dConfig, factor: f64, n: usize) -> Result<Green2dLevel> {
    let y = lattice_point(&cfg.x, n);
    let reach = y.iter().map(|c| c.unsigned_abs() as usize).max().unwrap_or(0);
    let side = cfg.min_side.max(cfg.side_factor * reach);
    let sites = torus(2, side)?;
    let t_end = cfg.horizon_factor * (n * n) as f64;
    let neg: Vec<i64> = y.iter().map(|c| -c).collect();
    let burn = cfg.burn_in_factor * (side * side) as f64;
    let h = heat_integrals(
        field,
        &sites,
        &SpaceTime::origin(2),
        &[vec![0, 0], y, neg],
        t_end,
        &[t_end],
        burn,
        &SolverOptions::with_courant(cfg.courant),
    )?;
    let det: f64 = h.q_rates.iter().map(|a| factor * a).product();
    Ok(Green2dLevel {
        n,
        a: h.integrals[0] - h.integrals[1],
        a_reflected: h.integrals[0] - h.integrals[2],
        target: 1.0 / (PI * det.sqrt()),
        tail: t_end * (h.samples[0][0] - h.samples[1][0]).abs(),
    })
}

pub fn verify_green2d(env: &EnvParams, cfg: &Green2dConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("final_error", 0.25)]).merged(overrides)?;
    let factor = cfg.sigma_factor.ok_or(Error::SigmaUnresolved)?;
    if env.d != 2 || cfg.x.len() != 2 {
        return Err(Error::Param("green2d needs d = 2".into()));
    }
    if cfg.n.len() < 2 || cfg.n.windows(2).any(|w| w[1] <= w[0]) || cfg.n[0] < 2 {
        return Err(Error::Param("n list must increase from at least 2".into()));
    }
    let field = RateField::new(env.clone())?;
    let mut b = ReportBuilder::new("green2d", env, cfg);
    b.seeds([env.seed]);
    let mut errs = Vec::new();
    let mut asym: f64 = 0.0;
    for &n in &cfg.n {
        let lv = green2d_level(&field, cfg, factor, n)?;
        let ratio = lv.a / (n as f64).ln();
        let err = (ratio - lv.target).abs() / lv.target;
        b.metric(format!("a_n{n}"), lv.a)
            .metric(format!("ratio_n{n}"), ratio)
            .metric(format!("target_n{n}"), lv.target)
            .metric(format!("error_n{n}"), err)
            .metric(format!("tail_n{n}"), lv.tail);
        asym = asym.max((lv.a - lv.a_reflected).abs() / lv.a.abs());
        errs.push(err);
    }
    let first = errs[0];
    let last = errs[errs.len() - 1];
    b.metric("final_error", last)
        .metric("first_error", first)
        .metric("reflection_asymmetry", asym)
        .metric("final_minus_first", last - first)
        .require("final relative error", "final_error", Cmp::Lt, th.get("final_error"))
        .require("final error below first", "final_minus_first", Cmp::Lt, 0.0)
        .flag("monotone approach", errs.windows(2).all(|w| w[1] < w[0]))
        .key("final_error");
    b.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Green3dConfig {
    pub sigma_factor: Option<f64>,
    pub x: Vec<f64>,
    pub n: Vec<usize>,
    /// Horizon `T = horizon_factor · n²`; the rest is a fitted tail.
    pub horizon_factor: f64,
    pub side: usize,
    /// Samples in `[T/4, T]` for the tail fit.
    pub tail_points: usize,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for Green3dConfig {
    fn default() -> Self {
        Green3dConfig {
            sigma_factor: None,
            x: vec![0.5, 0.0, 0.0],
            n: vec![4, 8],
            horizon_factor: 2.0,
            side: 64,
            tail_points: 16,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

/// `∫_T^∞ c t^{−d/2} e^{−b/t} dt` for `d = 3`.
pub fn tail_integral(c: f64, b: f64, t: f64) -> f64 {
    if b <= 0.0 {
        return 2.0 * c / t.sqrt();
    }
    c * (PI / b).sqrt() * erf((b / t).sqrt())
}

pub struct Green3dLevel {
    pub n: usize,
    pub estimate: f64,
    pub target: f64,
    pub tail_fraction: f64,
    pub tail_exponent: f64,
}

pub fn green3d_level(field: &RateField, cfg: &Green3dConfig, factor: f64, n: usize) -> Result<Green3dLevel> {
    let d = field.dim();
    let y = lattice_point(&cfg.x, n);
    let sites = torus(d, cfg.side)?;
    let t_end = cfg.horizon_factor * (n * n) as f64;
    let k = cfg.tail_points.max(3);
    let record: Vec<f64> = (0..k).map(|j| t_end * (0.25 + 0.75 * j as f64 / (k - 1) as f64)).collect();
    let burn = cfg.burn_in_factor * (cfg.side * cfg.side) as f64;
    let h = heat_integrals(field, &sites, &SpaceTime::origin(d), &[y], t_end, &record, burn, &SolverOptions::with_courant(cfg.courant))?;
    let q = &h.samples[0];
    if q.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateDensity { value: 0.0, context: "green3d integrand vanishes".into() });
    }
    // log q + (d/2) log t = log c − b/t
    let inv: Vec<f64> = record.iter().map(|t| 1.0 / t).collect();
    let ys: Vec<f64> = q.iter().zip(&record).map(|(v, t)| v.ln() + 0.5 * d as f64 * t.ln()).collect();
    let fit = linear_fit(&inv, &ys);
    let tail = tail_integral(fit.intercept.exp(), -fit.slope, t_end);
    let logs: Vec<f64> = record.iter().map(|t| t.ln()).collect();
    let logq: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let sigma: Vec<f64> = h.q_rates.iter().map(|a| factor * a).collect();
    let total = h.integrals[0] + tail;
    Ok(Green3dLevel {
        n,
        estimate: (n as f64).powi(d as i32 - 2) * total,
        target: gauss::green(&cfg.x, &sigma),
        tail_fraction: tail / total,
        tail_exponent: linear_fit(&logs, &logq).slope,
    })
}

pub fn verify_green3d(env: &EnvParams, cfg: &Green3dConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("final_error", 0.3)]).merged(overrides)?;
    let factor = cfg.sigma_factor.ok_or(Error::SigmaUnresolved)?;
    if env.d < 3 || cfg.x.len() != env.d {
        return Err(Error::Param("green3d needs d >= 3 and x of matching dimension".into()));
    }
    if cfg.n.is_empty() || cfg.n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Param("n list must increase".into()));
    }
    let field = RateField::new(env.clone())?;
    let mut b = ReportBuilder::new("green3d", env, cfg);
    b.seeds([env.seed]);
    let mut last = 0.0;
    for &n in &cfg.n {
        let lv = green3d_level(&field, cfg, factor, n)?;
        last = (lv.estimate - lv.target).abs() / lv.target;
        b.metric(format!("estimate_n{n}"), lv.estimate)
            .metric(format!("target_n{n}"), lv.target)
            .metric(format!("error_n{n}"), last)
            .metric(format!("tail_fraction_n{n}"), lv.tail_fraction)
            .metric(format!("tail_exponent_n{n}"), lv.tail_exponent);
    }
    b.metric("final_error", last)
        .require("final relative error", "final_error", Cmp::Lt, th.get("final_error"))
        .key("final_error");
    b.note("tail beyond the horizon fitted as c t^{-3/2} exp(-b/t) on the last three quarters of the window");
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_integral_matches_quadrature() {
        let (c, b, t) = (0.7, 3.0, 20.0);
        // substitute t = T/u² to get a finite interval
        let m = 200_000;
        let mut acc = 0.0;
        for k in 0..m {
            let u = (k as f64 + 0.5) / m as f64;
            let s = t / (u * u);
            acc += c * s.powf(-1.5) * (-b / s).exp() * 2.0 * t / (u * u * u) / m as f64;
        }
        assert!((acc - tail_integral(c, b, t)).abs() < 1e-8 * acc);
    }
}
