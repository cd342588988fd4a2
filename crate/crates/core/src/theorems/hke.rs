//! Heat-kernel bounds for `q = p/ρ` from the origin.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{heat_kernel_run, norm2, torus, HeatRun, SolverOptions};
use crate::stats::{linear_fit, linear_fit2};
use crate::walker::SpaceTime;

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HkeConfig {
    pub side: usize,
    pub times: Vec<f64>,
    /// Probe distances in units of `√t`, along an axis and a diagonal.
    pub fractions: Vec<f64>,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for HkeConfig {
    fn default() -> Self {
        HkeConfig {
            side: 128,
            times: vec![20.0, 40.0, 80.0, 120.0, 160.0, 200.0],
            fractions: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

/// Probe points at distance about `f√t` along the first axis and the
/// diagonal of the first coordinate plane.
pub(crate) fn probe_points(d: usize, t: f64, fractions: &[f64]) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = Vec::new();
    for &f in fractions {
        let r = f * t.sqrt();
        let mut axis = vec![0; d];
        axis[0] = r.round() as i64;
        let mut diag = vec![0; d];
        if d >= 2 {
            let c = (r / std::f64::consts::SQRT_2).round() as i64;
            diag[0] = c;
            diag[1] = c;
        }
        for p in [axis, diag] {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

pub struct HkeProbe {
    pub x: Vec<i64>,
    pub t: f64,
    pub q: f64,
}

pub fn hke_probes(field: &RateField, cfg: &HkeConfig) -> Result<(Vec<HkeProbe>, HeatRun)> {
    let d = field.dim();
    let sites = torus(d, cfg.side)?;
    let burn = cfg.burn_in_factor * (cfg.side * cfg.side) as f64;
    let run = heat_kernel_run(field, &sites, &SpaceTime::origin(d), &cfg.times, burn, &SolverOptions::with_courant(cfg.courant))?;
    let mut out = Vec::new();
    for (slice, &t) in run.slices.iter().zip(&cfg.times) {
        for x in probe_points(d, t, &cfg.fractions) {
            let q = slice.q(&x)?;
            out.push(HkeProbe { x, t, q });
        }
    }
    Ok((out, run))
}

pub fn verify_hke(env: &EnvParams, cfg: &HkeConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("band_ratio", 50.0), ("slope", 0.0), ("r2", 0.9)]).merged(overrides)?;
    if cfg.times.is_empty() || cfg.times[0] <= 0.0 {
        return Err(Error::Param("hke times must be positive".into()));
    }
    let field = RateField::new(env.clone())?;
    let d = env.d as f64;
    let (probes, _) = hke_probes(&field, cfg)?;

    let mut band = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut u, mut w, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for p in &probes {
        let r2 = norm2(&p.x) as f64;
        let scaled = p.q * p.t.powf(d / 2.0);
        if !(scaled > 0.0) {
            return Err(Error::DegenerateDensity { value: p.q, context: format!("q vanishes at {:?}, t={}", p.x, p.t) });
        }
        if r2 <= p.t {
            band = (band.0.min(scaled), band.1.max(scaled));
        }
        u.push(r2 / p.t);
        w.push(r2.sqrt());
        y.push(scaled.ln());
    }
    let fit = linear_fit(&u, &y);
    let resid: Vec<f64> = u.iter().zip(&y).map(|(a, b)| b - (fit.intercept + fit.slope * a)).collect();
    let lo = resid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = resid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // upper form e^{−c|x|²/t − c'|x|}, shifted to hold on every probe
    let [a0, a1, a2] = linear_fit2(&u, &w, &y);
    let up_shift = u
        .iter()
        .zip(&w)
        .zip(&y)
        .map(|((p, q), v)| v - (a0 + a1 * p + a2 * q))
        .fold(f64::NEG_INFINITY, f64::max);

    let mut b = ReportBuilder::new("hke", env, cfg);
    b.seeds([env.seed])
        .metric("probes", probes.len() as f64)
        .metric("band_low", band.0)
        .metric("band_high", band.1)
        .metric("band_ratio", band.1 / band.0)
        .metric("slope", fit.slope)
        .metric("r2", fit.r2)
        .metric("lower_c", (fit.intercept + lo).exp())
        .metric("lower_exponent", -fit.slope)
        .metric("upper_c", (fit.intercept + hi).exp())
        .metric("upper_exponent", -fit.slope)
        .metric("upper2_c", (a0 + up_shift).exp())
        .metric("upper2_gauss", -a1)
        .metric("upper2_linear", -a2)
        .require("on-diagonal band", "band_ratio", Cmp::Lt, th.get("band_ratio"))
        .require("Gaussian decay", "slope", Cmp::Lt, th.get("slope"))
        .require("regression fit", "r2", Cmp::Gt, th.get("r2"))
        .key("band_ratio");
    b.note("envelopes are the regression line shifted by the extreme residuals, so they hold on every probe");
    b.finish()
}
