//! Oscillation decay of adjoint solutions over shrinking cylinders.
//!
//! The test solution is `v(ŷ) = p_{2R}((x0, 0); ŷ) / ρ(ŷ)` with the source
//! `x0 = −R e_1`, observed near `(0, T)` with `T = 2R²`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{ball, in_ball, killed_forward_on, SolverOptions};
use crate::stats::linear_fit;
use crate::walker::SpaceTime;

use super::harnack::LocalRho;
use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoelderConfig {
    pub radii: Vec<f64>,
    /// Sample times per cylinder `(T − r², T]`.
    pub times_per_scale: usize,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for HoelderConfig {
    fn default() -> Self {
        HoelderConfig {
            radii: vec![8.0, 16.0],
            times_per_scale: 4,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

pub struct Oscillation {
    pub scales: Vec<f64>,
    /// `osc_{B_r × (T−r², T]} v / sup_{B_R × (T−R², T]} v` per scale.
    pub relative: Vec<f64>,
}

fn cylinder_times(t: f64, r: f64, m: usize) -> Vec<f64> {
    (0..m).map(|k| t - r * r * k as f64 / m as f64).collect()
}

pub fn oscillations(field: &RateField, radius: f64, cfg: &HoelderConfig, opts: &SolverOptions) -> Result<Oscillation> {
    let d = field.dim();
    let scales: Vec<f64> = (0..).map(|j| 2f64.powi(j)).take_while(|&r| r <= radius / 2.0).collect();
    if scales.len() < 2 {
        return Err(Error::Param(format!("radius {radius} leaves fewer than two dyadic scales")));
    }
    let t_top = 2.0 * radius * radius;
    let m = cfg.times_per_scale.max(1);
    let mut times: Vec<f64> = scales.iter().chain(std::iter::once(&radius)).flat_map(|&r| cylinder_times(t_top, r, m)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let sites = ball(d, 2.0 * radius)?;
    let side = 4 * radius.ceil() as usize + 8;
    let rho = LocalRho::compute(
        field,
        &sites,
        side,
        0.0,
        t_top,
        field.delta_t(),
        &times,
        cfg.burn_in_factor * (side * side) as f64,
        opts,
    )?;
    let mut source = vec![0; d];
    source[0] = -(radius.round() as i64);
    let slices = killed_forward_on(field, &sites, &SpaceTime::new(source, 0.0), &times, opts)?;
    let origin = vec![0; d];
    let range = |r: f64| -> Result<(f64, f64)> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in cylinder_times(t_top, r, m) {
            let k = times.iter().position(|&u| (u - s).abs() < 1e-9).unwrap();
            let dens = rho.slice(times[k])?;
            for (i, x) in sites.sites().enumerate() {
                if in_ball(x, &origin, r) {
                    let v = slices[k].slice.values[i] / dens[i];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        Ok((lo, hi))
    };
    let sup = range(radius)?.1;
    if !(sup > 0.0) {
        return Err(Error::DegenerateDensity { value: sup, context: "test solution vanishes near the top".into() });
    }
    let relative = scales.iter().map(|&r| range(r).map(|(lo, hi)| (hi - lo) / sup)).collect::<Result<_>>()?;
    Ok(Oscillation { scales, relative })
}

pub fn verify_hoelder(env: &EnvParams, cfg: &HoelderConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("gamma", 0.0), ("r2", 0.9)]).merged(overrides)?;
    if cfg.radii.is_empty() {
        return Err(Error::Param("hoelder needs radii".into()));
    }
    let field = RateField::new(env.clone())?;
    let opts = SolverOptions::with_courant(cfg.courant);
    let mut b = ReportBuilder::new("hoelder", env, cfg);
    b.seeds([env.seed]);
    let (mut gamma, mut r2) = (f64::INFINITY, f64::INFINITY);
    let mut monotone = true;
    for &radius in &cfg.radii {
        let osc = oscillations(&field, radius, cfg, &opts)?;
        for (r, v) in osc.scales.iter().zip(&osc.relative) {
            b.metric(format!("osc_R{radius}_r{r}"), *v);
        }
        monotone &= osc.relative.windows(2).all(|w| w[0] <= w[1]);
        if osc.relative.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Param("oscillation vanished; cannot fit an exponent".into()));
        }
        let xs: Vec<f64> = osc.scales.iter().map(|r| (r / radius).ln()).collect();
        let ys: Vec<f64> = osc.relative.iter().map(|v| v.ln()).collect();
        let fit = linear_fit(&xs, &ys);
        b.metric(format!("gamma_R{radius}"), fit.slope)
            .metric(format!("r2_R{radius}"), fit.r2);
        gamma = gamma.min(fit.slope);
        r2 = r2.min(fit.r2);
    }
    b.metric("gamma", gamma)
        .metric("r2", r2)
        .require("positive exponent", "gamma", Cmp::Gt, th.get("gamma"))
        .require("log-log fit", "r2", Cmp::Gt, th.get("r2"))
        .flag("oscillation shrinks with the cylinder", monotone)
        .key("gamma");
    b.finish()
}
