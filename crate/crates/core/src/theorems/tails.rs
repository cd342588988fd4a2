//! Running-maximum tails `P(sup_{s≤t} |X_s| > r) ≤ C e^{−cr} + C e^{−cr²/t}`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{mix64, EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::norm2;
use crate::stats::linear_fit;
use crate::walker::{simulate, stream_rng, SpaceTime};

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsConfig {
    pub times: Vec<f64>,
    pub n_samples: u64,
    pub mc_seed: u64,
    /// Radii run over `0..=reach·√t`.
    pub reach: f64,
    /// Number of largest times whose points fix `(C, c)`; the smaller
    /// times are predictions.
    pub calibrate: usize,
    /// Minimum exceedance count for a point to enter a fit.
    pub min_count: u64,
}

impl Default for TailsConfig {
    fn default() -> Self {
        TailsConfig {
            times: vec![4.0, 16.0, 64.0],
            n_samples: 100_000,
            mc_seed: 0,
            reach: 8.0,
            calibrate: 2,
            min_count: 20,
        }
    }
}

pub struct TailPoint {
    pub t: f64,
    pub r: f64,
    pub count: u64,
    pub n: u64,
}

impl TailPoint {
    pub fn p(&self) -> f64 {
        self.count as f64 / self.n as f64
    }

    pub fn se(&self) -> f64 {
        let p = self.p();
        (p * (1.0 - p) / self.n as f64).sqrt()
    }
}

fn shape(c: f64, r: f64, t: f64) -> f64 {
    (-c * r).exp() + (-c * r * r / t).exp()
}

/// Exceedance counts of the running maximum of `|X|` at integer radii.
pub fn exceedances(field: &RateField, t: f64, cfg: &TailsConfig, stream_base: u64) -> Vec<TailPoint> {
    let d = field.dim();
    let r_max = (cfg.reach * t.sqrt()).ceil() as usize;
    let mut counts = vec![0u64; r_max + 1];
    let start = SpaceTime::origin(d);
    let seed = mix64(cfg.mc_seed ^ mix64(field.params().seed) ^ stream_base);
    for k in 0..cfg.n_samples {
        let mut rng = stream_rng(seed, k);
        let mut top = 0i64;
        simulate(field, &start, t, &mut rng, |_, x| top = top.max(norm2(x)));
        for (r, c) in counts.iter_mut().enumerate() {
            if top > (r * r) as i64 {
                *c += 1;
            } else {
                break;
            }
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(r, count)| TailPoint { t, r: r as f64, count, n: cfg.n_samples })
        .collect()
}

pub fn verify_tails(env: &EnvParams, cfg: &TailsConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("z", 3.0)]).merged(overrides)?;
    if cfg.times.is_empty() || cfg.calibrate == 0 || cfg.calibrate > cfg.times.len() || cfg.n_samples == 0 {
        return Err(Error::Param("tails needs times, samples and 1..=len calibration times".into()));
    }
    let field = RateField::new(env.clone())?;
    let sets: Vec<Vec<TailPoint>> = cfg
        .times
        .iter()
        .enumerate()
        .map(|(j, &t)| exceedances(&field, t, cfg, j as u64))
        .collect();
    let mut order: Vec<usize> = (0..cfg.times.len()).collect();
    order.sort_by(|&a, &b| cfg.times[b].total_cmp(&cfg.times[a]));
    let calib: Vec<&TailPoint> = order[..cfg.calibrate]
        .iter()
        .flat_map(|&j| &sets[j])
        .filter(|p| p.count >= cfg.min_count && p.r > 0.0)
        .collect();

    // Gaussian regime √t ≤ r ≤ t: log P against r²/t
    let gauss: Vec<&&TailPoint> = calib.iter().filter(|p| p.r >= p.t.sqrt() && p.r <= p.t && p.p() < 0.5).collect();
    if gauss.len() < 3 {
        return Err(Error::Param("too few Gaussian-regime points; raise samples or times".into()));
    }
    let xs: Vec<f64> = gauss.iter().map(|p| p.r * p.r / p.t).collect();
    let ys: Vec<f64> = gauss.iter().map(|p| p.p().ln()).collect();
    let gfit = linear_fit(&xs, &ys);
    let mut c = -gfit.slope;
    // Poisson regime r ≥ 16 t, when observable
    let poisson: Vec<&&TailPoint> = calib.iter().filter(|p| p.r >= 16.0 * p.t).collect();
    let mut b = ReportBuilder::new("tails", env, cfg);
    b.seeds([env.seed]);
    if poisson.len() >= 3 {
        let xs: Vec<f64> = poisson.iter().map(|p| p.r).collect();
        let ys: Vec<f64> = poisson.iter().map(|p| p.p().ln()).collect();
        let pfit = linear_fit(&xs, &ys);
        b.metric("poisson_slope", pfit.slope);
        c = c.min(-pfit.slope);
    }
    let big_c = calib.iter().map(|p| p.p() / shape(c, p.r, p.t)).fold(0.0, f64::max);

    let z = th.get("z");
    let mut violations = 0usize;
    let mut worst_margin = f64::NEG_INFINITY;
    for p in sets.iter().flatten() {
        let env_val = big_c * shape(c, p.r, p.t);
        let margin = p.p() - z * p.se() - env_val;
        worst_margin = worst_margin.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    for (set, &t) in sets.iter().zip(&cfg.times) {
        b.metric(format!("p_r0_t{t}"), set[0].p());
    }
    b.metric("gauss_slope", gfit.slope)
        .metric("gauss_r2", gfit.r2)
        .metric("c", c)
        .metric("C", big_c)
        .metric("points", sets.iter().map(Vec::len).sum::<usize>() as f64)
        .metric("violations", violations as f64)
        .metric("worst_margin", worst_margin)
        .require("Gaussian slope negative", "gauss_slope", Cmp::Lt, 0.0)
        .require("envelope dominates every point", "violations", Cmp::Le, 0.0)
        .key("C");
    b.note(format!("(C, c) fitted on the {} largest time(s); smaller times are out-of-sample", cfg.calibrate));
    b.finish()
}
