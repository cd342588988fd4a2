//! Volume doubling of `ρ` and of the hitting distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::density::{compute_rho_at, rho_ball};
use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{in_ball, solve_caloric, torus, BoundaryData, Cylinder, SolverOptions};

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublingConfig {
    pub radii: Vec<f64>,
    /// Torus side for the density.
    pub side: usize,
    pub burn_in_factor: f64,
    /// Starting points `|y| ≤ k √s` for the hitting ratio at `s = r²`.
    pub k: f64,
    /// Spacing of the starting grid in units of `r`.
    pub grid: f64,
    /// Torus side for the hitting solves, in units of `r`.
    pub hitting_side: f64,
    pub courant: f64,
}

impl Default for DoublingConfig {
    fn default() -> Self {
        DoublingConfig {
            radii: vec![4.0, 8.0, 16.0, 32.0],
            side: 160,
            burn_in_factor: 0.25,
            k: 2.0,
            grid: 0.5,
            hitting_side: 8.0,
            courant: 1.0,
        }
    }
}

fn grid_points(d: usize, step: i64, reach: f64) -> Vec<Vec<i64>> {
    let m = (reach / step as f64).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-m; d];
    loop {
        let y: Vec<i64> = idx.iter().map(|i| i * step).collect();
        if in_ball(&y, &vec![0; d], reach) {
            out.push(y);
        }
        let mut a = 0;
        loop {
            if a == d {
                return out;
            }
            idx[a] += 1;
            if idx[a] <= m {
                break;
            }
            idx[a] = -m;
            a += 1;
        }
    }
}

/// `max_y P^{y,0}(X_s ∈ B_{2r}) / P^{y,0}(X_s ∈ B_r)` and the smallest
/// ratio seen, at `s = r²`.
pub fn hitting_ratio(field: &RateField, cfg: &DoublingConfig, r: f64, opts: &SolverOptions) -> Result<(f64, f64)> {
    let d = field.dim();
    let side = ((cfg.hitting_side * r).ceil() as usize).max(8);
    let sites = torus(d, side)?;
    let s = r * r;
    let cyl = Cylinder { sites: sites.clone(), t0: 0.0, t1: s };
    let origin = vec![0; d];
    let mut values = Vec::new();
    for radius in [r, 2.0 * r] {
        let f: Vec<f64> = sites.sites().map(|x| if in_ball(x, &origin, radius) { 1.0 } else { 0.0 }).collect();
        let sol = solve_caloric(field, &cyl, &BoundaryData::terminal(&cyl, f), &[0.0], opts)?;
        values.push(sol.values.last().cloned().unwrap_or_default());
    }
    let step = ((cfg.grid * r).round() as i64).max(1);
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for y in grid_points(d, step, cfg.k * s.sqrt()) {
        let i = sites.require(&y)?;
        let (small, big) = (values[0][i], values[1][i]);
        if !(small > 0.0) {
            return Err(Error::DegenerateDensity { value: small, context: format!("hitting probability from {y:?}") });
        }
        hi = hi.max(big / small);
        lo = lo.min(big / small);
    }
    Ok((hi, lo))
}

pub fn verify_doubling(env: &EnvParams, cfg: &DoublingConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("spread", 2.0)]).merged(overrides)?;
    if cfg.radii.is_empty() || cfg.radii.iter().any(|&r| r < 0.5) {
        return Err(Error::Param("doubling radii must be at least 1/2".into()));
    }
    let field = RateField::new(env.clone())?;
    let d = field.dim();
    let opts = SolverOptions::with_courant(cfg.courant);
    let mut times: Vec<f64> = cfg.radii.iter().flat_map(|r| [-r * r, 0.0, r * r]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let sites = torus(d, cfg.side)?;
    let burn = cfg.burn_in_factor * (cfg.side * cfg.side) as f64;
    let rho = compute_rho_at(&field, &sites, &times, burn, &opts)?;
    let origin = vec![0; d];

    let mut b = ReportBuilder::new("doubling", env, cfg);
    b.seeds([env.seed]);
    let (mut rho_ratios, mut hit_ratios) = (Vec::new(), Vec::new());
    let mut hit_min = f64::INFINITY;
    for &r in &cfg.radii {
        let base = rho_ball(&rho, &origin, r, 0.0)?;
        let mut worst: f64 = 0.0;
        for t in [-r * r, 0.0, r * r] {
            let v = rho_ball(&rho, &origin, 2.0 * r, t)? / base;
            b.metric(format!("rho_ratio_r{r}_t{t}"), v);
            worst = worst.max(v);
        }
        b.metric(format!("rho_ratio_r{r}"), worst);
        rho_ratios.push(worst);
        let (hi, lo) = hitting_ratio(&field, cfg, r, &opts)?;
        b.metric(format!("hitting_ratio_r{r}"), hi);
        hit_ratios.push(hi);
        hit_min = hit_min.min(lo);
    }
    let spread = |v: &[f64]| v.iter().copied().fold(0.0, f64::max) / v.iter().copied().fold(f64::INFINITY, f64::min);
    b.metric("rho_spread", spread(&rho_ratios))
        .metric("hitting_spread", spread(&hit_ratios))
        .metric("hitting_min", hit_min)
        .require("rho ratio scale-free", "rho_spread", Cmp::Le, th.get("spread"))
        .require("hitting ratio scale-free", "hitting_spread", Cmp::Le, th.get("spread"))
        .require("hitting ratio at least one", "hitting_min", Cmp::Ge, 1.0)
        .key("rho_spread");
    b.note("hitting probabilities are computed on a torus whose side is a fixed multiple of r");
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_ball_ratio_is_a_lattice_count() {
        let f = RateField::new(EnvParams::homogeneous(2, 0.25)).unwrap();
        let rho = compute_rho_at(&f, &torus(2, 32).unwrap(), &[0.0], 0.0, &SolverOptions::default()).unwrap();
        let v = rho_ball(&rho, &[0, 0], 8.0, 0.0).unwrap() / rho_ball(&rho, &[0, 0], 4.0, 0.0).unwrap();
        assert_eq!(v, 197.0 / 49.0);
    }
}
