//! Boundary-exit probabilities from killed solves near `∂B_R`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{in_ball, norm2, solve_caloric, BoundaryData, Cylinder, SiteSet, SolverOptions};
use crate::stats::linear_fit;

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitConfig {
    pub radius: f64,
    pub ensemble: usize,
    /// Inner radius fraction of the annulus for the lower bound.
    pub beta: f64,
    /// Inner radius fraction of the annulus for the upper bound.
    pub theta: f64,
    /// Radius of the boundary balls `B_r(y)`, `y ∈ ∂B_R`.
    pub r: f64,
    /// Boundary points `y` (spread over the first coordinate plane).
    pub directions: usize,
    /// Probes in unit distance shells up to `max_dist` from the outer boundary.
    pub max_dist: usize,
    pub courant: f64,
}

impl Default for ExitConfig {
    fn default() -> Self {
        ExitConfig {
            radius: 32.0,
            ensemble: 10,
            beta: 0.75,
            theta: 0.5,
            r: 8.0,
            directions: 8,
            max_dist: 6,
            courant: 1.0,
        }
    }
}

fn boxed(d: usize, reach: f64) -> (Vec<i64>, Vec<i64>) {
    let m = reach.ceil() as i64;
    (vec![-m; d], vec![m; d])
}

/// `P(X hits B_{inner} before leaving B_R, within the horizon)` with
/// `terminal` as the value of surviving to the horizon.
fn annulus_hit(field: &RateField, radius: f64, inner: f64, horizon: f64, terminal: f64, opts: &SolverOptions) -> Result<(Arc<SiteSet>, Vec<f64>)> {
    let d = field.dim();
    let origin = vec![0; d];
    let (lo, hi) = boxed(d, radius);
    let sites = Arc::new(SiteSet::region(&lo, &hi, |x| in_ball(x, &origin, radius) && !in_ball(x, &origin, inner))?);
    let cyl = Cylinder { sites: sites.clone(), t0: 0.0, t1: horizon };
    let lateral: Vec<f64> = (0..sites.boundary_len())
        .map(|b| if in_ball(sites.boundary_site(b), &origin, inner) { 1.0 } else { 0.0 })
        .collect();
    let data = BoundaryData {
        terminal: vec![terminal; sites.len()],
        edges: vec![0.0, horizon],
        lateral: vec![lateral],
    };
    let sol = solve_caloric(field, &cyl, &data, &[0.0], opts)?;
    let u = sol.values.last().cloned().unwrap_or_default();
    Ok((sites, u))
}

/// Sites of `B_R` within `max_dist` of the exterior boundary, grouped in
/// unit shells of Euclidean distance to that boundary. Averaging over
/// whole shells smooths out the staircase of the lattice sphere.
pub(crate) fn distance_shells(d: usize, radius: f64, max_dist: usize) -> Result<Vec<(f64, Vec<Vec<i64>>)>> {
    let ball = SiteSet::ball(d, radius)?;
    let outside: Vec<&[i64]> = (0..ball.boundary_len()).map(|b| ball.boundary_site(b)).collect();
    let mut shells: Vec<(f64, Vec<Vec<i64>>)> = (0..max_dist).map(|_| (0.0, Vec::new())).collect();
    for x in ball.sites() {
        let dist = outside
            .iter()
            .map(|b| b.iter().zip(x).map(|(p, q)| ((p - q) * (p - q)) as f64).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let k = (dist - 0.5).floor();
        if k >= 0.0 && (k as usize) < max_dist {
            let s = &mut shells[k as usize];
            s.0 += dist;
            s.1.push(x.to_vec());
        }
    }
    Ok(shells
        .into_iter()
        .filter(|s| !s.1.is_empty())
        .map(|(total, pts)| (total / pts.len() as f64, pts))
        .collect())
}

/// Log-log slope of the shell means of `u` against the shell distance.
pub(crate) fn dist_slope(sites: &SiteSet, u: &[f64], shells: &[(f64, Vec<Vec<i64>>)], radius: f64) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (dist, pts) in shells {
        let mut mean = 0.0;
        for y in pts {
            mean += u[sites.require(y)?] / pts.len() as f64;
        }
        if !(mean > 0.0) {
            return Err(Error::Param("exit probability vanished at a probe".into()));
        }
        xs.push((dist / radius).ln());
        ys.push(mean.ln());
    }
    if xs.len() < 2 {
        return Err(Error::Param("fewer than two distance shells".into()));
    }
    Ok(linear_fit(&xs, &ys).slope)
}

/// Boundary points of `B_R` closest to evenly spread directions in the
/// first coordinate plane.
fn boundary_points(d: usize, radius: f64, count: usize) -> Result<Vec<Vec<i64>>> {
    let ball = SiteSet::ball(d, radius)?;
    let mut out: Vec<Vec<i64>> = Vec::new();
    for j in 0..count {
        let a = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
        let mut dir = vec![0.0; d];
        dir[0] = a.cos();
        if d > 1 {
            dir[1] = a.sin();
        }
        let best = (0..ball.boundary_len())
            .map(|b| ball.boundary_site(b))
            .max_by(|p, q| {
                let score = |x: &[i64]| x.iter().zip(&dir).map(|(c, v)| *c as f64 * v).sum::<f64>() / (norm2(x) as f64).sqrt();
                score(p).total_cmp(&score(q))
            })
            .unwrap()
            .to_vec();
        if !out.contains(&best) {
            out.push(best);
        }
    }
    Ok(out)
}

/// `min_x P^{x,0}(leave B_r(y) ∩ B_R through ∂B_R before 4r²)` over
/// `x ∈ B_{r/2}(y) ∩ B_R`.
fn boundary_ball_exit(field: &RateField, radius: f64, y: &[i64], r: f64, opts: &SolverOptions) -> Result<f64> {
    let d = field.dim();
    let origin = vec![0; d];
    let lo: Vec<i64> = y.iter().map(|c| c - r.ceil() as i64).collect();
    let hi: Vec<i64> = y.iter().map(|c| c + r.ceil() as i64).collect();
    let sites = Arc::new(SiteSet::region(&lo, &hi, |x| in_ball(x, &origin, radius) && in_ball(x, y, r))?);
    let horizon = 4.0 * r * r;
    let cyl = Cylinder { sites: sites.clone(), t0: 0.0, t1: horizon };
    let lateral: Vec<f64> = (0..sites.boundary_len())
        .map(|b| if in_ball(sites.boundary_site(b), &origin, radius) { 0.0 } else { 1.0 })
        .collect();
    let data = BoundaryData {
        terminal: vec![0.0; sites.len()],
        edges: vec![0.0, horizon],
        lateral: vec![lateral],
    };
    let sol = solve_caloric(field, &cyl, &data, &[0.0], opts)?;
    let u = sol.values.last().unwrap();
    Ok(sites
        .sites()
        .zip(u)
        .filter(|(x, _)| in_ball(x, y, r / 2.0))
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min))
}

pub fn verify_exit(env: &EnvParams, cfg: &ExitConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("slope_low", 0.85), ("slope_high", 1.15), ("theta", 0.0)]).merged(overrides)?;
    if !(0.0 < cfg.beta && cfg.beta < 1.0 && 0.0 < cfg.theta && cfg.theta < 1.0) {
        return Err(Error::Param("beta and theta must lie in (0, 1)".into()));
    }
    if cfg.ensemble == 0 || cfg.max_dist < 2 || (cfg.max_dist as f64) >= (1.0 - cfg.beta.max(cfg.theta)) * cfg.radius {
        return Err(Error::Param("probes must fit inside both annuli".into()));
    }
    let opts = SolverOptions::with_courant(cfg.courant);
    let envs = env.ensemble(cfg.ensemble);
    let r = cfg.radius;
    let probes = distance_shells(env.d, r, cfg.max_dist)?;
    let ys = boundary_points(env.d, r, cfg.directions)?;
    let mut b = ReportBuilder::new("exit", env, cfg);
    b.seeds(envs.iter().map(|e| e.seed));
    let (mut lo_slope, mut hi_slope) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut theta_fit = f64::INFINITY;
    let mut inner_adjacent = f64::INFINITY;
    for e in &envs {
        let field = RateField::new(e.clone())?;
        // lower bound: exit to the inner ball of the β-annulus
        let (sites, u) = annulus_hit(&field, r, cfg.beta * r, r * r, 0.0, &opts)?;
        let s_low = dist_slope(&sites, &u, &probes, r)?;
        let mut x = vec![0; env.d];
        x[0] = (cfg.beta * r).floor() as i64 + 1;
        inner_adjacent = inner_adjacent.min(u[sites.require(&x)?]);
        // upper bound: reach the θ-ball or survive to 2R²
        let (sites, u) = annulus_hit(&field, r, cfg.theta * r, 2.0 * r * r, 1.0, &opts)?;
        let s_up = dist_slope(&sites, &u, &probes, r)?;
        b.metric(format!("slope_lower_seed{}", e.seed), s_low)
            .metric(format!("slope_upper_seed{}", e.seed), s_up);
        lo_slope = lo_slope.min(s_low.min(s_up));
        hi_slope = hi_slope.max(s_low.max(s_up));
        let mut th_env = f64::INFINITY;
        for y in &ys {
            th_env = th_env.min(boundary_ball_exit(&field, r, y, cfg.r, &opts)?);
        }
        b.metric(format!("theta_seed{}", e.seed), th_env);
        theta_fit = theta_fit.min(th_env);
    }
    b.metric("slope_min", lo_slope)
        .metric("slope_max", hi_slope)
        .metric("theta_fit", theta_fit)
        .metric("inner_adjacent", inner_adjacent)
        .require("distance-linear from below", "slope_min", Cmp::Ge, th.get("slope_low"))
        .require("distance-linear from above", "slope_max", Cmp::Le, th.get("slope_high"))
        .require("uniform boundary exit", "theta_fit", Cmp::Gt, th.get("theta"))
        .key("theta_fit");
    b.finish()
}
