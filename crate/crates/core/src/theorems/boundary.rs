//! Harnack-type estimates for caloric functions vanishing on part of the
//! lateral boundary: interior elliptic-type Harnack, Carleson, and the
//! boundary comparison with `dist(x, ∂B_{4R})/R`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, Point, RateField};
use crate::error::{Error, Result};
use crate::kernel::{in_ball, solve_caloric, BoundaryData, Cylinder, SiteSet, SolverOptions};
use crate::walker::SpaceTime;

use super::exit::{dist_slope, distance_shells};
use super::harnack::{forward_rows, harnack_ratio, linspace, probes, spread_points};
use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    pub radii: Vec<f64>,
    /// `δ` of the interior cylinder `B_{(1−δ)R} × [0, (1−δ²)R²)`.
    pub delta: f64,
    /// Probe times per window.
    pub times: usize,
    /// Lateral bins per `r²` (Carleson) or `R²` (boundary comparison).
    pub bins_per_r2: usize,
    /// Distances `1..=max_dist` from `∂B_{4R}` for the comparison probes
    /// and the unit distance shells of the slope.
    pub max_dist: usize,
    /// Reference points on `∂B_{3R}`.
    pub directions: usize,
    pub courant: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            radii: vec![8.0, 16.0],
            delta: 0.25,
            times: 4,
            bins_per_r2: 2,
            max_dist: 6,
            directions: 16,
            courant: 1.0,
        }
    }
}

/// Sites of `set` on a sub-grid of the given step, plus `extra`.
fn thinned(set: &SiteSet, step: i64, keep: impl Fn(&[i64]) -> bool, extra: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = set
        .sites()
        .filter(|x| keep(x) && x.iter().all(|c| c.rem_euclid(step) == 0))
        .map(|x| x.to_vec())
        .collect();
    for e in extra {
        if set.index_of(e).is_some() && !out.contains(e) {
            out.push(e.clone());
        }
    }
    out
}

/// Interior elliptic-type constant on `B_R × [0, R²)` with zero lateral data.
pub fn interior_constant(field: &RateField, radius: f64, delta: f64, m: usize, opts: &SolverOptions) -> Result<f64> {
    let d = field.dim();
    let sites = SiteSet::ball(d, radius)?;
    let r2 = radius * radius;
    let top = (1.0 - delta * delta) * r2;
    let times: Vec<f64> = (0..m).map(|k| top * k as f64 / m as f64).collect();
    let pr = probes(&spread_points(&vec![0; d], (1.0 - delta) * radius), &times);
    let rows = forward_rows(field, &sites, &pr, r2, &[], opts)?;
    Ok(harnack_ratio(&rows, &rows, None)?.constant)
}

/// Carleson constant with `0 ∈ ∂B_R(z)`, `z = (R+1) e_1` and `r = R/2`.
pub fn carleson_constant(field: &RateField, radius: f64, bins_per_r2: usize, m: usize, opts: &SolverOptions) -> Result<f64> {
    let d = field.dim();
    let r = radius / 2.0;
    let r2 = r * r;
    let mut z = vec![0; d];
    z[0] = radius as i64 + 1;
    let sites = SiteSet::ball_at(&z, radius)?;
    if sites.index_of(&vec![0; d]).is_some() {
        return Err(Error::Param("origin must lie outside B_R(z)".into()));
    }
    let origin = vec![0; d];
    let step = ((r / 4.0).floor() as i64).max(1);
    let mut near = vec![0; d];
    near[0] = 1;
    let sup_pts = thinned(&sites, step, |x| in_ball(x, &origin, r), &[near]);
    let zr: Vec<i64> = z.iter().map(|&c| (c as f64 * r / radius).round() as i64).collect();
    let inf_pts = thinned(&sites, step, |x| in_ball(x, &zr, r / 2.0), &[zr.clone()]);
    let sup_times: Vec<f64> = (0..m).map(|k| r2 * k as f64 / m as f64).collect();
    let mut all = probes(&sup_pts, &sup_times);
    let n_sup = all.len();
    all.extend(inf_pts.into_iter().map(|x| SpaceTime::new(x, -r2)));
    let bins = 5 * bins_per_r2;
    let edges = linspace(-r2, 4.0 * r2, bins);
    let rows = forward_rows(field, &sites, &all, 4.0 * r2, &edges, opts)?;
    let nb = sites.boundary_len();
    let mut mask = vec![true; sites.len()];
    for k in 1..edges.len() {
        let zero_data = edges[k - 1] >= -1e-9;
        mask.extend((0..nb).map(|b| !(zero_data && in_ball(sites.boundary_site(b), &origin, 2.0 * r))));
    }
    Ok(harnack_ratio(&rows[..n_sup], &rows[n_sup..], Some(&mask))?.constant)
}

pub struct Comparison {
    /// `min_g u_g(x,0) / (dist/R · max_y u_g(y, R²))` over probes.
    pub lower: f64,
    /// `max_g u_g(x,0) / (dist/R · min_y u_g(y, −R²))`, an upper bound for
    /// the cone.
    pub upper: f64,
    /// Log-log slope of `u(x,0)` against `dist` for inner data `≡ 1`.
    pub slope: f64,
}

/// Boundary comparison on `(B_{4R} \ B_{2R}) × (−2R², 2R²)` with zero data
/// on `∂B_{4R}`.
pub fn boundary_comparison(field: &RateField, radius: f64, cfg: &BoundaryConfig, opts: &SolverOptions) -> Result<Comparison> {
    let d = field.dim();
    let origin = vec![0; d];
    let outer = 4.0 * radius;
    let m = outer.ceil() as i64;
    let sites = SiteSet::region(&vec![-m; d], &vec![m; d], |x| in_ball(x, &origin, outer) && !in_ball(x, &origin, 2.0 * radius))?;
    let ball = SiteSet::ball(d, outer)?;
    let exterior: Vec<&[i64]> = (0..ball.boundary_len()).map(|b| ball.boundary_site(b)).collect();
    let top = outer.floor() as i64;
    let mut xs = Vec::new();
    let mut dists = Vec::new();
    for k in 0..cfg.max_dist as i64 {
        let mut x = vec![0; d];
        x[0] = top - k;
        let dist = exterior
            .iter()
            .map(|b| b.iter().zip(&x).map(|(p, q)| ((p - q) * (p - q)) as f64).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        xs.push(SpaceTime::new(x, 0.0));
        dists.push(dist);
    }
    // reference points just outside B_{3R}
    let ref_ball = SiteSet::ball(d, 3.0 * radius)?;
    let mut refs: Vec<Point> = Vec::new();
    for j in 0..cfg.directions {
        let a = 2.0 * std::f64::consts::PI * j as f64 / cfg.directions as f64;
        let dir = [a.cos(), a.sin()];
        let best = (0..ref_ball.boundary_len())
            .map(|b| ref_ball.boundary_site(b))
            .max_by(|p, q| {
                let score = |x: &[i64]| (x[0] as f64 * dir[0] + x.get(1).map_or(0.0, |&v| v as f64) * dir[1]) / ((x.iter().map(|c| c * c).sum::<i64>()) as f64).sqrt();
                score(p).total_cmp(&score(q))
            })
            .unwrap()
            .to_vec();
        if !refs.contains(&best) {
            refs.push(best);
        }
    }
    let r2 = radius * radius;
    let mut all = xs.clone();
    all.extend(refs.iter().map(|y| SpaceTime::new(y.clone(), r2)));
    all.extend(refs.iter().map(|y| SpaceTime::new(y.clone(), -r2)));
    let bins = 3 * cfg.bins_per_r2;
    let edges = linspace(-r2, 2.0 * r2, bins);
    let rows = forward_rows(field, &sites, &all, 2.0 * r2, &edges, opts)?;
    let n = sites.len();
    let nb = sites.boundary_len();
    let inner: Vec<bool> = (0..nb).map(|b| in_ball(sites.boundary_site(b), &origin, 2.0 * radius)).collect();
    let allowed: Vec<bool> = (0..n).map(|_| true).chain((1..edges.len()).flat_map(|_| inner.iter().copied())).collect();
    let (px, rest) = rows.split_at(xs.len());
    let (plus, minus) = rest.split_at(refs.len());

    let mut lower = f64::INFINITY;
    let mut upper: f64 = 0.0;
    for (row, &dist) in px.iter().zip(&dists) {
        let scale = dist / radius;
        for g in (0..row.len()).filter(|&g| allowed[g]) {
            let hi = plus.iter().map(|r| r[g]).fold(0.0, f64::max);
            if hi > 1e-250 {
                lower = lower.min(row[g] / (scale * hi));
            }
            if row[g] > 1e-250 {
                let lo = minus.iter().map(|r| r[g]).fold(f64::INFINITY, f64::min);
                if !(lo > 0.0) {
                    return Err(Error::DegenerateHarnack(format!("generator {g} vanishes on the reference points")));
                }
                upper = upper.max(row[g] / (scale * lo));
            }
        }
    }
    // distance profile of the solution with unit data on the inner
    // boundary and the terminal slice
    let sites = Arc::new(sites);
    let cyl = Cylinder { sites: sites.clone(), t0: 0.0, t1: 2.0 * r2 };
    let data = BoundaryData {
        terminal: vec![1.0; n],
        edges: vec![0.0, 2.0 * r2],
        lateral: vec![inner.iter().map(|&i| if i { 1.0 } else { 0.0 }).collect()],
    };
    let u = solve_caloric(field, &cyl, &data, &[0.0], opts)?.values.pop().unwrap_or_default();
    let shells = distance_shells(d, outer, cfg.max_dist)?;
    Ok(Comparison {
        lower,
        upper,
        slope: dist_slope(&sites, &u, &shells, radius)?,
    })
}

pub fn verify_boundary(env: &EnvParams, cfg: &BoundaryConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("scale_low", 0.5), ("scale_high", 2.0), ("slope_low", 0.8), ("slope_high", 1.2)]).merged(overrides)?;
    if cfg.radii.len() < 2 || !(0.0 < cfg.delta && cfg.delta <= 0.25) || cfg.max_dist < 2 || cfg.times == 0 {
        return Err(Error::Param("boundary needs two radii, 0 < δ ≤ 1/4, probes and times".into()));
    }
    if env.d < 2 {
        return Err(Error::Param("boundary checks need d >= 2".into()));
    }
    let field = RateField::new(env.clone())?;
    let opts = SolverOptions::with_courant(cfg.courant);
    let mut b = ReportBuilder::new("boundary", env, cfg);
    b.seeds([env.seed]);
    let (mut interior, mut carleson, mut lower, mut upper) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut s_lo, mut s_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &r in &cfg.radii {
        let c = interior_constant(&field, r, cfg.delta, cfg.times, &opts)?;
        let k = carleson_constant(&field, r, cfg.bins_per_r2, cfg.times, &opts)?;
        let cmp = boundary_comparison(&field, r, cfg, &opts)?;
        b.metric(format!("interior_R{r}"), c)
            .metric(format!("carleson_R{r}"), k)
            .metric(format!("lower_R{r}"), cmp.lower)
            .metric(format!("upper_R{r}"), cmp.upper)
            .metric(format!("slope_R{r}"), cmp.slope);
        interior.push(c);
        carleson.push(k);
        lower.push(cmp.lower);
        upper.push(cmp.upper);
        s_lo = s_lo.min(cmp.slope);
        s_hi = s_hi.max(cmp.slope);
    }
    let ratio = |v: &[f64]| v[v.len() - 1] / v[0];
    b.metric("interior_scale", ratio(&interior))
        .metric("carleson_scale", ratio(&carleson))
        .metric("lower_scale", ratio(&lower))
        .metric("upper_scale", ratio(&upper))
        .metric("slope_min", s_lo)
        .metric("slope_max", s_hi);
    for name in ["interior_scale", "carleson_scale", "lower_scale", "upper_scale"] {
        b.require(&format!("{name} low"), name, Cmp::Ge, th.get("scale_low"))
            .require(&format!("{name} high"), name, Cmp::Le, th.get("scale_high"));
    }
    b.require("distance slope low", "slope_min", Cmp::Ge, th.get("slope_low"))
        .require("distance slope high", "slope_max", Cmp::Le, th.get("slope_high"))
        .key("carleson_scale");
    b.note("the upper comparison constant is a bound over the cone from per-generator ratios; the lower one is exact");
    b.finish()
}
