//! Reconstruction of adjoint solutions from their values on the initial
//! slice and the lateral boundary of `B_R`:
//!
//! `v(ŷ) = Σ_x ρ(x,t0)/ρ(ŷ) p_R(x,t0; ŷ) v(x,t0)
//!        + ∫ Σ_{b ∈ ∂B_R, z ∼ b} ρ(b,t)/ρ(ŷ) a_t(b→z) p_R(z,t; ŷ) v(b,t) dt`.
//!
//! The time integral is a trapezoid rule on nodes aligned with the cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{ball, forward_times, solve_caloric, torus, BoundaryData, CaloricSolution, Cylinder, SiteSet, SolverOptions};
use crate::walker::SpaceTime;

use super::harnack::LocalRho;
use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepresentationConfig {
    pub radius: f64,
    pub side: usize,
    /// Time from the initial slice to `ŷ`.
    pub span: f64,
    /// Quadrature steps `Δ/k` for each `k`, increasing.
    pub grids: Vec<usize>,
    /// Source of the heat-kernel test solution, relative to the origin,
    /// started one time unit before the initial slice.
    pub source: Vec<i64>,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for RepresentationConfig {
    fn default() -> Self {
        RepresentationConfig {
            radius: 8.0,
            side: 32,
            span: 16.0,
            grids: vec![4, 8, 16, 32],
            source: vec![11, 2],
            burn_in_factor: 0.25,
            courant: 0.25,
        }
    }
}

/// Boundary values `w(b, t_j)` of the weight multiplying the flux, and the
/// initial weights, for one test solution.
struct TestData {
    boundary: Vec<Vec<f64>>,
    initial: Vec<f64>,
}

/// Trapezoid reconstruction with node spacing `stride` times the finest.
fn reconstruct(field: &RateField, sites: &SiteSet, u: &CaloricSolution, nodes: &[f64], data: &TestData, stride: usize) -> f64 {
    // u.times is descending and holds exactly the nodes
    let k = nodes.len();
    let slice = |j: usize| &u.values[k - 1 - j];
    let integrand = |j: usize, cell: i64| -> f64 {
        let uj = slice(j);
        sites
            .links()
            .iter()
            .map(|l| {
                let b = l.boundary as usize;
                let rate = field.rate_in_cell(sites.boundary_site(b), cell, l.axis as usize);
                data.boundary[j][b] * rate * uj[l.site as usize]
            })
            .sum()
    };
    let mut total = 0.0;
    let mut j = 0;
    while j + stride < k {
        let (a, b) = (nodes[j], nodes[j + stride]);
        let cell = field.cell_of(0.5 * (a + b));
        total += 0.5 * (b - a) * (integrand(j, cell) + integrand(j + stride, cell));
        j += stride;
    }
    let init: f64 = slice(0).iter().zip(&data.initial).map(|(u, w)| u * w).sum();
    init + total
}

pub fn verify_representation(env: &EnvParams, cfg: &RepresentationConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("constant_error", 1e-6), ("ratio_min", 3.0), ("ratio_max", 5.0), ("kernel_error", 1e-5)])
        .merged(overrides)?;
    if cfg.grids.len() < 2 || cfg.grids.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::Param("quadrature grids must double successively".into()));
    }
    let field = RateField::new(env.clone())?;
    let opts = SolverOptions::with_courant(cfg.courant);
    let d = env.d;
    let sites = ball(d, cfg.radius)?;
    let finest = *cfg.grids.last().unwrap();
    let h = field.delta_t() / finest as f64;
    let steps = (cfg.span / h).round() as usize;
    if ((steps as f64) * h - cfg.span).abs() > 1e-9 {
        return Err(Error::Param("span must be a multiple of the finest step".into()));
    }
    let nodes: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
    let (t0, s) = (0.0, cfg.span);
    let y_hat = vec![0; d];

    // u(z, t) = p_R(z, t; ŷ) on every node
    let cyl = Cylinder { sites: sites.clone(), t0, t1: s };
    let mut terminal = vec![0.0; sites.len()];
    terminal[sites.require(&y_hat)?] = 1.0;
    let u = solve_caloric(&field, &cyl, &BoundaryData::terminal(&cyl, terminal), &nodes, &opts)?;

    // v ≡ 1: weights ρ(b,t)/ρ(ŷ) and ρ(x,t0)/ρ(ŷ)
    let burn = cfg.burn_in_factor * (cfg.side * cfg.side) as f64;
    let rho = LocalRho::compute(&field, &sites, cfg.side, t0, s, h, &[t0, s], burn, &opts)?;
    let ry = rho.slice(s)?[sites.require(&y_hat)?];
    let nb = sites.boundary_len();
    let mut buf = vec![0.0; nb];
    let one = TestData {
        boundary: nodes
            .iter()
            .map(|&t| {
                rho.boundary_at(t, &mut buf);
                buf.iter().map(|r| r / ry).collect()
            })
            .collect(),
        initial: rho.slice(t0)?.iter().map(|r| r / ry).collect(),
    };

    // heat-kernel test solution v = p(x̂0; ·)/ρ; the density cancels in the
    // weights, leaving v(ŷ) ρ(ŷ) = p(x̂0; ŷ) on the left
    let tor = torus(d, cfg.side)?;
    let source = SpaceTime::new(cfg.source.clone(), t0 - 1.0);
    let mut times = nodes.clone();
    if times[0] <= source.t {
        return Err(Error::Param("source must precede the initial slice".into()));
    }
    times.dedup();
    let p = forward_times(&field, &tor, &source, &times, &opts)?;
    let locate = |x: &[i64]| tor.require(x);
    let bidx: Vec<usize> = (0..nb).map(|b| locate(sites.boundary_site(b))).collect::<Result<_>>()?;
    let iidx: Vec<usize> = sites.sites().map(locate).collect::<Result<_>>()?;
    let target = p[steps].values[locate(&y_hat)?];
    let kernel = TestData {
        boundary: p.iter().map(|k| bidx.iter().map(|&i| k.values[i] / target).collect()).collect(),
        initial: iidx.iter().map(|&i| p[0].values[i] / target).collect(),
    };

    let mut b = ReportBuilder::new("representation", env, cfg);
    b.seeds([env.seed]);
    let mut errs = Vec::new();
    let mut kerrs = Vec::new();
    let mut vals = Vec::new();
    let mut kvals = Vec::new();
    for &g in &cfg.grids {
        let stride = finest / g;
        let v = reconstruct(&field, &sites, &u, &nodes, &one, stride);
        let kv = reconstruct(&field, &sites, &u, &nodes, &kernel, stride);
        b.metric(format!("constant_error_grid{g}"), (v - 1.0).abs());
        b.metric(format!("kernel_error_grid{g}"), (kv - 1.0).abs());
        errs.push((v - 1.0).abs());
        kerrs.push((kv - 1.0).abs());
        vals.push(v);
        kvals.push(kv);
    }
    let m = errs.len();
    if errs[m - 1] >= errs[m - 2] {
        return Err(Error::QuadratureTooCoarse(format!(
            "reconstruction error {} does not shrink from {} when the step halves",
            errs[m - 1],
            errs[m - 2]
        )));
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    // Richardson extrapolation of the second-order rule
    let rich = vals[m - 1] + (vals[m - 1] - vals[m - 2]) / 3.0;
    let krich = kvals[m - 1] + (kvals[m - 1] - kvals[m - 2]) / 3.0;
    b.metric("constant_error", (rich - 1.0).abs())
        .metric("kernel_error", (krich - 1.0).abs())
        .metric("ratio_last", ratios[m - 2])
        .metric("ratio_min", ratios.iter().copied().fold(f64::INFINITY, f64::min))
        .metric("ratio_max", ratios.iter().copied().fold(0.0, f64::max))
        .metric("rho_at_probe", ry)
        .require("constant reconstruction", "constant_error", Cmp::Lt, th.get("constant_error"))
        .require("second-order quadrature (low)", "ratio_min", Cmp::Ge, th.get("ratio_min"))
        .require("second-order quadrature (high)", "ratio_max", Cmp::Le, th.get("ratio_max"))
        .key("constant_error");
    if field.is_homogeneous() {
        b.require("heat-kernel reconstruction", "kernel_error", Cmp::Lt, th.get("kernel_error"));
    }
    b.note("errors use Richardson extrapolation of the two finest trapezoid grids");
    b.finish()
}
