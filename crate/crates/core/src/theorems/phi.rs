//! Parabolic Harnack constants for caloric and adjoint-caloric functions,
//! computed exactly per discretization by extreme-ray enumeration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{SiteSet, SolverOptions};
use crate::walker::SpaceTime;

use super::harnack::{adjoint_rows, forward_rows, harnack_ratio, linspace, probes, spread_points, window_times, LocalRho, Ratio};
use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

/// Probe layout shared by the forward and adjoint engines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeLayout {
    /// Probe times per window, at interior fractions `(k + 1/2)/m`.
    pub times_per_window: usize,
    /// Lateral bins per `R²` of cylinder height.
    pub bins_per_r2: usize,
}

impl Default for ProbeLayout {
    fn default() -> Self {
        ProbeLayout {
            times_per_window: 3,
            bins_per_r2: 16,
        }
    }
}

/// Cylinder `B_domain × (0, height)` with probes spread over
/// `B_probe_radius` at interior times of the two windows.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiGeometry {
    pub domain: f64,
    pub probe_radius: f64,
    pub height: f64,
    pub sup: (f64, f64),
    pub inf: (f64, f64),
    pub bins: usize,
    pub times_per_window: usize,
}

impl PhiGeometry {
    fn probe_sets(&self, d: usize) -> (Vec<SpaceTime>, Vec<SpaceTime>) {
        let pts = spread_points(&vec![0; d], self.probe_radius);
        let m = self.times_per_window;
        (
            probes(&pts, &window_times(self.sup.0, self.sup.1, m)),
            probes(&pts, &window_times(self.inf.0, self.inf.1, m)),
        )
    }

    /// Caloric layout for radius `R`: `B_{2R} × (0, R²)`, probes in `B_{R/2}`.
    pub fn caloric(radius: f64, theta: [f64; 3], layout: &ProbeLayout) -> Self {
        let r2 = radius * radius;
        PhiGeometry {
            domain: 2.0 * radius,
            probe_radius: radius / 2.0,
            height: r2,
            sup: (theta[2] * r2, r2),
            inf: (theta[0] * r2, theta[1] * r2),
            bins: layout.bins_per_r2,
            times_per_window: layout.times_per_window,
        }
    }

    /// Adjoint layout for radius `R`: `B_{2R} × (0, 4R²]`, probes in `B_R`,
    /// sup over `(R², 2R²)` and inf over `(3R², 4R²]`.
    pub fn adjoint(radius: f64, layout: &ProbeLayout) -> Self {
        let r2 = radius * radius;
        PhiGeometry {
            domain: 2.0 * radius,
            probe_radius: radius,
            height: 4.0 * r2,
            sup: (r2, 2.0 * r2),
            inf: (3.0 * r2, 4.0 * r2),
            bins: 4 * layout.bins_per_r2,
            times_per_window: layout.times_per_window,
        }
    }

    /// Time reflection `t ↦ height − t`.
    pub fn mirrored(&self) -> Self {
        let h = self.height;
        PhiGeometry {
            sup: (h - self.sup.1, h - self.sup.0),
            inf: (h - self.inf.1, h - self.inf.0),
            ..self.clone()
        }
    }

    /// Slice times the adjoint engine reads from the density.
    pub fn slice_times(&self) -> Vec<f64> {
        let m = self.times_per_window;
        let mut t = vec![0.0];
        t.extend(window_times(self.sup.0, self.sup.1, m));
        t.extend(window_times(self.inf.0, self.inf.1, m));
        t
    }
}

/// Harnack constant of caloric functions (terminal data at `height`).
pub fn forward_constant(field: &RateField, g: &PhiGeometry, opts: &SolverOptions) -> Result<Ratio> {
    let sites = SiteSet::ball(field.dim(), g.domain)?;
    let (sup, inf) = g.probe_sets(field.dim());
    let all: Vec<_> = sup.iter().chain(&inf).cloned().collect();
    let rows = forward_rows(field, &sites, &all, g.height, &linspace(0.0, g.height, g.bins), opts)?;
    harnack_ratio(&rows[..sup.len()], &rows[sup.len()..], None)
}

pub struct AdjointConstants {
    /// Stated ordering: sup window earlier than inf window.
    pub stated: Ratio,
    /// Windows exchanged, over data switched on before both windows.
    pub reversed: Ratio,
}

/// Harnack constants of adjoint solutions (initial data at time 0).
pub fn adjoint_constants(field: &RateField, rho: &LocalRho, g: &PhiGeometry, opts: &SolverOptions) -> Result<AdjointConstants> {
    let sites = SiteSet::ball(field.dim(), g.domain)?;
    let (sup, inf) = g.probe_sets(field.dim());
    let all: Vec<_> = sup.iter().chain(&inf).cloned().collect();
    let edges = linspace(0.0, g.height, g.bins);
    let rows = adjoint_rows(field, &sites, rho, &all, 0.0, &edges, opts)?;
    let (s, i) = rows.split_at(sup.len());
    // lateral data switched on after the early window reach only the late
    // probes, so the reversed ratio is restricted to earlier generators
    let early = g.sup.0.min(g.inf.0);
    let nb = sites.boundary_len();
    let mut mask = vec![true; sites.len()];
    for k in 1..edges.len() {
        mask.extend(std::iter::repeat(edges[k] <= early + 1e-9).take(nb));
    }
    Ok(AdjointConstants {
        stated: harnack_ratio(s, i, None)?,
        reversed: harnack_ratio(i, s, Some(&mask))?,
    })
}

/// Density on the adjoint cylinder from a torus of side `2·domain + 8`,
/// burned in for `burn_in_factor · side²`.
pub(crate) fn adjoint_density(field: &RateField, g: &PhiGeometry, burn_in_factor: f64, opts: &SolverOptions) -> Result<LocalRho> {
    let sites = SiteSet::ball(field.dim(), g.domain)?;
    let side = 2 * g.domain.ceil() as usize + 8;
    LocalRho::compute(
        field,
        &sites,
        side,
        0.0,
        g.height,
        field.delta_t() / 16.0,
        &g.slice_times(),
        burn_in_factor * (side * side) as f64,
        opts,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiConfig {
    pub radii: Vec<f64>,
    pub theta: [f64; 3],
    pub ensemble: usize,
    pub layout: ProbeLayout,
    pub courant: f64,
}

impl Default for PhiConfig {
    fn default() -> Self {
        PhiConfig {
            radii: vec![8.0, 16.0],
            theta: [0.25, 0.5, 0.75],
            ensemble: 10,
            layout: ProbeLayout::default(),
            courant: 1.0,
        }
    }
}

fn scale_checks(b: &mut ReportBuilder, th: &Thresholds, worst: &[f64]) {
    let ratio = worst[worst.len() - 1] / worst[0];
    b.metric("scale_ratio", ratio)
        .metric("min_constant", worst.iter().copied().fold(f64::INFINITY, f64::min))
        .require("constant at least one", "min_constant", Cmp::Ge, 1.0)
        .require("scale ratio low", "scale_ratio", Cmp::Ge, th.get("scale_low"))
        .require("scale ratio high", "scale_ratio", Cmp::Le, th.get("scale_high"));
}

pub fn verify_phi(env: &EnvParams, cfg: &PhiConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("scale_low", 0.5), ("scale_high", 2.0)]).merged(overrides)?;
    let [t1, t2, t3] = cfg.theta;
    if !(0.0 < t1 && t1 < t2 && t2 < t3 && t3 < 1.0) {
        return Err(Error::Param("theta must satisfy 0 < θ1 < θ2 < θ3 < 1".into()));
    }
    if cfg.radii.is_empty() || cfg.ensemble == 0 {
        return Err(Error::Param("phi needs radii and environments".into()));
    }
    let opts = SolverOptions::with_courant(cfg.courant);
    let envs = env.ensemble(cfg.ensemble);
    let mut b = ReportBuilder::new("phi", env, cfg);
    b.seeds(envs.iter().map(|e| e.seed));
    let mut worst = Vec::new();
    for &r in &cfg.radii {
        let g = PhiGeometry::caloric(r, cfg.theta, &cfg.layout);
        let mut w: f64 = 0.0;
        for e in &envs {
            let field = RateField::new(e.clone())?;
            let c = forward_constant(&field, &g, &opts)?;
            b.metric(format!("constant_r{r}_seed{}", e.seed), c.constant);
            w = w.max(c.constant);
        }
        b.metric(format!("constant_r{r}"), w);
        worst.push(w);
    }
    scale_checks(&mut b, &th, &worst);
    b.key("scale_ratio");
    b.note("probe times sit at interior fractions of each window; the closed sup window touches the terminal slice, where delta data make the literal sup grow like R^d");
    b.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjointPhiConfig {
    pub radii: Vec<f64>,
    pub ensemble: usize,
    pub layout: ProbeLayout,
    pub burn_in_factor: f64,
    /// Compare with the forward engine on mirrored windows (homogeneous only).
    pub mirror_check: bool,
    pub courant: f64,
}

impl Default for AdjointPhiConfig {
    fn default() -> Self {
        AdjointPhiConfig {
            radii: vec![8.0, 16.0],
            ensemble: 10,
            layout: ProbeLayout {
                times_per_window: 2,
                bins_per_r2: 8,
            },
            burn_in_factor: 0.25,
            mirror_check: true,
            courant: 1.0,
        }
    }
}

pub fn verify_adjoint_phi(env: &EnvParams, cfg: &AdjointPhiConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("scale_low", 0.5), ("scale_high", 2.0), ("mirror_error", 1e-6)]).merged(overrides)?;
    if cfg.radii.is_empty() || cfg.ensemble == 0 {
        return Err(Error::Param("adjoint phi needs radii and environments".into()));
    }
    let opts = SolverOptions::with_courant(cfg.courant);
    let envs = if RateField::new(env.clone())?.is_homogeneous() {
        vec![env.clone()]
    } else {
        env.ensemble(cfg.ensemble)
    };
    let mut b = ReportBuilder::new("adjoint_phi", env, cfg);
    b.seeds(envs.iter().map(|e| e.seed));
    let mut worst = Vec::new();
    let mut reversed_smaller = 0usize;
    let mut mirror: f64 = 0.0;
    for &r in &cfg.radii {
        let g = PhiGeometry::adjoint(r, &cfg.layout);
        let mut w: f64 = 0.0;
        for e in &envs {
            let field = RateField::new(e.clone())?;
            let rho = adjoint_density(&field, &g, cfg.burn_in_factor, &opts)?;
            let c = adjoint_constants(&field, &rho, &g, &opts)?;
            b.metric(format!("constant_r{r}_seed{}", e.seed), c.stated.constant);
            b.metric(format!("reversed_r{r}_seed{}", e.seed), c.reversed.constant);
            if c.reversed.constant < c.stated.constant {
                reversed_smaller += 1;
            }
            w = w.max(c.stated.constant);
            if cfg.mirror_check && field.is_homogeneous() {
                let f = forward_constant(&field, &g.mirrored(), &opts)?;
                mirror = mirror.max((f.constant - c.stated.constant).abs() / c.stated.constant);
            }
        }
        b.metric(format!("constant_r{r}"), w);
        worst.push(w);
    }
    scale_checks(&mut b, &th, &worst);
    b.metric("reversed_smaller", reversed_smaller as f64);
    if reversed_smaller > 0 {
        b.note(format!("exchanging the windows gives a smaller constant in {reversed_smaller} case(s)"));
    }
    if cfg.mirror_check && RateField::new(env.clone())?.is_homogeneous() {
        b.metric("mirror_error", mirror)
            .require("agrees with forward engine on mirrored windows", "mirror_error", Cmp::Lt, th.get("mirror_error"));
    }
    b.key("scale_ratio");
    b.finish()
}
