//! Ergodic ball averages of `ρ` and the moment `E[ρ^{(d+1)/d}]` on two
//! torus sizes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::density::{compute_rho_at, rho_ball, rho_moment, DensityField};
use crate::env::{EnvParams, RateField};
use crate::error::{Error, Result};
use crate::kernel::{torus, SolverOptions};

use super::report::{Cmp, ReportBuilder, Thresholds, VerificationReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoErgodicConfig {
    pub radii: Vec<f64>,
    pub ensemble: usize,
    /// Torus sides for the moment; ball averages use the last one.
    pub sides: [usize; 2],
    /// Moment exponent; `None` means `(d+1)/d`.
    pub p: Option<f64>,
    pub burn_in_factor: f64,
    pub courant: f64,
}

impl Default for RhoErgodicConfig {
    fn default() -> Self {
        RhoErgodicConfig {
            radii: vec![2.0, 4.0, 8.0, 16.0],
            ensemble: 30,
            sides: [32, 64],
            p: None,
            burn_in_factor: 0.25,
            courant: 1.0,
        }
    }
}

pub fn verify_rho_ergodic(env: &EnvParams, cfg: &RhoErgodicConfig, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    let th = Thresholds::new(&[("moment_z", 2.0)]).merged(overrides)?;
    if cfg.radii.is_empty() || cfg.sides[0] >= cfg.sides[1] {
        return Err(Error::Param("need radii and two increasing torus sides".into()));
    }
    let d = env.d;
    let p = cfg.p.unwrap_or((d as f64 + 1.0) / d as f64);
    let opts = SolverOptions::with_courant(cfg.courant);
    let envs = env.ensemble(cfg.ensemble);
    let mut fields: [Vec<DensityField>; 2] = [Vec::new(), Vec::new()];
    for e in &envs {
        let field = RateField::new(e.clone())?;
        for (k, &side) in cfg.sides.iter().enumerate() {
            let burn = cfg.burn_in_factor * (side * side) as f64;
            fields[k].push(compute_rho_at(&field, &torus(d, side)?, &[0.0], burn, &opts)?);
        }
    }
    let mut b = ReportBuilder::new("rho_ergodic", env, cfg);
    b.seeds(envs.iter().map(|e| e.seed));
    let origin = vec![0; d];
    let mut spreads = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &r in &cfg.radii {
        let count = rho_ball(&DensityField::constant(d, cfg.sides[1], 0.0, 1.0)?, &origin, r, 0.0)?;
        let vals: Vec<f64> = fields[1].iter().map(|f| rho_ball(f, &origin, r, 0.0).map(|v| v / count)).collect::<Result<_>>()?;
        let mn = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let mx = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        b.metric(format!("ball_min_r{r}"), mn).metric(format!("ball_max_r{r}"), mx);
        spreads.push(mx - mn);
        lo = mn;
        hi = mx;
    }
    let est: Vec<_> = fields.iter().map(|f| rho_moment(f, p)).collect::<Result<_>>()?;
    let unit = rho_moment(&fields[1], 1.0)?;
    let z = (est[0].mean - est[1].mean).abs() / (est[0].se.powi(2) + est[1].se.powi(2)).sqrt().max(f64::MIN_POSITIVE);
    for (k, side) in cfg.sides.iter().enumerate() {
        b.metric(format!("moment_L{side}"), est[k].mean).metric(format!("moment_se_L{side}"), est[k].se);
    }
    b.metric("c", lo)
        .metric("C", hi)
        .metric("first_moment", unit.mean)
        .metric("first_moment_se", unit.se)
        .metric("moment_z", if est[0].se == 0.0 && est[1].se == 0.0 { 0.0 } else { z })
        .metric("spread_decreasing", if spreads.windows(2).all(|w| w[1] <= w[0]) { 1.0 } else { 0.0 })
        .require("moment stable in L", "moment_z", Cmp::Le, th.get("moment_z"))
        .key("moment_z");
    b.note("the concentration rate of ball averages is reported without a threshold");
    b.finish()
}
