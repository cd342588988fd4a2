//! One verifier per quantitative statement. Each returns a report of
//! measured constants and the declared thresholds they were held to.

pub mod boundary;
pub mod clt;
pub mod doubling;
pub mod exit;
pub mod green;
pub mod hke;
pub mod hoelder;
pub mod harnack;
pub mod kernel_oracle;
pub mod llt;
pub mod phi;
mod report;
pub mod representation;
pub mod rho_audit;
pub mod rho_ergodic;
pub mod tails;

pub use boundary::{verify_boundary, BoundaryConfig};
pub use clt::{sigma_factor_from_report, sigma_from_report, verify_clt, CltConfig};
pub use doubling::{verify_doubling, DoublingConfig};
pub use exit::{verify_exit, ExitConfig};
pub use green::{verify_green2d, verify_green3d, Green2dConfig, Green3dConfig};
pub use hke::{verify_hke, HkeConfig};
pub use hoelder::{verify_hoelder, HoelderConfig};
pub use kernel_oracle::{verify_kernel_oracle, OracleConfig};
pub use llt::{verify_llt, LltConfig};
pub use phi::{verify_adjoint_phi, verify_phi, AdjointPhiConfig, PhiConfig};
pub use report::{Cmp, Criterion, Thresholds, VerificationReport};
pub use representation::{verify_representation, RepresentationConfig};
pub use rho_audit::{verify_rho_audit, RhoAuditConfig};
pub use rho_ergodic::{verify_rho_ergodic, RhoErgodicConfig};
pub use tails::{verify_tails, TailsConfig};

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;

use crate::env::EnvParams;
use crate::error::{Error, Result};

/// Every check id accepted by [`run_check`].
pub const CHECKS: &[&str] = &[
    "kernel_oracle",
    "rho_audit",
    "representation",
    "clt",
    "llt",
    "hke",
    "phi",
    "adjoint_phi",
    "doubling",
    "green2d",
    "green3d",
    "tails",
    "exit",
    "boundary",
    "hoelder",
    "rho_ergodic",
];

fn config<T: DeserializeOwned + Default>(check: &str, geometry: &serde_json::Value) -> Result<T> {
    if geometry.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(geometry.clone()).map_err(|e| Error::Param(format!("{check} geometry: {e}")))
}

/// Runs the check named `check` with a geometry given as JSON (`null` for
/// the defaults).
pub fn run_check(check: &str, env: &EnvParams, geometry: &serde_json::Value, overrides: &BTreeMap<String, f64>) -> Result<VerificationReport> {
    match check {
        "kernel_oracle" => verify_kernel_oracle(env, &config(check, geometry)?, overrides),
        "rho_audit" => verify_rho_audit(env, &config(check, geometry)?, overrides),
        "representation" => verify_representation(env, &config(check, geometry)?, overrides),
        "clt" => verify_clt(env, &config(check, geometry)?, overrides),
        "llt" => verify_llt(env, &config(check, geometry)?, overrides),
        "hke" => verify_hke(env, &config(check, geometry)?, overrides),
        "phi" => verify_phi(env, &config(check, geometry)?, overrides),
        "adjoint_phi" => verify_adjoint_phi(env, &config(check, geometry)?, overrides),
        "doubling" => verify_doubling(env, &config(check, geometry)?, overrides),
        "green2d" => verify_green2d(env, &config(check, geometry)?, overrides),
        "green3d" => verify_green3d(env, &config(check, geometry)?, overrides),
        "tails" => verify_tails(env, &config(check, geometry)?, overrides),
        "exit" => verify_exit(env, &config(check, geometry)?, overrides),
        "boundary" => verify_boundary(env, &config(check, geometry)?, overrides),
        "hoelder" => verify_hoelder(env, &config(check, geometry)?, overrides),
        "rho_ergodic" => verify_rho_ergodic(env, &config(check, geometry)?, overrides),
        _ => Err(Error::Param(format!("unknown check `{check}`"))),
    }
}
