use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("degenerate density {value:e} at {context}")]
    DegenerateDensity { value: f64, context: String },

    #[error("incomplete boundary data: {0}")]
    IncompleteBoundary(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("ball of radius {radius} does not fit in torus of side {side}")]
    BallEscapesTorus { radius: f64, side: usize },

    #[error("point {0:?} is outside the domain")]
    OutsideDomain(Vec<i64>),

    #[error("time {t} outside the recorded window [{lo}, {hi}]")]
    OutsideWindow { t: f64, lo: f64, hi: f64 },

    #[error("covariance normalization unresolved; run the clt check first")]
    SigmaUnresolved,

    #[error("quadrature step too coarse: {0}")]
    QuadratureTooCoarse(String),

    #[error("degenerate Harnack ratio: {0}")]
    DegenerateHarnack(String),

    #[error("metric `{0}` is not finite")]
    NonFinite(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
