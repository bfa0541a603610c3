use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every violated parameter bound, not only the first one.
    #[error("invalid model parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid needs at least 16 nodes, got {0}")]
    GridTooSmall(usize),

    #[error("weight |x|^{a} is not integrable at the origin in dimension {n}")]
    NonIntegrableWeight { a: f64, n: usize },

    #[error("rescaling by lambda={lambda} pushes {lost_fraction:.3e} of the mass outside the domain")]
    LossOfSupport { lambda: f64, lost_fraction: f64 },

    #[error("no sign change of the shooting outcome for a in [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("converged profile does not decay: tail ratio {tail_ratio:.3e} at r={radius}")]
    NonDecaying { tail_ratio: f64, radius: f64 },

    #[error("descent stagnated after {iterations} iterations (J={quotient}, residual={residual:.3e})")]
    Stagnation {
        iterations: usize,
        quotient: f64,
        residual: f64,
    },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("profile of kind {found} cannot be used for a {expected} report")]
    MismatchedKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("trial battery has {got} fields, at least {need} required")]
    BatteryTooSmall { got: usize, need: usize },

    #[error("midpoint fixed point did not converge in {iterations} iterations (change {change:.3e})")]
    FixedPointDivergence { iterations: usize, change: f64 },

    #[error("time step underflow at t={t} (dt={dt:e})")]
    DtUnderflow { t: f64, dt: f64 },

    #[error("conservation breach at t={t}: {quantity} drift {drift:.3e} exceeds cap {cap:.1e}")]
    ConservationBreach {
        t: f64,
        quantity: &'static str,
        drift: f64,
        cap: f64,
    },

    #[error("virial cutoff needs 4R <= r_max (R={radius}, r_max={r_max})")]
    DomainTooSmall { radius: f64, r_max: f64 },

    #[error("cutoff profile violates sign condition {condition} at r={radius}")]
    CutoffCondition {
        condition: &'static str,
        radius: f64,
    },

    #[error("need at least {need} snapshots, got {got}")]
    InsufficientSnapshots { got: usize, need: usize },

    #[error("series shows no blow-up: {0}")]
    NoBlowup(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in JSON error records.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::GridTooSmall(_) => "grid_too_small",
            Error::NonIntegrableWeight { .. } => "non_integrable_weight",
            Error::LossOfSupport { .. } => "loss_of_support",
            Error::NoBracket { .. } => "no_bracket",
            Error::NonDecaying { .. } => "non_decaying",
            Error::Stagnation { .. } => "stagnation",
            Error::DivisionByZero(_) => "division_by_zero",
            Error::MismatchedKind { .. } => "mismatched_kind",
            Error::BatteryTooSmall { .. } => "battery_too_small",
            Error::FixedPointDivergence { .. } => "fixed_point_divergence",
            Error::DtUnderflow { .. } => "dt_underflow",
            Error::ConservationBreach { .. } => "conservation_breach",
            Error::DomainTooSmall { .. } => "domain_too_small",
            Error::CutoffCondition { .. } => "cutoff_condition",
            Error::InsufficientSnapshots { .. } => "insufficient_snapshots",
            Error::NoBlowup(_) => "no_blowup",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
