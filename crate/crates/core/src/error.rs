use thiserror::Error;

/// Errors raised across the crate. Variant names follow the contract of the
/// operation that raises them so callers can match on the failure kind.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // domain / grid
    #[error("grid has no interior nodes (h = {h})")]
    EmptyInterior { h: f64 },
    #[error("the spatial origin is not strictly inside the domain")]
    OriginOutside,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid grid spacing h = {h}: {reason}")]
    InvalidSpacing { h: f64, reason: String },
    #[error("invalid cylinder window: {0}")]
    InvalidWindow(String),

    // coefficient expressions
    #[error("expression parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown symbol `{0}` in expression")]
    UnknownSymbol(String),

    // operator validation
    #[error("ellipticity violated at y = {y:?}, t = {t}: a(xi, xi) = {value} outside [{lambda}|xi|^2, {upper}|xi|^2] for xi = {xi:?}")]
    EllipticityViolated {
        y: Vec<f64>,
        t: f64,
        xi: Vec<f64>,
        value: f64,
        lambda: f64,
        upper: f64,
    },
    #[error("coefficient matrix not symmetric at y = {y:?}, t = {t}")]
    Asymmetric { y: Vec<f64>, t: f64 },
    #[error("mixed term |a12| = {a12} exceeds min(a11, a22) = {bound} at y = {y:?}, t = {t}; the 7-point stencil would lose the M-matrix sign pattern")]
    MixedTermTooLarge { y: Vec<f64>, t: f64, a12: f64, bound: f64 },
    #[error("assumption c >= 0 violated: c = {value} at y = {y:?}, t = {t}")]
    NegativeC { y: Vec<f64>, t: f64, value: f64 },
    #[error("assumption |c| <= Lambda violated: c = {value} > {upper} at y = {y:?}, t = {t}")]
    CTooLarge { y: Vec<f64>, t: f64, value: f64, upper: f64 },
    #[error("assumption |b_i| <= Lambda violated: b_{component} = {value} at y = {y:?}, t = {t} (Lambda = {upper})")]
    DriftTooLarge {
        y: Vec<f64>,
        t: f64,
        component: usize,
        value: f64,
        upper: f64,
    },
    #[error("non-finite coefficient value at y = {y:?}, t = {t}")]
    NonFiniteCoefficient { y: Vec<f64>, t: f64 },
    #[error("coefficient spec dimension {spec} does not match grid dimension {grid}")]
    DimensionMismatch { spec: usize, grid: usize },
    #[error("stencil neighbour of node {node} escapes the grid")]
    StencilOutOfDomain { node: usize },
    #[error("no sample times given")]
    NoSampleTimes,

    // norms
    #[error("window too short: length {length} < required {required}")]
    WindowTooShort { length: f64, required: f64 },

    // linear algebra / evolution
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error("linear solve failed at step {step}: {reason}")]
    StepFailed { step: usize, reason: String },
    #[error("initial slice time {slice} does not match window start {window}")]
    InitialTimeMismatch { slice: f64, window: f64 },
    #[error("slice length {got} does not match grid interior count {expected}")]
    SliceLength { got: usize, expected: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("profile checks require a homogeneous trace (f = 0)")]
    NotHomogeneous,

    // eternal routes
    #[error("spec is not autonomous; the eigenpair route needs t-independent coefficients")]
    NotAutonomous,
    #[error("iteration did not converge after {iterations} iterations (last increment {increment:e})")]
    NoConvergence { iterations: usize, increment: f64 },
    #[error("converged principal vector changes sign (min/max = {ratio:e}); M-matrix assumption broken")]
    SignFailure { ratio: f64 },
    #[error("profile is not strictly positive")]
    NonPositiveProfile,
    #[error("far-past construction is seed sensitive (relative difference {difference:e} > {tolerance:e} at T_back = {t_back}); try doubling T_back")]
    SeedSensitivity {
        difference: f64,
        tolerance: f64,
        t_back: f64,
    },
    #[error("time {t} is outside the stored window [{start}, {end}]")]
    OutsideWindow { t: f64, start: f64, end: f64 },
    #[error("period {period} is not an integer multiple of dt = {dt}")]
    PeriodMismatch { period: f64, dt: f64 },

    // verify
    #[error("non-positive value encountered where a positive solution is required")]
    NonPositive,
    #[error("trace too short to separate the transient from the plateau")]
    PlateauNotReached,
    #[error("horizon too short: J = {horizon} but need at least {required}")]
    HorizonTooShort { horizon: f64, required: f64 },
    #[error("traces are not on a shared grid/time axis: {0}")]
    Incompatible(String),

    // inhomogeneous
    #[error("exhaustion differences do not decay geometrically (ratio {ratio})")]
    NoCauchyDecay { ratio: f64 },
    #[error("invalid truncation list: {0}")]
    InvalidTruncation(String),
    #[error("u - u0 falls to {min_value:e} below zero; input is not in the bounded-below family")]
    NegativeCoefficient { min_value: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
