use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("confinement-induced resonance: denominator {denominator:e} is zero within tolerance")]
    Resonance { denominator: f64 },

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error(
        "shallow lattice: band {band} has bandwidth {bandwidth:.4} >= gap {gap:.4}; \
         increase V0 or override the band partition"
    )]
    ShallowLattice { band: usize, bandwidth: f64, gap: f64 },

    #[error("degenerate Wannier centers in band {band}: splitting {splitting:e}")]
    DegenerateCenters { band: usize, splitting: f64 },

    #[error("Fock basis dimension {dimension} exceeds the limit {limit}")]
    DimensionOverflow { dimension: u128, limit: u128 },

    #[error("orbital set is not closed under site mirroring: {0}")]
    NotMirrorClosed(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("norm drift {drift:e} at t = {time}")]
    NormDrift { time: f64, drift: f64 },

    #[error("step size underflow at t = {time} (step {step:e})")]
    StepUnderflow { time: f64, step: f64 },

    #[error("basis mismatch: expected dimension {expected}, found {found}")]
    BasisMismatch { expected: usize, found: usize },

    #[error("empty averaging window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },

    #[error("too few samples: {found} < {required}")]
    TooFewSamples { found: usize, required: usize },

    #[error("mean fidelity {0:e} too small for a normalized variance")]
    DegenerateMean(f64),

    #[error("unknown target: {0}")]
    UnknownTarget(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("at g = {g}: {source}")]
    AtCoupling {
        g: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the coupling value at which it occurred.
    pub fn at_coupling(self, g: f64) -> Self {
        Error::AtCoupling {
            g,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Eigensolver(_)
            | Error::NoConvergence(_)
            | Error::NormDrift { .. }
            | Error::StepUnderflow { .. }
            | Error::FitFailed(_)
            | Error::DegenerateMean(_)
            | Error::DegenerateCenters { .. }
            | Error::ShallowLattice { .. } => true,
            Error::AtCoupling { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
