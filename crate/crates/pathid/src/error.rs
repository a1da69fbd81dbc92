//! Crate-wide error type.

use crate::fock::Path;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("truncation orders differ: {0} vs {1}")]
    TruncationMismatch(u32, u32),
    #[error("keep set is empty")]
    EmptyKeepSet,
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("operator is not hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("operator has negative eigenvalue {0:.3e}")]
    NotPositive(f64),
    #[error("operator trace {0} differs from 1")]
    BadTrace(f64),
    #[error("target state uses a path absent from the density operator")]
    BasisMismatch,
    #[error("crystal needs two distinct paths, got {0} twice")]
    CrystalSamePath(Path),
    #[error("emitter output paths must be pairwise distinct")]
    SourcePathsClash,
    #[error("beam-splitter ports must be four distinct paths")]
    PortClash,
    #[error("photon on {0} carries no H/V label, required by {1}")]
    MissingPolarization(Path, &'static str),
    #[error("transmission must satisfy 0 <= T <= 1, got {0}")]
    BadTransmission(f64),
    #[error("loss path {0} cannot appear in {1}")]
    LossPath(Path, &'static str),
    #[error("polarization presets are folded into the setup before running; none may remain")]
    PolSetAtRuntime,
    #[error("parameter `{0}` has no bound value")]
    UnboundParam(String),
    #[error("parameter `{0}` does not appear in the setup")]
    UnknownParam(String),
    #[error("detector list is empty")]
    NoDetectors,
    #[error("no component matches the detection pattern at any order <= {0}")]
    DegenerateSelection(u32),
    #[error("count rate vanishes at every order <= {0} across the sweep")]
    DegenerateSweep(u32),
    #[error("element has no graph translation: {0}")]
    UnsupportedElement(&'static str),
    #[error("self-loop on vertex {0}")]
    SelfLoop(Path),
    #[error("duplicate edge {0} -- {1}: same colors and same weight")]
    DuplicateEdge(Path, Path),
    #[error("unknown vertex {0}")]
    UnknownVertex(Path),
    #[error("duplicate vertex {0}")]
    DuplicateVertex(Path),
    #[error("vertex count {0} exceeds the search bound {1}")]
    SearchBound(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("energy conservation violated: 1/lp - 1/ls - 1/li = {0:.3e} relative")]
    EnergyConservation(f64),
    #[error("emission angle pi/2 lies in the crystal plane")]
    GrazingAngle,
    #[error("cavity sum diverges: |r1 r2| = 1 with no outcoupling")]
    CavityDivergence,
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
