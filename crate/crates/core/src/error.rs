use thiserror::Error;

/// Errors raised by the lattice generation, meshing and EIT pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate seed set: all {count} seeds are collinear")]
    CollinearSeeds { count: usize },

    #[error("degenerate stem sampling for stem {stem}: {reason}")]
    DegenerateStem { stem: usize, reason: String },

    #[error("empty unit cell: no material remains (alpha too small or too large)")]
    EmptyUnitCell,

    #[error("disconnected tiling: {pieces} separate pieces after merging")]
    DisconnectedTiling { pieces: usize },

    #[error("target relative density {target} unreachable: achievable bracket [{lo}, {hi}]")]
    UnreachableDensity { target: f64, lo: f64, hi: f64 },

    #[error("meshing failed: {0}")]
    Meshing(String),

    #[error("electrode placement failed: {0}")]
    Electrodes(String),

    #[error(
        "singular system: conductive component with {nodes} nodes (containing node {sample_node}) \
         is not connected to the electrode network"
    )]
    DisconnectedComponent { nodes: usize, sample_node: usize },

    #[error("matrix not positive definite at pivot {pivot}")]
    NotPositiveDefinite { pivot: usize },

    #[error("drive {drive}: {source}")]
    Drive {
        drive: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("protocol mismatch: expected {expected}, found {found}")]
    ProtocolMismatch { expected: String, found: String },

    #[error("singular regularized normal matrix at mu = {mu}; increase mu")]
    SingularNormalMatrix { mu: f64 },

    #[error("noise figure bracket does not straddle target: NF(lo) = {nf_lo}, NF(hi) = {nf_hi}")]
    BracketNoStraddle { nf_lo: f64, nf_hi: f64 },

    #[error("zero signal: {0}")]
    ZeroSignal(String),

    #[error("damage step touches no element")]
    EmptyDamage,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
