use thiserror::Error;

/// Errors produced by graph construction, gain synthesis, simulation and
/// scenario handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),

    #[error("duplicate edge between nodes {0} and {1}")]
    DuplicateEdge(usize, usize),

    #[error("edge ({0}, {1}) has non-positive weight {2}")]
    NonPositiveWeight(usize, usize, f64),

    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),

    #[error("adjacency matrix is not symmetric at ({0}, {1})")]
    AsymmetricAdjacency(usize, usize),

    #[error("communication graph must be connected")]
    Disconnected,

    #[error("cost {index}: point outside the admissible domain ({detail})")]
    DomainViolation { index: usize, detail: String },

    #[error("optimizer did not converge: residual {residual:.3e} after {iters} iterations")]
    NoConvergence { residual: f64, iters: usize },

    #[error("line search step underflowed while respecting a domain bound")]
    StepUnderflow,

    #[error("degenerate sampling box: lower bound must be strictly below upper bound")]
    DegenerateBox,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "C*B is rank deficient (rank {rank} < {q}); singular values {singular_values:?}; \
         output-feedback gain synthesis requires full-rank C*B"
    )]
    RankDeficient {
        rank: usize,
        q: usize,
        singular_values: Vec<f64>,
    },

    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),

    #[error("sampling period {delta} exceeds the guaranteed inter-sample bound {tau0}")]
    DeltaExceedsTau0 { delta: f64, tau0: f64 },

    #[error("simulation diverged at t = {t:.6}: non-finite state")]
    Divergence { t: f64 },

    #[error("trajectory left the admissible domain of cost {agent} at t = {t:.6}")]
    DomainExit { agent: usize, t: f64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("insufficient decay: fit window has {0} samples, need at least 10")]
    InsufficientDecay(usize),

    #[error("trace does not contain a Lyapunov series")]
    MissingLyapunov,

    #[error("event statistics require a sampled-scheme trace")]
    ContinuousTrace,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
