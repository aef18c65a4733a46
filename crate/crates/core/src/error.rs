use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("exponent gamma_{index} = {value} must exceed -1")]
    ExponentOutOfRange { index: usize, value: String },
    #[error("singular points must be strictly increasing (t_{index} >= t_{next})", next = index + 1)]
    DuplicateSingularity { index: usize },
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("weight is unbounded at x = {x} (negative exponent at a singular point)")]
    SingularEvaluation { x: String },
    #[error("quadrature did not converge for {what} after {levels} refinement levels")]
    NoConvergence { what: String, levels: usize },
    #[error("precision exhausted at degree {degree}: {detail}; raise precision_bits")]
    PrecisionExhausted { degree: usize, detail: String },
    #[error("evaluation point lies on the real axis")]
    RealAxisPole,
    #[error("R[{n},{j}] is numerically zero; identity divides by it")]
    DegenerateR { n: usize, j: usize },
    #[error("difference system denominator vanished at degree {n}")]
    DivisionBreakdown { n: usize },
    #[error("finite-difference step moves t_{index} across a neighbouring singularity")]
    StepCollision { index: usize },
    #[error("2n + delta sigma_n vanishes at degree {n}")]
    DegenerateDenominator { n: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
