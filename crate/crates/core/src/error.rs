use thiserror::Error;

/// Failures surfaced by the numerical and combinatorial routines.
///
/// The display strings double as the stable error names reported by the CLI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("order overflow: requested order {requested}, limit {limit}")]
    OrderOverflow { requested: usize, limit: usize },
    #[error("moment undefined: {0}")]
    MomentUndefined(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inversion failed: {0}")]
    InversionFailed(String),
    #[error("domain escape: {0}")]
    DomainEscape(String),
    #[error("subordination failed: {0}")]
    SubordinationFailed(String),
    #[error("convolution failed: {0}")]
    ConvolutionFailed(String),
    #[error("inversion mass error: recovered mass {mass}")]
    InversionMass { mass: f64 },
    #[error("negativity error: minimum density {min}")]
    Negativity { min: f64 },
    #[error("S-transform undefined: first moment vanishes")]
    STransformUndefined,
    #[error("pole proximity at z = {re} + {im}i")]
    PoleProximity { re: f64, im: f64 },
    #[error("series domain error: {0}")]
    SeriesDomain(String),
    #[error("degenerate correlation: c^2 = {c2} >= ab = {ab}")]
    DegenerateCorrelation { c2: f64, ab: f64 },
    #[error("time order violation: need {lower} < {upper}")]
    TimeOrder { lower: f64, upper: f64 },
    #[error("S-op singularity: denominator {0:e}")]
    SOpSingularity(f64),
    #[error("not centred: first-order cumulants must vanish")]
    NotCentred,
    #[error("exterior values unavailable: {0}")]
    ExteriorUnavailable(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::OrderOverflow { .. }
                | Error::InvalidMeasure(_)
                | Error::InvalidArgument(_)
                | Error::DegenerateCorrelation { .. }
                | Error::TimeOrder { .. }
                | Error::NotCentred
                | Error::MomentUndefined(_)
                | Error::STransformUndefined
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
