use alloc::string::String;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid intervention label '{label}': {reason}")]
    InvalidLabel { label: String, reason: &'static str },

    #[error("invalid comparison in study '{study}': {reason}")]
    InvalidComparison { study: String, reason: String },

    #[error(
        "study '{0}' contributes more than one comparison; multi-arm studies are not supported \
         (two-arm studies only)"
    )]
    MultiArmStudy(String),

    #[error("network has no comparisons")]
    EmptyNetwork,

    #[error("unknown intervention '{0}'")]
    UnknownIntervention(String),

    #[error("unknown component '{0}'")]
    UnknownComponent(String),

    #[error("duplicate interaction '{0}'")]
    DuplicateInteraction(String),

    #[error("interaction '{0}' is inestimable: no intervention contains both components")]
    ZeroInteraction(String),

    #[error("negative degrees of freedom ({0}): model is over-parameterized for the data")]
    NegativeDf(i64),

    #[error("network is disconnected ({0} subnetworks); fit subnetworks separately")]
    Disconnected(usize),

    #[error("network is already disconnected ({0} subnetworks)")]
    AlreadyDisconnected(usize),

    #[error("{0} non-minimal interventions exceed the enumeration cap of {1}; force required")]
    EnumerationTooLarge(usize, usize),

    #[error("design is stale: study '{0}' is not in the network")]
    StaleDesign(String),

    #[error("design removes no studies; result would not be disconnected")]
    NotDisconnected,

    #[error("models are not nested: {0}")]
    NotNested(&'static str),

    #[error("no degrees of freedom to test (df difference {0})")]
    NoDfToTest(i64),

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(&'static str),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid binary counts: {0}")]
    InvalidCounts(&'static str),

    #[error("empty design list")]
    NoDesigns,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(&'static str),
}

impl Error {
    /// Input problems (bad data, bad arguments) as opposed to model or numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidLabel { .. }
                | Error::InvalidComparison { .. }
                | Error::MultiArmStudy(_)
                | Error::EmptyNetwork
                | Error::UnknownIntervention(_)
                | Error::UnknownComponent(_)
                | Error::DuplicateInteraction(_)
                | Error::InvalidLevel(_)
                | Error::InvalidCounts(_)
                | Error::InvalidConfig(_)
                | Error::StaleDesign(_)
                | Error::NoDesigns
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NonFinite(_))
    }
}
