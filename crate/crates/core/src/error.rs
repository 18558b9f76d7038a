use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its valid range or names something unknown.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Operands have incompatible shapes or violate a stated precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// `H_AB H_AB^H` is too ill-conditioned to build a projector.
    #[error("channel matrix is singular (condition number {condition:.3e})")]
    SingularChannel { condition: f64 },

    /// The stacked `[H_AB; H_AN]` matrix cannot be inverted.
    #[error("transmit filter is singular (condition number {condition:.3e})")]
    SingularFilter { condition: f64 },

    /// `n_a <= n_b`, so there is no room for artificial noise.
    #[error("no null space: {n_tx} transmit antennas for {n_rx} receive antennas")]
    NoNullSpace { n_tx: usize, n_rx: usize },

    /// A joint alphabet does not fit the dense counting tables.
    #[error("alphabet of {cells} cells exceeds the table limit of {limit}")]
    AlphabetTooLarge { cells: u64, limit: u64 },
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
