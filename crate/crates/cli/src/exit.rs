//! Exit-code classification: 0 success, 1 usage, 2 data or domain error,
//! 3 numerical failure.

use std::fmt;

use mass_core::MassError;

pub const USAGE: u8 = 1;
pub const DATA: u8 = 2;
pub const NUMERICAL: u8 = 3;

/// The invocation was malformed.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// A computation diverged or had no well-posed answer.
#[derive(Debug)]
pub struct Numerical(pub String);

impl fmt::Display for Numerical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Numerical {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn numerical(msg: impl Into<String>) -> anyhow::Error {
    Numerical(msg.into()).into()
}

fn library_code(e: &MassError) -> u8 {
    match e {
        MassError::Config(_) | MassError::UnknownSystem { .. } => USAGE,
        MassError::NonFiniteValue { .. }
        | MassError::NonFiniteLoss { .. }
        | MassError::SingularMassMatrix { .. }
        | MassError::ZeroVector
        | MassError::Degenerate(_)
        | MassError::DegenerateRun { .. }
        | MassError::SingularFit => NUMERICAL,
        _ => DATA,
    }
}

/// First classifiable cause wins; anything else is a data error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return USAGE;
        }
        if cause.is::<Numerical>() {
            return NUMERICAL;
        }
        if let Some(m) = cause.downcast_ref::<MassError>() {
            return library_code(m);
        }
    }
    DATA
}
