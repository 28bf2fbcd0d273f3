//! Slow, obviously-correct reference implementations used to check the
//! real ones, plus random fixture builders.

pub mod fixtures;
pub mod oracle;
