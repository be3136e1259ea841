//! Timing side-channel detection and quantification with neural timing
//! models.
//!
//! A trace dataset of (secret, public, time) rows is fitted by a three-branch
//! network whose secret branch ends in `k` binarized interface units
//! ([`network`]). Sweeping `k` finds the narrowest interface that still
//! explains the timing ([`sweep`]); a nonzero width means timing depends on
//! the secret. The secret branch is then analyzed exactly to count how many
//! secrets fall in each observable class ([`counter`]), and the class sizes
//! give the Shannon leakage in bits ([`quantifier`]).

pub mod counter;
pub mod dataset;
pub mod network;
pub mod quantifier;
pub mod sweep;
