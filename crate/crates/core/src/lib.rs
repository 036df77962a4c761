//! Multi-view ECG beat classification.
//!
//! Records are decoded from WFDB files ([`wfdb`]), cut into fixed-length beats
//! ([`beats`]) and presented to two classifiers: a bidirectional recurrent net
//! on the raw beat and an MLP on its Gramian Angular Field ([`gaf`],
//! [`models`]). The two class-probability vectors are combined with
//! Dempster's rule ([`fusion`]) and evaluated on clean and noise-corrupted
//! test beats ([`noise`], [`harness`]).

pub mod wfdb;
pub mod beats;
pub mod gaf;
pub mod noise;
pub mod models;
pub mod fusion;
pub mod synth;
pub mod harness;
