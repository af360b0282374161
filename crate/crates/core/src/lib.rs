//! Simulator for the two-way entanglement-based ping-pong protocol under
//! lossy channels, a loss-exploiting eavesdropper, and a delayed-announcement
//! countermeasure.
//!
//! States are sparse superpositions over Fock configurations of labelled
//! modes ([`fockstate`]). Rounds are written once against a
//! [`branching::BranchChooser`], so the same code serves Monte Carlo sampling
//! and exact enumeration of all classical branches ([`analysis`]).

pub mod adversary;
pub mod analysis;
pub mod branching;
pub mod cli;
pub mod error;
pub mod fockstate;
pub mod gates;
pub mod infotheory;
pub mod protocol;
pub mod selftest;

pub use adversary::{loss_policy_for, AttackPlan, LossPolicy, Strategy};
pub use analysis::{closed_form_point, enumerate_branches, monte_carlo, sweep, CurvePoint, SweepSpec};
pub use error::{ConfigError, Error, Result};
pub use fockstate::{ModeRegister, ModeState, PolarizationBit, StateVector};
pub use infotheory::JointDistribution;
pub use protocol::{run_transcript, ProtocolConfig, RoundOutcome, Transcript};
