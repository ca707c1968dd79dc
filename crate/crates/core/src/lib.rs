//! Derandomization toolkit for ordered branching programs.
//!
//! Certifies or refutes candidate generators against OBPs, reconstructs small
//! circuits for the hard function when a generator fails, derandomizes
//! acceptance estimation through an estimator registry checked by local
//! consistency, and turns hitting sets into deterministic samplers.

pub mod bbtest;
pub mod bits;
pub mod combinat;
pub mod evaluator;
pub mod gf2k;
pub mod lctest;
pub mod obp;
pub mod prg;
pub mod rational;
pub mod reconstruct;
pub mod table;
pub mod universal;
pub mod verifier;
