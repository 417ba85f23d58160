//! Exact truncated computations for ℏ-adic deformations of lattice vertex algebras:
//! structure series, deformed vertex operators on the lattice Fock space, and checks of
//! Drinfeld-type current relations at finite truncation.

pub mod bidist;
pub mod deformed;
pub mod drinfeld;
pub mod exact;
pub mod fock;
pub mod rational;
pub mod report;
pub mod roots;
pub mod scalar;
pub mod series;
pub mod structure;
