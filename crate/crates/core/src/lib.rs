//! Lax pairs and first integrals for exponential-interaction Hamiltonian
//! systems of Toda type.
//!
//! The crate is organised around four coordinate systems and the maps
//! between them:
//!
//! * canonical `(q, p)` phase space, where the Hamiltonians are sums of
//!   exponentials ([`kt_system::kt_hamiltonian`], [`dn_toda::dn_hamiltonian`]);
//! * generalized Flaschka variables `a_i = -exp((v_i, q))`, `b_i = (v_i, p)`
//!   for an arbitrary [`spectrum::Spectrum`];
//! * Dₙ Toda Flaschka variables ([`dn_toda::DnFlaschkaPoint`]);
//! * the extended variables `(a_1..a_{n+1}, b_1..b_n)` of the
//!   Kozlov–Treshchev system with the `e^{-q_1} + e^{-2q_1}` end potential
//!   ([`kt_system::KtFlaschkaPoint`]).
//!
//! Flat state vectors always store the `a` block first, then the `b` block.
//! The same layout is used by the Poisson structures in [`poisson`], the
//! integrators in [`dynamics`] and the CSV output.

pub mod dn_toda;
pub mod dynamics;
pub mod error;
pub mod kt_system;
pub mod linalg;
pub mod poisson;
pub mod sampling;
pub mod spectrum;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
