//! Occupation-time densities of state 0 of a continuous-time Markov chain
//! over a finite horizon `[0, t]`, computed four independent ways:
//!
//! * exact Bessel-function closed forms for the two-state chain and the
//!   equal-rate birth-death chain ([`closed_form`]);
//! * numerical Laplace inversion of the resolvent transform identity for
//!   arbitrary finite chains ([`transforms`]);
//! * a moment-based Bessel series built from the spectral measure of the
//!   symmetrized generator ([`spectral`]);
//! * an exact event-driven Monte Carlo oracle ([`simulate`]).
//!
//! The density of the occupation time splits into a point mass
//! `e^{-q_0 t}` at the full horizon (the chain never leaves state 0) and
//! a continuous part on `(0, t)`.

pub mod bessel;
pub mod chain;
pub mod closed_form;
pub mod linalg;
pub mod quad;
pub mod simulate;
pub mod spectral;
pub mod transforms;
