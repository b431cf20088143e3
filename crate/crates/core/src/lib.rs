//! Monte Carlo laboratory for directionally reinforced random walks: a
//! continuous-time walk moving at unit speed along directions driven by an
//! irreducible Markov chain, holding each direction for an i.i.d. random
//! duration. The crate simulates the walk, exposes its renewal
//! decomposition, and verifies law-of-large-numbers, Gaussian/stable, and
//! iterated-logarithm scaling behavior with statistical tests.

pub mod cli;
pub mod directions;
pub mod limits;
pub mod numeric;
pub mod rng;
pub mod stats;
pub mod waiting;
pub mod walk;
