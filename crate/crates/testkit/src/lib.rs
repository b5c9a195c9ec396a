//! Test-only support for the normseg workspace: dense brute-force oracles
//! that shadow the production kernels, goodness-of-fit statistics, and random
//! fixtures. Everything here is deliberately slow and simple; the point is
//! independence from the implementation paths under test.

pub mod fixtures;
pub mod oracles;
pub mod stats;
