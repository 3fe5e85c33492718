//! Test-only oracles. Each one recomputes a quantity by a route that does
//! not share code with the implementation it checks.

pub mod model_check;
pub mod oracles;
pub mod synth;
