//! Independent oracles, seeded random instance families and invariant
//! checks backing the acceptance suite. Nothing here calls the library's own
//! energy, statistics or scoring code when computing an expected value.

pub mod families;
pub mod invariants;
pub mod oracles;
