//! Translation of a system + design into concrete structured programs for
//! each controller of the tracking family, plus the steady-state oracle
//! problems used as convergence references.

mod builders;
mod oracles;
mod program;
mod spec;

pub use builders::*;
pub use oracles::*;
pub use program::*;
pub use spec::*;
