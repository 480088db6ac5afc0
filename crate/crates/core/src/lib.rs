//! Coverage-guided structured fuzzing of a table-driven instruction
//! selector.
//!
//! The pieces, bottom up:
//!
//! * [`ir`]: a small typed SSA IR with a textual form and dominance.
//! * [`verify`]: structural validity of modules.
//! * [`mutate`]: validity-preserving mutation strategies.
//! * [`target`]: declarative selection patterns compiled to a matcher table.
//! * [`select`]: the matcher-table interpreter, i.e. the program under test.
//! * [`coverage`]: probe-edge and matcher-table feedback maps.
//! * [`feedback`]: decoding matcher coverage into mutation guidance.
//! * [`campaign`]: the fuzzing loop.

pub mod campaign;
pub mod coverage;
pub mod feedback;
pub mod ir;
pub mod mutate;
pub mod select;
pub mod target;
pub mod verify;
