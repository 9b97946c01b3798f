//! Terminal REPL and HTTP service over the shared session state machine.

pub mod api;
pub mod repl;
