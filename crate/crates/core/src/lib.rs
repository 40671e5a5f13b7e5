//! Conversational power-system analysis workbench.
//!
//! Deterministic numerical engines (Newton–Raphson power flow, an
//! interior-point ACOPF, an N-1 contingency sweep) sit behind a
//! schema-validated tool registry. A planner routes requests to an ACOPF
//! agent or a contingency agent, both of which act only through those tools
//! and share one versioned, provenance-tracked session context.

pub mod case_io;
pub mod contingency;
pub mod digest;
pub mod network;
pub mod linalg;
pub mod opf;
pub mod orchestrator;
pub mod powerflow;
pub mod service;
pub mod session;
pub mod tools;
