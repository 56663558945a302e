//! Exact minimum-weight perfect matching decoder for surface codes.
//!
//! The dual phase of the blossom algorithm runs directly on the sparse
//! decoding graph ([`dual`]); primal modules decide growth directions
//! ([`primal`]); the [`fusion`] engine splits a long measurement history into
//! time slices, solves them in parallel and fuses the results. [`oracle`] is
//! an independent exact solver used to check everything else.

pub mod error;
pub mod graph;
pub mod partition;
pub mod paths;
pub mod dual;
pub mod framework;
pub mod primal;
pub mod oracle;
pub mod fusion;
pub mod api;
pub mod bench;
