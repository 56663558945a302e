//! Primal modules: they turn obstacles into growth directions.

pub mod cluster;
pub mod standard;
pub mod union_find;

pub use standard::StandardPrimal;
pub use union_find::UnionFindPrimal;
