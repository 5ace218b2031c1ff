//! Conversion of raw atomistic-structure datasets into OPTIMADE JSON Lines archives, and
//! the pieces needed to serve them: a filter-language engine, an in-memory store, an
//! HTTP API with a swappable mount table and a directory watcher.

pub mod config;
pub mod convert;
pub mod filter;
pub mod ingest;
pub mod server;
pub mod store;
pub mod synthetic;
pub mod watcher;
