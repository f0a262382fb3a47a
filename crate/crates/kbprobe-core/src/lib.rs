//! Core domain logic for probing chat models with Wikidata-style
//! (subject, relation) queries and linking the answers back to entity IDs.
//!
//! Everything in this crate is pure computation over owned data: relation
//! profiles, prompt construction, reply parsing, disambiguation strategy
//! selection, set-overlap scoring, and gap classification. File formats,
//! HTTP clients, and the CLI live in the companion `kbprobe` crate.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std`
//! feature only switches the error types over to `std::error::Error`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod context;
pub mod disambig;
pub mod gap;
pub mod parse;
pub mod prompt;
pub mod record;
pub mod relation;
pub mod score;

pub use record::{GroundTruthRecord, QueryRecord};
pub use relation::{ContextPolicy, RelationId, RelationProfile, Strategy, ValueKind};
