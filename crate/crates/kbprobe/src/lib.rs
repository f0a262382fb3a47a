//! IO, HTTP, file formats, and orchestration around [`kbprobe_core`]:
//! dataset files, chat-completion providers with record/replay, Wikipedia
//! and Wikidata clients, the SPARQL gap audit, and the run pipeline behind
//! the `kbprobe` CLI.

pub mod audit;
pub mod cli;
pub mod contextsrc;
pub mod dataset;
pub mod http;
pub mod llm;
pub mod mapping;
pub mod pipeline;
pub mod report;
pub mod sparql;
pub mod store;
pub mod wikidata;
pub mod wikipedia;

pub use pipeline::{run, RunConfig, RunOutcome};
