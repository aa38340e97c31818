//! Construction and evaluation of simulated depressive-patient profiles.
//!
//! The crate turns three raw corpora (counseling dialogues, assessment
//! dialogues, and social-media candidate timelines) into fully specified
//! patient simulators, then measures how well those simulators hold up in
//! conversation:
//!
//! - [`corpus`] parses and validates the input corpora into patient
//!   skeletons and social candidates.
//! - [`align`] merges counseling and assessment profiles, then ranks
//!   social candidates against each merged skeleton by symptom overlap and
//!   personality similarity.
//! - [`coc`] builds a temporal memory graph from a matched candidate's
//!   timeline and summarizes it into episode cards.
//! - [`promptkit`] assembles system prompts from tagged components, with
//!   ablations that drop or add component groups.
//! - [`gateway`] abstracts chat and embedding backends, from deterministic
//!   test doubles to HTTP endpoints, with retry and concurrency limits.
//! - [`evalkit`] runs scripted interviews and scores the resulting
//!   transcripts: embedding realism, response diversity, judge verdicts,
//!   and citation audits against the memory cards.
//! - [`pipeline`] chains everything into staged, reproducible runs keyed
//!   by a hash of the effective configuration.
//!
//! # Examples
//!
//! Each capability has a runnable example that works against the bundled
//! fixture corpus, in pipeline order:
//!
//! - **`ingest_corpus`** - Load and validate the three input corpora
//! - **`align_profiles`** - Merge profiles and rank candidate timelines
//! - **`build_memory`** - Build a temporal memory graph and episode cards
//! - **`assemble_prompt`** - Assemble prompts under different ablations
//! - **`run_interview`** - Run a scripted interview against a mock patient
//! - **`evaluate_dialogues`** - Score a transcript on all four metrics
//! - **`full_pipeline`** - Run every stage end to end from one config
//!
//! ```bash
//! cargo run -p deprofile --example ingest_corpus
//! cargo run -p deprofile --example align_profiles
//! cargo run -p deprofile --example build_memory
//! cargo run -p deprofile --example assemble_prompt
//! cargo run -p deprofile --example run_interview
//! cargo run -p deprofile --example evaluate_dialogues
//! cargo run -p deprofile --example full_pipeline
//! ```
//!
//! The `deprofile-forge` binary exposes the same stages as subcommands;
//! see the repository README for its CLI contract.

pub mod align;
pub mod coc;
pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod gateway;
pub mod pipeline;
pub mod promptkit;

pub use error::{Error, ExitCode, Result};
