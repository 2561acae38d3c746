// SPDX-License-Identifier: Apache-2.0

//! Chipforge: an agent pipeline that maps an AI-model layer listing onto
//! chiplet hardware modules, generates hierarchical module descriptions,
//! produces and repairs RTL with retrieval from a weighted code library, and
//! explores the accelerator design space with an analytical cost model.
//!
//! Every LLM call goes through [`llm::Gateway`], which can record and replay
//! transcripts, and every EDA tool sits behind an adapter trait in [`tools`],
//! so whole runs are reproducible offline.

pub mod desc;
pub mod dse;
pub mod hdl;
pub mod library;
pub mod llm;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod ppa;
pub mod prompter;
pub mod rtlgen;
pub mod tools;
pub mod validator;

pub use ppa::{Ppa, PpaSource};
