// SPDX-License-Identifier: Apache-2.0

//! Hierarchical module descriptions: schema, library, and the
//! generator/evaluator loop that produces new ones.

mod generator;
mod library;
mod schema;

pub use generator::{DescGenerator, DescriptionVerdict, PASS_TOKEN};
pub use library::DescriptionLibrary;
pub use schema::{
    is_identifier, validate_description, Connection, Direction, Endpoint, ModuleDescription, Param,
    Port, SchemaError, Submodule,
};

use crate::llm::{GatewayError, TemplateError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DescError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("generator output for {unit} unparseable after {rounds} rounds: {last}")]
    ParseFailure {
        unit: String,
        rounds: u32,
        last: SchemaError,
    },
    #[error("evaluator never passed {unit} in {rounds} rounds; last feedback: {feedback}")]
    EvaluatorNeverPassed {
        unit: String,
        rounds: u32,
        feedback: String,
    },
    #[error("corrupt description library entry {name:?}: {reason}")]
    CorruptEntry { name: String, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("description library I/O: {0}")]
    Io(String),
}
