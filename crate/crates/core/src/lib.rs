//! Repair of partial-order scripts from natural-language feedback.
//!
//! A [`Script`] is a goal plus a DAG of steps. Feedback is turned into a
//! single typed [`EditCommand`] by a [`corrector::Corrector`], the edit is
//! applied deterministically by [`engine::apply`], and feedback is kept in a
//! growing [`memory::Memory`] so it can be reused on similar scripts later.

pub mod config;
pub mod corrector;
pub mod dataset;
pub mod edit;
pub mod engine;
pub mod harness;
pub mod memory;
pub mod metrics;
pub mod script;
pub mod service;
pub mod text;

pub use edit::{EditCommand, EditComponents, EditKind, ErrorType};
pub use script::{NodeId, NodeRef, Script, ScriptError};
