//! Workflow-driven submission service for a digital object repository.
//!
//! Layers, bottom up: [`procdef`] (definitions and their analysis),
//! [`engine`] and [`repository`] (state, each with its own journal),
//! [`service`] (HTTP facade) and [`client`] (minimal stub used by the CLI).

pub mod client;
pub mod engine;
pub mod journal;
pub mod procdef;
pub mod repository;
pub mod service;

pub(crate) mod b64;
pub(crate) mod xml;
