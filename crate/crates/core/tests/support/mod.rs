#![allow(dead_code)]

pub mod graphs;
pub mod repo;
pub mod server;
pub mod token_game;
pub mod workflows;
