#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod figures;
pub mod hashing;
pub mod label;
pub mod persona;
pub mod pipeline;
pub mod preprocess;
pub mod prompts;
pub mod rubric;
pub mod services;
pub mod timbre;
