pub mod analysts;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod exec;
pub mod fusion;
pub mod geo;
pub mod http;
pub mod index;
pub mod text;
pub mod types;
