pub mod backends;
pub mod corpus;
pub mod eval;
pub mod genrank;
pub mod harness;
pub mod jsonl;
pub mod pointwise;
pub mod text;
pub mod unify;
