pub mod cli;
pub mod config;
pub mod corpus;
pub mod diffmath;
pub mod evalkit;
pub mod llm_backend;
pub mod quadrature;
pub mod refine;
pub mod risk_model;
pub mod rng;
pub mod selftest;
pub mod specfun;
