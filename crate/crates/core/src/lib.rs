//! Discrete causal analysis, temporal functions and isometric embedding for
//! 2D Lorentzian chart spacetimes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod parser;
pub mod causality;
pub mod temporal;
pub mod embedding;
pub mod clarke;
pub mod specs;
pub mod io;
pub mod cli;
