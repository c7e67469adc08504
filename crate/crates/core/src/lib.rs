#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod diff;
pub mod geometry;
mod math;
pub mod dataset;
pub mod model;
pub mod config;
pub mod losses;
pub mod optimizer;
pub mod simulator;
pub mod pipeline;
