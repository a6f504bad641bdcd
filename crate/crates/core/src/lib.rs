#![allow(clippy::needless_range_loop)]

pub mod bbox;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod io;
pub mod par;
pub mod rng;
pub mod sar;

mod banded;
pub mod autologistic;
pub mod icm;
pub mod detect;
pub mod bgsub;
pub mod synth;
pub mod train;
