#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conjugacy;
pub mod deform;
pub mod error;
pub mod functional;
pub mod io;
pub mod map;
pub mod poly;
pub mod scan;
pub mod workflow;

pub use error::{Error, Result};
