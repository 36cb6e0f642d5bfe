//! Forward and backward kernels behind the graph's heavier ops.

pub mod attention;
pub mod conv;
pub mod scan;
