//! Evaluation of visual place recognition descriptors on image pair retrieval.
//!
//! Two disjoint image sets of a scene are matched by brute-force cosine
//! similarity of global descriptors. Retrieved pairs are judged against a
//! scale-free geometric ground truth: the viewing directions must be close and
//! the relative rotation estimated from keypoint matches must agree with the
//! reference poses.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod fsutil;
pub mod geometry;
pub mod ground_truth;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
