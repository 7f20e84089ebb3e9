//! Confidence intervals for group means under a normal hierarchical model.
//!
//! Four interval families are provided:
//!
//! * direct UMAU intervals ([`direct_intervals`]), exact for every group;
//! * empirical Bayes posterior intervals ([`eb_normal`]), which control
//!   coverage only on average across groups;
//! * quantile-bound intervals ([`quantile_bound`]) that split the miscoverage
//!   budget between a posterior quantile and a bootstrap bound on it;
//! * FAB intervals ([`fab`]), exact for every group while borrowing strength
//!   from the others through a leave-one-out linking model.
//!
//! [`coverage_lab`] measures group-specific and across-group coverage of any
//! of them by Monte Carlo.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage_lab;
pub mod direct_intervals;
pub mod eb_normal;
pub mod error;
pub mod fab;
pub mod format;
pub mod grouped_data;
pub mod interval;
pub mod numerics;
pub mod quantile_bound;

pub use error::{Error, Result};
pub use grouped_data::{Estimator, GroupObservations, GroupSummary, HyperParams};
pub use interval::{Interval, Method};
pub use numerics::{RngStream, ToleranceConfig};
