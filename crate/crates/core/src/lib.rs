// Negated comparisons are used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod export;
pub mod gradient;
pub mod pipeline;
pub mod policy;
pub mod projection;
pub mod sensors;
pub mod synthesis;
