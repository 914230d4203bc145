//! pblab: an exact symbolic workbench for finite-dimensional diffeological
//! vector spaces and vector pseudo-bundles.
//!
//! The crate constructs spaces and bundles from finitely many generating
//! plots, computes diffeological duals, glues spaces/bundles/maps/sections,
//! and verifies or constructs pseudo-metrics, including the induced metrics
//! on glued bundles and on dual bundles. All arithmetic is exact over the
//! rationals; smoothness is decided symbolically on a closed expression
//! class (polynomials with single-variable absolute-value factors, and
//! cellwise ratios thereof).
//!
//! Entry points:
//! - [`expr`]: the expression kernel (normal forms, smoothness decision).
//! - [`space`]: generated vector spaces, duals, pseudo-metrics on a fibre.
//! - [`bundle`]: pseudo-bundles over one-dimensional cell complexes.
//! - [`glue`]: gluing of spaces, bundles, maps and sections; switch maps.
//! - [`metric`]: bundle pseudo-metrics, compatibility, induced and dual metrics.
//! - [`dsl`]: the textual description language, runner and JSON reports.
//!
//! The `examples/` directory of this crate walks through each capability;
//! the thin `pblab` binary runs `.pbl` files (see [`dsl`] and [`catalog`]).

#![allow(clippy::needless_range_loop)] // exact matrix code is index-driven

pub mod rat;
#[macro_use]
pub mod expr;
pub mod linalg;
pub mod space;
pub mod bundle;
pub mod glue;
pub mod metric;
pub mod dsl;
pub mod catalog;

pub use expr::{AbsPoly, ExprError, RatExpr, Sign, SignContext, Var};
pub use rat::Rat;
