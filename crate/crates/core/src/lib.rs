//! Minimal expected capital injection for tracking a ratcheting benchmark.
//!
//! The value of the tracking problem is computed along three routes that
//! check each other: Monte Carlo estimators of the dual function `h` and its
//! derivatives ([`dual_mc`]), a finite-difference solution of the dual Neumann
//! problem ([`dual_pde`]), and closed forms for a geometric index ([`gbm`]).
//! [`primal`] inverts the dual field into the value `v`, the superhedging
//! threshold `xi` and the feedback portfolio, and [`tracker`] simulates the
//! original problem under any strategy.

pub mod crosscheck;
pub mod dual_mc;
pub mod dual_pde;
pub mod error;
pub mod gbm;
pub mod interp;
pub mod model;
pub mod primal;
pub mod normal;
pub mod paths;
pub mod quad;
pub mod report;
pub mod scenario;
pub mod tracker;

pub use error::{RatchetError, Result};
