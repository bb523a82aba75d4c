//! Liquid height perception and pour control for an RGB-D equipped manipulator.
//!
//! The crate is organized along the processing chain:
//!
//! * [`geometry`] parses a depth point cloud into a table plane and an upright
//!   cup cylinder, then reads the raw liquid elevation inside the cup.
//! * [`optics`] turns raw (apparent) heights into true heights, undoing the
//!   refraction that makes transparent liquids look shallower than they are.
//! * [`tracking`] runs a constant-velocity Kalman filter over the height
//!   estimates.
//! * [`control`] is the proportional pour controller with its slow-down, hold
//!   and return policies.
//! * [`sim`] is a deterministic world model and synthetic depth camera used to
//!   close the loop without a robot.
//! * [`harness`] runs experiment families and writes CSV reports.
//!
//! Independent trials and RANSAC hypothesis scoring run on rayon when the
//! `parallel` feature is enabled (the default); see [`par`].

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod geometry;
pub mod harness;
pub mod optics;
pub mod par;
pub mod sim;
pub mod tracking;

mod error;

pub use error::Error;
