//! Multi-gyroscope orientation estimation with Best Axes Composition (BAC).
//!
//! The crate is organised bottom-up:
//!
//! - [`so3`]: rotation-group maps, rotation averaging and trajectory interpolation.
//! - [`gyro_model`]: the discrete gyroscope model and a synthetic multi-IMU generator.
//! - [`estimator`]: open-loop integration and the averaged virtual estimator baseline.
//! - [`calibrate`]: batch calibration of intrinsics, extrinsics and per-sample states.
//! - [`bac`]: per-axis error evaluation, axis selection and composed open-loop propagation.
//! - [`harness`]: file formats, time alignment, experiment pipeline and reports.

pub mod bac;
pub mod calibrate;
pub mod estimator;
pub mod gyro_model;
pub mod harness;
pub mod so3;

pub use so3::{Mat3, Rotation, Vec3};
