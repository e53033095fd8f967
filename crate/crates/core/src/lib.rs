//! Machine-learning autotuning of OpenCL workgroup sizes for stencil kernels.
//!
//! The crate predicts a 2D workgroup size for a scenario (a device, kernel
//! and dataset combination) in one of three ways:
//!
//! * classify the scenario's features into an oracle workgroup size, falling
//!   back to a baseline, random or nearest-neighbour choice when the
//!   prediction turns out to be illegal ([`tuner::tune_classify`]);
//! * regress the runtime of each candidate size and pick the fastest
//!   ([`tuner::tune_regress`] with [`tuner::FitnessMode::RuntimeReciprocal`]);
//! * regress the speedup of each candidate over a baseline size and pick the
//!   largest ([`tuner::FitnessMode::Speedup`]).
//!
//! Training data comes from [`simoracle`], a simulated execution oracle, or
//! from externally measured runtimes imported through [`datastore`]. The
//! [`bench`] module evaluates techniques under cross-validation, a
//! synthetic-to-real split and leave-one-out splits, and [`serve`] exposes a
//! trained tuner over a line-delimited JSON protocol.

pub mod bench;
pub mod datastore;
pub mod error;
pub mod features;
pub mod learn;
pub mod scenario;
pub mod serve;
pub mod simoracle;
pub mod space;
pub mod synthgen;
pub mod tuner;

pub use error::{Error, Result};
pub use features::{FeatureSchema, FeatureVector};
pub use scenario::{DatasetDescriptor, DeviceDescriptor, KernelDescriptor, Scenario};
pub use space::{ConstraintContext, RefusedRecord, SampleTable, WorkgroupSize};
