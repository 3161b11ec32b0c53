//! Multi-group resource allocation optimisation (MG-RAO).
//!
//! Child agents learn how to split fixed resources across the task types
//! they are asked to perform, from value feedback returned by the parent
//! agents that allocated the work. Feedback is modelled separately per group
//! of parents and blended into one allocation.
//!
//! - [`model`]: tasks, agents, resources, system descriptors.
//! - [`learner`]: the child-side learner.
//! - [`environment`]: simulated parents and children.
//! - [`scenarios`]: experiment definitions, metrics, comparisons and output files.
//! - [`oracle`] / [`verify`]: independent reference formulas and the checks run against them.

pub mod environment;
pub mod error;
pub mod learner;
pub mod model;
pub mod numfmt;
pub mod oracle;
pub mod scenarios;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use learner::{LearnerConfig, MgraoLearner, ParentGroupMap};
pub use model::{AtomicTaskType, ChildId, ParentId, ResourceId, SystemDescriptor};
