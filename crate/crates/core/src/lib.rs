//! Admission control for edge-cloud networks that trades power against
//! throughput.
//!
//! A [`model::NetworkConfig`] describes task classes, edge server groups and
//! destination areas. A [`policy::Policy`] decides, for every arriving task,
//! whether it is served in an edge group, offloaded to the cloud or blocked.
//! The [`sim`] module measures the long-run power per unit throughput of a
//! policy by simulation, and [`oracle`] computes it exactly, together with
//! the best achievable value, when durations are exponential.

pub mod distribution;
pub mod experiment;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod presets;
pub mod random;
pub mod replicate;
pub mod scenario;
pub mod sim;

pub use distribution::{CloudDurationMode, DurationFamily};
pub use model::{apply_scaling, validate_config, NetworkConfig, NetworkState, ScaledNetwork};
pub use policy::{Decision, Policy, PolicyKind};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
