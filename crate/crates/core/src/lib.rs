//! Certified neural Lyapunov control for systems with unknown dynamics.
//!
//! The crate learns a surrogate of the dynamics with a one-hidden-layer tanh
//! network, trains a neural Lyapunov function together with a saturating
//! controller against that surrogate, and proves the Lyapunov conditions with
//! an interval branch-and-bound falsifier. A Lipschitz error bound transfers
//! the proof from the surrogate to the true system.

pub mod certificate;
pub mod dynamics;
pub mod error;
pub mod lqr;
pub mod lyapunov;
pub mod network;
pub mod pipeline;
pub mod roa;
pub mod sysid;
pub mod verifier;

pub use error::{Error, Result};
