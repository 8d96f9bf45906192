//! Joint learning of a neural Lyapunov function and controller.

mod gradnorm;
mod learn;
mod query;
mod risk;

pub use gradnorm::{gradient_norm_bound, GradNormBound};
pub use learn::{learn_lyapunov, learn_lyapunov_with, sample_region, ErrorBound, LearnConfig, LyapResult, RoundInfo};
pub use query::{lyapunov_query, LearnedLoop};
pub use risk::{lie_derivative, lyapunov_risk, v_gradient, LyapRiskConfig, RiskDynamics, RiskEval};
