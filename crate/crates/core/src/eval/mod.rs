//! Trials, error rates and the evaluation protocols.

mod metrics;
mod protocol;
mod trials;

pub use metrics::{compute_eer, det_curve, probit, DetCurve, DetPoint};
pub use protocol::{run_protocol, Condition, Protocol, ProtocolConfig, Report};
pub use trials::{make_trials, Trial, TrialSet};
