//! The decentralized round-robin protocol: per-agent belief sets, the nominal
//! planner, demonstrator and learner filtering, and inference between steps.

mod belief;
mod certificate;
mod planner;
mod teams;
mod world;

pub use belief::{BeliefEntry, BeliefSet, Provenance};
pub use certificate::{check_safety_certificate, CertificateReport};
pub use planner::{demo_radius, nominal_plan, MethodKind, PlannerConfig};
pub use teams::MultiTeamWorld;
pub use world::{round_robin_step, AgentStepRecord, InferenceRecord, Role, RoundRobinWorld, StepRecord};

#[cfg(test)]
mod tests;
