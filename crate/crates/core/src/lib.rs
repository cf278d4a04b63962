//! Proof-optimization metrics over structured proof traces and the
//! expert-iteration data-shaping pipeline built on them.

pub mod adapters;
pub mod augment;
pub mod canon;
pub mod context;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod run;
pub mod trace;
pub mod tree;

pub use augment::{AugmentFlags, PromptBundle};
pub use canon::{CanonicalGoal, Digest};
pub use context::{ContextSlice, Declaration, LibraryIndex};
pub use metrics::{MetricKind, ModularityReport};
pub use trace::{CandidateProof, Goal, ProofTrace, TacticStep, Term, TheoremRecord};
pub use tree::ProofTree;
