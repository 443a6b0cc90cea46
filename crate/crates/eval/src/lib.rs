//! Evaluation harness: seeded corpus, baseline gates, ablation, latency
//! protocol and the unlinkability experiment.

pub mod ablation;
pub mod bench;
pub mod corpus;
pub mod gate;
pub mod linkability;
pub mod report;

pub use ablation::{run_ablation, AblationReport, AblationRow};
pub use bench::{run_latency_bench, BenchOp, BenchProtocol, LatencyReport, OpLatency};
pub use corpus::{generate_corpus, Corpus, CorpusRequest, Label};
pub use gate::{run_all, run_gate, GateConfig, GateId, HumanPolicy, SecurityReport};
pub use linkability::{run_linkability, Countermeasures, LinkabilityReport};

/// Seed used by the CLI and the acceptance run when none is given.
pub const DEFAULT_SEED: u64 = 2026;
