//! Timing side-channel analysis over functional data.

pub mod attacker;
pub mod benchgen;
pub mod cluster;
pub mod discriminant;
pub mod error;
pub mod fda;
pub mod mitigation;
pub mod pipeline;
pub mod trace;

pub use attacker::{kd_bound, leakage_bits, match_remote, MatchReport, RemoteObservation};
pub use benchgen::{generate, generate_default, BenchKind, BenchModel};
pub use cluster::{fd_clustering, Algorithm, ClusterResult};
pub use discriminant::{Discriminant, TreeParams};
pub use error::{Error, Result};
pub use fda::{BasisSpec, DistanceSpec, FunctionalCurve, Norm};
pub use mitigation::MitigationScheme;
pub use pipeline::{run_pipeline, write_bundle, PipelineConfig, PipelineOutcome, Stage, StageError, TraceSource};
pub use trace::{ExecutionTrace, HyperTrace, TraceSet};
