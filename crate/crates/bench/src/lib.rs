//! Benchmark fixtures.

use funchan::benchgen::{branch_loop_secrets, generate, generate_default, BenchKind, BenchModel};
use funchan::trace::{build_hypertraces, default_basis, HyperTrace, TraceSet};

/// Branch-and-loop traces with `variants` per arm and `per_variant` secrets each.
pub fn branch_loop(variants: usize, per_variant: usize) -> TraceSet {
    let model = BenchModel::new(BenchKind::BranchLoop { variants });
    generate(&model, &branch_loop_secrets(variants, per_variant), &model.default_publics()).unwrap()
}

pub fn jetty() -> TraceSet {
    generate_default(&BenchModel::new(BenchKind::StrcmpJetty { a: 0.02, b: 0.005 })).unwrap()
}

pub fn hypertraces(traces: &TraceSet) -> Vec<HyperTrace> {
    build_hypertraces(traces, &default_basis(traces, None).unwrap()).unwrap()
}
