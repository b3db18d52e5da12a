//! Quantum memories: single-slot buffers and hop-by-hop delivery.

mod buffer;
mod hop;

pub use buffer::{survival_probability, QuantumBuffer, ReleaseOutcome};
pub use hop::{coupling_graph, memory_id_for, place_memories, run_hop_by_hop, CouplingGraph, MemoryPlacement};

#[cfg(test)]
mod tests;
