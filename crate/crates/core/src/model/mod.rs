//! Network definition: architecture spec, layers, wiring, checkpoints.

pub mod checkpoint;
pub mod layers;
pub mod network;
pub mod spec;

pub use checkpoint::Checkpoint;
pub use layers::{Afm, AfmOutput, AttentionGate, Conv, GateOutput, Mam, MamOutput};
pub use network::{update_running_stats, ForwardOutput, Network};
pub use spec::{AttentionGateSpec, ModelSpec, Variant};
