//! Laboratory MANET emulation testbed.
//!
//! Nodes that can all hear each other are made to behave as if only logical
//! neighbors were in radio range. Random logical topologies are generated
//! under density, degree and connectivity constraints, compiled into
//! per-node MAC ingress filters, and enforced either on a deterministic
//! virtual medium or on real nodes through emitted iptables scripts.

pub mod addr;
pub mod adversary;
pub mod api;
pub mod backend;
pub mod emu;
pub mod probe;
pub mod registry;
pub mod rules;
pub mod scenario;
pub mod testbed;
pub mod topology;
pub mod traffic;

pub use addr::MacAddr;
pub use registry::{NodeRecord, Registry};
