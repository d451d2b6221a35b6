//! Party roles, topology, and the ordered reliable transport between them.
//!
//! No transport security is applied here. Links are assumed to run over
//! channels that are already authenticated and encrypted by the deployment.

pub mod audit;
pub mod channel;
pub mod frame;
pub mod mesh;
pub mod metrics;
pub mod topology;

pub use audit::{Audit, AuditReport};
pub use channel::{Endpoint, DEFAULT_RECV_TIMEOUT};
pub use frame::{Frame, FrameKind};
pub use mesh::{connect, join_tcp, Mesh, MeshOptions, NetObserver, PartyNet, TransportMode};
pub use metrics::{LinkStats, MeshMetrics, MetricsSnapshot, PhaseTiming};
pub use topology::{PartyId, PartyTopology, Role};
