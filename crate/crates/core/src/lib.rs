//! Replicated secret-sharing engine and vertical federated gradient
//! boosting for wind power forecasting.

pub mod boost;
pub mod config;
pub mod data;
pub mod error;
pub mod lasso;
pub mod metrics;
pub mod net;
pub mod party;
pub mod pipeline;
pub mod ring;
pub mod secure;
pub mod select;
pub mod sharing;

pub use error::{Error, Result};
pub use ring::{FixedCodec, RingElement};
pub use secure::{LocalTrio, SecureContext};
pub use sharing::{ReplicatedShare, ShareTensor, WordKind, ZeroSharer};
