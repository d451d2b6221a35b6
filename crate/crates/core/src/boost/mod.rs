//! Gradient-boosted trees over vertically partitioned features.
//!
//! The active party owns the labels and the tree structure; passive parties
//! own their features and the thresholds on them. [`oracle_train`] is the
//! co-located plaintext reference, [`train_federated`] the multi-party
//! protocol, and both produce the same model.

mod algo;
mod model;
mod oracle;
mod params;
mod protocol;

pub use algo::{
    aggregate, assign_bin, best_split, gradients, leaf_weight, local_binning, local_binning_ordered, minus, quantile_boundaries, sample_split, split_gain, BinFrame, ColumnOrder, GradPair, Histogram, SplitChoice,
};
pub use model::{Boundary, BoostModel, BoundaryStore, Node, Tree};
pub use oracle::{oracle_train, SplitRecord, TrainedModel};
pub use params::{BoostParams, Loss};
pub use protocol::{
    federation_topology, node_session, predict_federated, run_active, run_active_predict, run_passive, run_passive_predict, run_server, train_federated, AggregationMode, FederatedRun,
    FederationOptions, ProtocolOptions,
};
