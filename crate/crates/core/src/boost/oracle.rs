//! Centralized plaintext trainer: every party's features in one place, the
//! same binning and split rules as the federated protocol, none of the
//! cryptography. Used as the losslessness reference and as the local
//! baseline.

use serde::{Deserialize, Serialize};

use super::algo::{aggregate, best_split, gradients, leaf_weight, local_binning_ordered, minus, sample_split, ColumnOrder, GradPair, SplitChoice};
use super::model::{Boundary, BoostModel, BoundaryStore, Node, Tree};
use super::params::{BoostParams, Loss};
use crate::data::FeatureFrame;
use crate::error::{Error, Result};
use crate::net::PartyId;
use crate::ring::FixedCodec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub tree: usize,
    pub node: usize,
    pub choice: SplitChoice,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: BoostModel,
    /// One per party, in model party order.
    pub stores: Vec<BoundaryStore>,
    /// Every split taken, in training order.
    pub trace: Vec<SplitRecord>,
}

impl TrainedModel {
    pub fn predict(&self, frames: &[&FeatureFrame]) -> Result<Vec<f64>> {
        self.model.predict(frames, &self.stores)
    }
}

pub(crate) fn base_score(y: &[f64], loss: Loss) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    match loss {
        Loss::Squared => mean,
        Loss::Logistic => {
            let p = mean.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    }
}

pub(crate) fn check_inputs(frames: &[&FeatureFrame], parties: &[PartyId], y: &[f64], params: &BoostParams) -> Result<()> {
    params.validate()?;
    if frames.is_empty() || frames.len() != parties.len() {
        return Err(Error::Shape(format!("{} frames for {} parties", frames.len(), parties.len())));
    }
    if y.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(f) = frames.iter().find(|f| f.rows != y.len()) {
        return Err(Error::Shape(format!("farm {} has {} rows for {} labels", f.farm_id, f.rows, y.len())));
    }
    Ok(())
}

/// Train on `frames` (active party first) against labels `y`.
///
/// With `quantize` set, gradients are rounded to that fixed-point grid
/// before use, exactly as the federated protocol does.
pub fn oracle_train(
    frames: &[&FeatureFrame],
    parties: &[PartyId],
    y: &[f64],
    params: &BoostParams,
    quantize: Option<&FixedCodec>,
) -> Result<TrainedModel> {
    check_inputs(frames, parties, y, params)?;
    let n = y.len();
    let base = base_score(y, params.loss);
    let mut raw = vec![base; n];
    let mut stores: Vec<BoundaryStore> = parties.iter().map(|&p| BoundaryStore::new(p)).collect();
    let mut trees = Vec::with_capacity(params.trees);
    let mut trace = Vec::new();
    let orders: Vec<ColumnOrder> = frames.iter().map(|f| ColumnOrder::new(f)).collect();

    for t in 0..params.trees {
        let mut grad: GradPair = gradients(y, &raw, params.loss)?;
        if let Some(codec) = quantize {
            grad = grad.quantized(codec)?;
        }
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut queue = std::collections::VecDeque::from([(0usize, (0..n).collect::<Vec<usize>>(), 0usize)]);
        while let Some((id, rows, depth)) = queue.pop_front() {
            let mut split = None;
            if depth < params.depth {
                let mut binned = Vec::with_capacity(frames.len());
                let mut hists = Vec::with_capacity(frames.len());
                for (f, o) in frames.iter().zip(&orders) {
                    let b = local_binning_ordered(f, o, &rows, params.bins)?;
                    hists.push(aggregate(&b, &grad, params.bins));
                    binned.push(b);
                }
                if let Some(c) = best_split(&hists, params) {
                    let bounds = &binned[c.party].boundaries[c.feature];
                    let f = frames[c.party];
                    let left = sample_split(&rows, |i| f.at(i, c.feature), bounds, c.position)?;
                    stores[c.party].insert(
                        t,
                        id,
                        Boundary {
                            feature: c.feature,
                            position: c.position,
                            threshold: bounds[c.position - 1],
                        },
                    );
                    split = Some((c, left));
                }
            }
            match split {
                Some((c, left)) => {
                    let right = minus(&rows, &left);
                    let (l, r) = (nodes.len(), nodes.len() + 1);
                    nodes.extend([None, None]);
                    nodes[id] = Some(Node::Split {
                        party: c.party,
                        feature: c.feature,
                        position: c.position,
                        left: l,
                        right: r,
                    });
                    trace.push(SplitRecord { tree: t, node: id, choice: c });
                    queue.push_back((l, left, depth + 1));
                    queue.push_back((r, right, depth + 1));
                }
                None => {
                    let (g, h) = grad.sums(&rows);
                    let w = leaf_weight(g, h, params.lambda);
                    for &i in &rows {
                        raw[i] += params.eta * w;
                    }
                    nodes[id] = Some(Node::Leaf { weight: w });
                }
            }
        }
        trees.push(Tree {
            nodes: nodes.into_iter().map(|n| n.expect("every queued node resolved")).collect(),
        });
    }

    Ok(TrainedModel {
        model: BoostModel {
            params: *params,
            base_score: base,
            parties: parties.to_vec(),
            trees,
        },
        stores,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn party(k: u32) -> PartyId {
        PartyId(k)
    }

    #[test]
    fn stump_on_a_step_function() {
        let x = FeatureFrame::from_columns(1, &[(0..8).map(f64::from).collect()]);
        let y: Vec<f64> = (0..8).map(|i| if i < 4 { 0.0 } else { 1.0 }).collect();
        let p = BoostParams {
            trees: 1,
            depth: 1,
            bins: 4,
            lambda: 0.0,
            eta: 1.0,
            ..BoostParams::default()
        };
        let m = oracle_train(&[&x], &[party(1)], &y, &p, None).unwrap();
        assert_eq!(m.trace.len(), 1);
        assert_eq!(m.trace[0].choice.position, 2);
        let pred = m.predict(&[&x]).unwrap();
        for (a, b) in pred.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_gamma_leaves_single_leaf_at_base() {
        let x = FeatureFrame::from_columns(1, &[(0..20).map(f64::from).collect()]);
        let y: Vec<f64> = (0..20).map(|i| (i % 3) as f64).collect();
        let p = BoostParams {
            trees: 1,
            depth: 1,
            gamma: 1e9,
            ..BoostParams::default()
        };
        let m = oracle_train(&[&x], &[party(1)], &y, &p, None).unwrap();
        assert_eq!(m.model.trees[0].nodes.len(), 1);
        let mean = y.iter().sum::<f64>() / 20.0;
        // zero mean gradient at the base score, so the leaf adds nothing
        for v in m.predict(&[&x]).unwrap() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_is_respected_and_training_loss_drops() {
        let c0: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64).collect();
        let c1: Vec<f64> = (0..200).map(|i| ((i * 53) % 89) as f64).collect();
        let y: Vec<f64> = c0.iter().zip(&c1).map(|(a, b)| (a / 50.0).sin() + b / 89.0).collect();
        let a = FeatureFrame::from_columns(1, &[c0]);
        let b = FeatureFrame::from_columns(2, &[c1]);
        let p = BoostParams {
            trees: 20,
            depth: 2,
            bins: 16,
            ..BoostParams::default()
        };
        let m = oracle_train(&[&a, &b], &[party(1), party(2)], &y, &p, None).unwrap();
        assert!(m.model.trees.iter().all(|t| t.depth() <= 2));
        let pred = m.predict(&[&a, &b]).unwrap();
        let mse: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 200.0;
        let mean = y.iter().sum::<f64>() / 200.0;
        let var: f64 = y.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 200.0;
        assert!(mse < 0.2 * var, "mse {mse} var {var}");
        // both parties are used
        assert!(m.trace.iter().any(|r| r.choice.party == 0));
        assert!(m.trace.iter().any(|r| r.choice.party == 1));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let x = FeatureFrame::from_columns(1, &[vec![1.0, 2.0]]);
        let p = BoostParams::default();
        assert!(matches!(oracle_train(&[&x], &[party(1)], &[1.0], &p, None), Err(Error::Shape(_))));
        let bad = BoostParams { depth: 0, ..p };
        assert!(matches!(oracle_train(&[&x], &[party(1)], &[1.0, 2.0], &bad, None), Err(Error::Param(_))));
    }
}
