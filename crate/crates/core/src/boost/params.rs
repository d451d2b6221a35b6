use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Squared,
    Logistic,
}

impl Loss {
    pub fn code(self) -> u8 {
        match self {
            Loss::Squared => 0,
            Loss::Logistic => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Loss::Squared),
            1 => Ok(Loss::Logistic),
            _ => Err(Error::Model(format!("unknown loss code {c}"))),
        }
    }
}

/// Booster hyper-parameters. `depth` counts split levels: depth 1 grows a
/// stump, and a node at depth `depth` is always a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostParams {
    pub trees: usize,
    pub depth: usize,
    pub bins: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub eta: f64,
    pub loss: Loss,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            trees: 80,
            depth: 3,
            bins: 32,
            gamma: 0.0,
            lambda: 1.0,
            eta: 0.3,
            loss: Loss::Squared,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Param(m));
        if self.trees == 0 {
            return bad("trees must be at least 1".into());
        }
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.bins < 2 {
            return bad(format!("bins must be at least 2, got {}", self.bins));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return bad("lambda and gamma must be non-negative".into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        Ok(())
    }
}
