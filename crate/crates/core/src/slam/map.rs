use std::fmt;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::SlamError;

/// Index of an anchor type (elevator, stairs, ...). Labels live with the
/// confusion matrix configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorKind(pub usize);

impl fmt::Display for AnchorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "kind{}", self.0)
    }
}

/// A particle's belief about one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorEstimate {
    pub mu: Vector2<f64>,
    pub sigma: Matrix2<f64>,
    pub kind: AnchorKind,
}

impl AnchorEstimate {
    pub fn new(mu: Vector2<f64>, sigma: Matrix2<f64>, kind: AnchorKind) -> Self {
        Self { mu, sigma, kind }
    }

    /// An anchor whose location is known exactly.
    pub fn known(mu: Vector2<f64>, kind: AnchorKind) -> Self {
        Self::new(mu, Matrix2::zeros(), kind)
    }
}

/// `p(actual | detected)`: row `detected`, column `actual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConfusionMatrix {
    rows: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, SlamError> {
        let k = rows.len();
        if k == 0 {
            return Err(SlamError::InvalidConfusion("matrix is empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(SlamError::InvalidConfusion(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(SlamError::InvalidConfusion(format!("row {i} has entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(SlamError::InvalidConfusion(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    /// `accuracy` on the diagonal, the remainder spread evenly.
    pub fn symmetric(k: usize, accuracy: f64) -> Result<Self, SlamError> {
        if k == 1 {
            return Ok(Self::identity(1));
        }
        let off = (1.0 - accuracy) / (k - 1) as f64;
        Self::new(
            (0..k)
                .map(|i| (0..k).map(|j| if i == j { accuracy } else { off }).collect())
                .collect(),
        )
    }

    pub fn n_kinds(&self) -> usize {
        self.rows.len()
    }

    /// `p(actual | detected)`.
    pub fn p(&self, actual: AnchorKind, detected: AnchorKind) -> f64 {
        self.rows
            .get(detected.0)
            .and_then(|r| r.get(actual.0))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn row(&self, detected: AnchorKind) -> &[f64] {
        &self.rows[detected.0]
    }

    /// `p(detected | actual)` under a uniform prior over detected patterns.
    /// Used by the simulator to emit detections for a true anchor type.
    pub fn emission(&self, actual: AnchorKind) -> Vec<f64> {
        let col: Vec<f64> = self.rows.iter().map(|r| r[actual.0]).collect();
        let s: f64 = col.iter().sum();
        if s > 0.0 {
            col.into_iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / self.rows.len() as f64; self.rows.len()]
        }
    }

    /// Marginal over actual types implied by a uniform detected-pattern prior.
    pub fn actual_prior(&self) -> Vec<f64> {
        let k = self.rows.len() as f64;
        (0..self.rows.len())
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / k)
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConfusionMatrix {
    type Error = SlamError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<f64>> {
    fn from(c: ConfusionMatrix) -> Self {
        c.rows
    }
}
