//! Loss functions with exact first and second derivatives in the prediction,
//! plus the mixed derivative ∂ℓ′/∂y used to normalize prediction Jacobians.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `½ (y − z)²`
    Squared,
    /// `log(1 + exp(−y z))` for labels `y ∈ {−1, +1}`
    Logistic,
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl Loss {
    pub fn value(self, y: f64, z: f64) -> f64 {
        match self {
            Loss::Squared => 0.5 * (y - z) * (y - z),
            Loss::Logistic => {
                let u = -y * z;
                // log(1 + e^u) evaluated stably on both sides
                if u > 0.0 {
                    u + (-u).exp().ln_1p()
                } else {
                    u.exp().ln_1p()
                }
            }
        }
    }

    /// ℓ′ = ∂ℓ/∂z
    pub fn d1(self, y: f64, z: f64) -> f64 {
        match self {
            Loss::Squared => z - y,
            Loss::Logistic => -y * sigmoid(-y * z),
        }
    }

    /// ℓ″ = ∂²ℓ/∂z²; strictly positive everywhere for the supported losses
    /// (logistic assumes nonzero labels).
    pub fn d2(self, y: f64, z: f64) -> f64 {
        match self {
            Loss::Squared => 1.0,
            Loss::Logistic => {
                let s = sigmoid(-y * z);
                y * y * s * (1.0 - s)
            }
        }
    }

    /// ∂ℓ′/∂y
    pub fn d1_dy(self, y: f64, z: f64) -> f64 {
        match self {
            Loss::Squared => -1.0,
            Loss::Logistic => {
                let s = sigmoid(-y * z);
                -s + y * z * s * (1.0 - s)
            }
        }
    }
}
