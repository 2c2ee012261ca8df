//! Composite regularizers of the form `r(β) = Σ_k r_k(A_k β + c_k)`, the
//! active sets where each non-smooth term is differentiable, and the Hessian
//! of the smooth-at-the-fit part.

use crate::linops::{LinOp, SymFnOp};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegularizerError {
    #[error("invalid regularizer: {0}")]
    Invalid(String),
    #[error("group {group} is active but its norm {norm:.3e} is below threshold")]
    DegenerateGroup { group: usize, norm: f64 },
}

/// One term of a composite regularizer.
#[derive(Debug, Clone, PartialEq)]
pub enum RegTerm {
    /// `½ βᵀ G β`
    SmoothQuadratic { matrix: Array2<f64> },
    /// `(w/2) ‖β‖²`
    SquaredL2 { weight: f64 },
    /// `w ‖β‖₁`
    L1 { weight: f64 },
    /// `w ‖A β + c‖₁`, one row of `A` per absolute-value component
    L1Affine { matrix: Array2<f64>, offset: Array1<f64>, weight: f64 },
    /// `w Σ_k ‖β_{g_k}‖₂` over disjoint index groups
    GroupL2 { groups: Vec<Vec<usize>>, weight: f64 },
}

impl RegTerm {
    pub fn is_smooth(&self) -> bool {
        matches!(self, RegTerm::SmoothQuadratic { .. } | RegTerm::SquaredL2 { .. })
    }

    pub fn value(&self, beta: ArrayView1<f64>) -> f64 {
        match self {
            RegTerm::SmoothQuadratic { matrix } => 0.5 * beta.dot(&matrix.dot(&beta)),
            RegTerm::SquaredL2 { weight } => 0.5 * weight * beta.dot(&beta),
            RegTerm::L1 { weight } => weight * beta.iter().map(|b| b.abs()).sum::<f64>(),
            RegTerm::L1Affine { matrix, offset, weight } => {
                let t = &matrix.dot(&beta) + offset;
                weight * t.iter().map(|v| v.abs()).sum::<f64>()
            }
            RegTerm::GroupL2 { groups, weight } => {
                weight
                    * groups
                        .iter()
                        .map(|g| g.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt())
                        .sum::<f64>()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regularizer {
    pub terms: Vec<RegTerm>,
}

impl Regularizer {
    pub fn new(terms: Vec<RegTerm>) -> Result<Self, RegularizerError> {
        let reg = Self { terms };
        reg.validate()?;
        Ok(reg)
    }

    pub fn ridge(weight: f64) -> Self {
        Self { terms: vec![RegTerm::SquaredL2 { weight }] }
    }

    pub fn lasso(weight: f64) -> Self {
        Self { terms: vec![RegTerm::L1 { weight }] }
    }

    pub fn elastic_net(l2_weight: f64, l1_weight: f64) -> Self {
        Self {
            terms: vec![RegTerm::SquaredL2 { weight: l2_weight }, RegTerm::L1 { weight: l1_weight }],
        }
    }

    /// `w ‖D β‖₁` with `D` the (p−1)×p first-difference matrix.
    pub fn first_difference(weight: f64, p: usize) -> Self {
        let mut d = Array2::<f64>::zeros((p.saturating_sub(1), p));
        for i in 0..p.saturating_sub(1) {
            d[[i, i]] = -1.0;
            d[[i, i + 1]] = 1.0;
        }
        Self {
            terms: vec![RegTerm::L1Affine { matrix: d, offset: Array1::zeros(p.saturating_sub(1)), weight }],
        }
    }

    pub fn group_lasso(groups: Vec<Vec<usize>>, weight: f64) -> Self {
        Self { terms: vec![RegTerm::GroupL2 { groups, weight }] }
    }

    pub fn validate(&self) -> Result<(), RegularizerError> {
        for term in &self.terms {
            match term {
                RegTerm::SquaredL2 { weight }
                | RegTerm::L1 { weight }
                | RegTerm::GroupL2 { weight, .. }
                | RegTerm::L1Affine { weight, .. } => {
                    if *weight < 0.0 {
                        return Err(RegularizerError::Invalid("negative weight".into()));
                    }
                }
                RegTerm::SmoothQuadratic { matrix } => {
                    if matrix.nrows() != matrix.ncols() {
                        return Err(RegularizerError::Invalid("G must be square".into()));
                    }
                    let asym = (matrix - &matrix.t()).mapv(f64::abs).sum();
                    if asym > 1e-8 * (1.0 + matrix.mapv(f64::abs).sum()) {
                        return Err(RegularizerError::Invalid("G must be symmetric".into()));
                    }
                }
            }
            if let RegTerm::L1Affine { matrix, offset, .. } = term {
                if matrix.nrows() != offset.len() {
                    return Err(RegularizerError::Invalid(
                        "l1_affine offset length must match the number of rows".into(),
                    ));
                }
            }
            if let RegTerm::GroupL2 { groups, .. } = term {
                let mut seen = std::collections::HashSet::new();
                for g in groups {
                    for &j in g {
                        if !seen.insert(j) {
                            return Err(RegularizerError::Invalid(format!(
                                "group index {j} appears in more than one group"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, beta: ArrayView1<f64>) -> f64 {
        self.terms.iter().map(|t| t.value(beta)).sum()
    }

    /// Total weight of plain `SquaredL2` terms (the λ of the elastic net).
    pub fn squared_l2_weight(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| match t {
                RegTerm::SquaredL2 { weight } => *weight,
                _ => 0.0,
            })
            .sum()
    }

    pub fn has_nonsmooth(&self) -> bool {
        self.terms.iter().any(|t| !t.is_smooth())
    }
}

/// Thresholds realizing the "locally constant active set" hypothesis: a
/// component counts as active when its magnitude exceeds both an absolute
/// floor and a fraction of the largest magnitude in its term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ActiveSetPolicy {
    pub relative_threshold: f64,
    pub absolute_threshold: f64,
}

impl Default for ActiveSetPolicy {
    fn default() -> Self {
        Self { relative_threshold: 1e-8, absolute_threshold: 1e-10 }
    }
}

impl ActiveSetPolicy {
    fn cut(&self, max_measure: f64) -> f64 {
        self.absolute_threshold.max(self.relative_threshold * max_measure)
    }
}

/// Active-set descriptor for one regularizer term.
#[derive(Debug, Clone, PartialEq)]
pub enum ActiveSet {
    /// Smooth terms are always part of the differentiable set.
    Smooth,
    /// Indices of the active (nonzero-measure) components, out of `len`.
    Indices { active: Vec<usize>, len: usize },
}

impl ActiveSet {
    pub fn active_indices(&self) -> &[usize] {
        match self {
            ActiveSet::Smooth => &[],
            ActiveSet::Indices { active, .. } => active,
        }
    }

    pub fn inactive_indices(&self) -> Vec<usize> {
        match self {
            ActiveSet::Smooth => Vec::new(),
            ActiveSet::Indices { active, len } => {
                let mut mask = vec![true; *len];
                for &j in active {
                    mask[j] = false;
                }
                (0..*len).filter(|&j| mask[j]).collect()
            }
        }
    }
}

/// Per-component measure of non-differentiability for one term:
/// `|β_j|`, `|a_jᵀβ + c_j|`, or `‖β_g‖` depending on the term kind.
pub fn term_measures(term: &RegTerm, beta: ArrayView1<f64>) -> Option<Array1<f64>> {
    match term {
        RegTerm::SmoothQuadratic { .. } | RegTerm::SquaredL2 { .. } => None,
        RegTerm::L1 { .. } => Some(beta.mapv(f64::abs)),
        RegTerm::L1Affine { matrix, offset, .. } => {
            Some((&matrix.dot(&beta) + offset).mapv(f64::abs))
        }
        RegTerm::GroupL2 { groups, .. } => Some(Array1::from_iter(
            groups.iter().map(|g| g.iter().map(|&j| beta[j] * beta[j]).sum::<f64>().sqrt()),
        )),
    }
}

/// Compute the per-term active sets of `beta` under `policy`.
pub fn active_sets(reg: &Regularizer, beta: ArrayView1<f64>, policy: &ActiveSetPolicy) -> Vec<ActiveSet> {
    reg.terms
        .iter()
        .map(|term| match term_measures(term, beta) {
            None => ActiveSet::Smooth,
            Some(measures) => {
                let max_m = measures.iter().fold(0.0f64, |m, v| m.max(*v));
                let cut = policy.cut(max_m);
                let active =
                    (0..measures.len()).filter(|&j| measures[j] > cut).collect::<Vec<_>>();
                ActiveSet::Indices { active, len: measures.len() }
            }
        })
        .collect()
}

/// Hessian of the active part of the regularizer,
/// `Σ_{k∈𝒮} A_kᵀ ∇²r_k(A_k β + c_k) A_k`, as a symmetric operator.
///
/// ℓ1-type terms contribute nothing on their active components (piecewise
/// linear); an active ℓ2 group contributes
/// `(w/‖β_g‖)(Π_g − Π_g β βᵀ Π_g / ‖β_g‖²)`.
pub fn regularizer_hessian(
    reg: &Regularizer,
    beta: ArrayView1<f64>,
    active: &[ActiveSet],
    policy: &ActiveSetPolicy,
) -> Result<RegHessian, RegularizerError> {
    let p = beta.len();
    let mut quadratic: Option<Array2<f64>> = None;
    let mut l2_weight = 0.0;
    let mut group_parts: Vec<(f64, Vec<usize>, Array1<f64>)> = Vec::new();

    for (term, act) in reg.terms.iter().zip(active) {
        match term {
            RegTerm::SmoothQuadratic { matrix } => {
                quadratic = Some(match quadratic.take() {
                    Some(q) => q + matrix,
                    None => matrix.clone(),
                });
            }
            RegTerm::SquaredL2 { weight } => l2_weight += weight,
            RegTerm::L1 { .. } | RegTerm::L1Affine { .. } => {}
            RegTerm::GroupL2 { groups, weight } => {
                for &k in act.active_indices() {
                    let g = &groups[k];
                    let mut bg = Array1::<f64>::zeros(g.len());
                    for (slot, &j) in g.iter().enumerate() {
                        bg[slot] = beta[j];
                    }
                    let norm = bg.dot(&bg).sqrt();
                    if norm <= policy.absolute_threshold {
                        return Err(RegularizerError::DegenerateGroup { group: k, norm });
                    }
                    group_parts.push((*weight, g.clone(), bg));
                }
            }
        }
    }

    Ok(RegHessian { p, quadratic, l2_weight, group_parts })
}

/// Materialized form of the regularizer Hessian; cheap to apply and to
/// densify.
pub struct RegHessian {
    p: usize,
    quadratic: Option<Array2<f64>>,
    l2_weight: f64,
    /// (weight, group indices, β restricted to the group)
    group_parts: Vec<(f64, Vec<usize>, Array1<f64>)>,
}

impl RegHessian {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn is_zero(&self) -> bool {
        self.quadratic.is_none() && self.l2_weight == 0.0 && self.group_parts.is_empty()
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let mut out = match &self.quadratic {
            Some(q) => q.dot(&x),
            None => Array1::zeros(self.p),
        };
        if self.l2_weight != 0.0 {
            out.scaled_add(self.l2_weight, &x);
        }
        for (w, g, bg) in &self.group_parts {
            let norm = bg.dot(bg).sqrt();
            let mut xg = Array1::<f64>::zeros(g.len());
            for (slot, &j) in g.iter().enumerate() {
                xg[slot] = x[j];
            }
            let coeff = w / norm;
            let proj = bg.dot(&xg) / (norm * norm);
            for (slot, &j) in g.iter().enumerate() {
                out[j] += coeff * (xg[slot] - proj * bg[slot]);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = match &self.quadratic {
            Some(q) => q.clone(),
            None => Array2::zeros((self.p, self.p)),
        };
        for i in 0..self.p {
            out[[i, i]] += self.l2_weight;
        }
        for (w, g, bg) in &self.group_parts {
            let norm = bg.dot(bg).sqrt();
            let coeff = w / norm;
            for (si, &i) in g.iter().enumerate() {
                out[[i, i]] += coeff;
                for (sj, &j) in g.iter().enumerate() {
                    out[[i, j]] -= coeff * bg[si] * bg[sj] / (norm * norm);
                }
            }
        }
        out
    }

    pub fn as_operator(self: Arc<Self>) -> Arc<dyn LinOp> {
        let p = self.p;
        let me = self;
        Arc::new(SymFnOp::new(p, move |x| me.apply(x)))
    }
}
