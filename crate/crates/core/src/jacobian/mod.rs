//! Jacobian–vector-product oracles.
//!
//! For a fitted model, the rescaled prediction Jacobian
//! `J̃ = X (XᵀH_ℓX + ∇²r)⁻¹ XᵀH_ℓ` acts on probe vectors through an
//! equality-constrained quadratic program: minimize
//! `½vᵀ(XᵀH_ℓX + Σ_{k∈𝒮} A_kᵀ∇²r_k A_k)v − vᵀXᵀH_ℓz` subject to `A_k v = 0`
//! for the inactive terms, giving `J̃z = Xv*`. Each regularizer family gets a
//! closed-form fast path; the generic KKT route covers the rest and doubles
//! as a cross-check in tests.

use crate::data::Dataset;
use crate::linops::{
    minres_solve_with_info, prune_redundant_rows, prune_tol, KktMatrix, KktSolver, LdlFactor,
    LinOp, LinopError, Quadratic, SolveMethod, SolverConfig, SymFnOp,
};
use crate::model::{
    regularizer_hessian, ActiveSet, ActiveSetPolicy, FittedModel, RegHessian, RegTerm,
    Representation,
};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JacobianError {
    #[error("unsupported model for JVP construction: {0}")]
    UnsupportedSpec(String),
    #[error("active design is rank deficient and no ridge term regularizes it")]
    SingularSystem,
    #[error("prediction derivative ∂ℓ′/∂y vanishes at sample {0}")]
    ZeroDerivative(usize),
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error(transparent)]
    Regularizer(#[from] crate::model::RegularizerError),
}

/// Which formula backs the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JvpRoute {
    Ridge,
    ElasticNetClosedForm,
    GeneralizedL1Qp,
    GroupLassoClosedForm,
    KernelRidge,
    GenericQp,
    NormalizedBlackBox,
}

impl std::fmt::Display for JvpRoute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            JvpRoute::Ridge => "ridge",
            JvpRoute::ElasticNetClosedForm => "elastic_net_closed_form",
            JvpRoute::GeneralizedL1Qp => "generalized_l1_qp",
            JvpRoute::GroupLassoClosedForm => "group_lasso_closed_form",
            JvpRoute::KernelRidge => "kernel_ridge",
            JvpRoute::GenericQp => "generic_qp",
            JvpRoute::NormalizedBlackBox => "normalized_black_box",
        };
        write!(f, "{s}")
    }
}

#[derive(Default)]
struct Counters {
    factorizations: AtomicUsize,
    iterative_solves: AtomicUsize,
    applies: AtomicUsize,
}

/// Solve-effort accounting: `factorizations` counts cached direct
/// factorizations (done once per oracle), `iterative_solves` counts full
/// iterative solves (one per probe on matrix-free routes), `applies` counts
/// oracle applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveCounts {
    pub factorizations: usize,
    pub iterative_solves: usize,
    pub applies: usize,
}

impl SolveCounts {
    /// Number of full-dimension linear solves performed: factorizations plus
    /// iterative solves. Cached triangular backsolves are not full solves.
    pub fn linear_solves(&self) -> usize {
        self.factorizations + self.iterative_solves
    }
}

enum Inner<'a> {
    /// Empty active set: J̃ = 0.
    Zero,
    /// Cor.-1 closed form on the active columns, cached factorization of
    /// `X_𝒮ᵀH X_𝒮 + λI`.
    EnDirect { x_s: Array2<f64>, factor: LdlFactor },
    /// Same system solved matrix-free by CG (sparse / large active sets).
    EnIterative { data: &'a Dataset, active: Vec<usize>, l2: f64, cfg: SolverConfig },
    /// Generic KKT with a cached direct factorization of the saddle matrix.
    KktDirect { data: &'a Dataset, solver: KktSolver },
    /// Generic KKT solved per-probe by MINRES (or CG when unconstrained).
    KktIterative {
        data: &'a Dataset,
        reg_hess: Arc<RegHessian>,
        constraints: Array2<f64>,
        cfg: SolverConfig,
    },
    /// Cor.-3 reduced system on the active-group coordinates; falls back to
    /// MINRES on the dense reduced matrix when it is singular, matching the
    /// pseudo-inverse in the closed form (the näive solution differences lie
    /// in null(X_A), so X_A w is invariant).
    Group { x_a: Array2<f64>, reduced: Array2<f64>, factor: Option<LdlFactor>, cfg: SolverConfig },
    /// Cor.-4 kernel form: J̃ = K (K + λH⁻¹)⁻¹.
    Kernel { gram: Arc<Array2<f64>>, factor: LdlFactor },
    /// Black-box ∂ŷ/∂y rescaled into J̃.
    Normalized { op: Arc<dyn LinOp>, scale: Array1<f64> },
}

/// A linear operator `z ↦ J̃z` with cached solver state shared across probes.
pub struct JvpOracle<'a> {
    n: usize,
    route: JvpRoute,
    /// ℓ″ at the fit, applied on the right of every route.
    h: Array1<f64>,
    inner: Inner<'a>,
    counters: Counters,
}

const DENSE_GATHER_LIMIT: usize = 4000;

impl<'a> JvpOracle<'a> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn route(&self) -> JvpRoute {
        self.route
    }

    pub fn solve_counts(&self) -> SolveCounts {
        SolveCounts {
            factorizations: self.counters.factorizations.load(Ordering::Relaxed),
            iterative_solves: self.counters.iterative_solves.load(Ordering::Relaxed),
            applies: self.counters.applies.load(Ordering::Relaxed),
        }
    }

    /// Build the cheapest valid oracle for the fitted model.
    pub fn build(
        model: &'a FittedModel,
        data: &'a Dataset,
        policy: &ActiveSetPolicy,
        cfg: &SolverConfig,
    ) -> Result<Self, JacobianError> {
        if let Representation::Dual { gram } = &model.representation {
            return Self::kernel(model, Arc::clone(gram), cfg);
        }
        let terms = &model.regularizer.terms;
        let nonsmooth: Vec<usize> =
            (0..terms.len()).filter(|&i| !terms[i].is_smooth()).collect();
        let has_quad = terms.iter().any(|t| matches!(t, RegTerm::SmoothQuadratic { .. }));
        match nonsmooth.as_slice() {
            [] => Self::generic_with_route(model, data, policy, cfg, JvpRoute::Ridge),
            [idx] => match &terms[*idx] {
                RegTerm::L1 { .. } if !has_quad => Self::elastic_net(model, data, policy, cfg),
                RegTerm::L1Affine { .. } => {
                    Self::generic_with_route(model, data, policy, cfg, JvpRoute::GeneralizedL1Qp)
                }
                RegTerm::GroupL2 { .. } if !has_quad => {
                    Self::group_lasso(model, data, policy, cfg)
                }
                _ => Self::generic_with_route(model, data, policy, cfg, JvpRoute::GenericQp),
            },
            _ => Self::generic_with_route(model, data, policy, cfg, JvpRoute::GenericQp),
        }
    }

    /// Cor.-1 route for lasso / elastic net / ridge-as-full-active-set.
    pub fn elastic_net(
        model: &'a FittedModel,
        data: &'a Dataset,
        policy: &ActiveSetPolicy,
        cfg: &SolverConfig,
    ) -> Result<Self, JacobianError> {
        let n = data.n_samples();
        let h = model.hessian_weights.clone();
        let l2 = model.regularizer.squared_l2_weight();
        let sets = model.active_set(policy);
        let mut active: Option<Vec<usize>> = None;
        for (term, set) in model.regularizer.terms.iter().zip(&sets) {
            if let RegTerm::L1 { .. } = term {
                active = Some(set.active_indices().to_vec());
            }
        }
        // Ridge has no l1 term: every column is active.
        let active = active.unwrap_or_else(|| (0..data.n_features()).collect());
        if active.is_empty() {
            return Ok(Self {
                n,
                route: JvpRoute::ElasticNetClosedForm,
                h,
                inner: Inner::Zero,
                counters: Counters::default(),
            });
        }

        let route = if model.regularizer.has_nonsmooth() {
            JvpRoute::ElasticNetClosedForm
        } else {
            JvpRoute::Ridge
        };
        let use_direct = match cfg.method {
            SolveMethod::Cg | SolveMethod::Minres => false,
            SolveMethod::DirectLdl => true,
            SolveMethod::Auto => active.len() <= DENSE_GATHER_LIMIT,
        };
        if use_direct {
            let x_s = data.x.gather_columns(&active);
            let weighted = &x_s * &h.view().insert_axis(Axis(1));
            let mut normal = x_s.t().dot(&weighted);
            for i in 0..active.len() {
                normal[[i, i]] += l2;
            }
            let factor = LdlFactor::new(&normal).map_err(|e| match e {
                LinopError::SingularMatrix { .. } if l2 == 0.0 => JacobianError::SingularSystem,
                other => JacobianError::Linop(other),
            })?;
            let counters = Counters::default();
            counters.factorizations.store(1, Ordering::Relaxed);
            Ok(Self { n, route, h, inner: Inner::EnDirect { x_s, factor }, counters })
        } else {
            Ok(Self {
                n,
                route,
                h,
                inner: Inner::EnIterative { data, active, l2, cfg: *cfg },
                counters: Counters::default(),
            })
        }
    }

    /// Cor.-3 route: reduced solve on the active-group coordinates.
    pub fn group_lasso(
        model: &'a FittedModel,
        data: &'a Dataset,
        policy: &ActiveSetPolicy,
        cfg: &SolverConfig,
    ) -> Result<Self, JacobianError> {
        let n = data.n_samples();
        let h = model.hessian_weights.clone();
        let l2 = model.regularizer.squared_l2_weight();
        let sets = model.active_set(policy);
        let mut coords: Vec<usize> = Vec::new();
        let mut group_hess: Vec<(f64, Vec<usize>, Array1<f64>)> = Vec::new();
        for (term, set) in model.regularizer.terms.iter().zip(&sets) {
            if let RegTerm::GroupL2 { groups, weight } = term {
                for &k in set.active_indices() {
                    let g = &groups[k];
                    let bg = Array1::from_iter(g.iter().map(|&j| model.coefficients[j]));
                    let norm = bg.dot(&bg).sqrt();
                    if norm <= policy.absolute_threshold {
                        return Err(JacobianError::Regularizer(
                            crate::model::RegularizerError::DegenerateGroup { group: k, norm },
                        ));
                    }
                    group_hess.push((*weight, g.clone(), bg));
                    coords.extend_from_slice(g);
                }
            }
        }
        if coords.is_empty() {
            return Ok(Self {
                n,
                route: JvpRoute::GroupLassoClosedForm,
                h,
                inner: Inner::Zero,
                counters: Counters::default(),
            });
        }
        coords.sort_unstable();
        let pos: std::collections::HashMap<usize, usize> =
            coords.iter().enumerate().map(|(slot, &j)| (j, slot)).collect();

        let x_a = data.x.gather_columns(&coords);
        let weighted = &x_a * &h.view().insert_axis(Axis(1));
        let mut reduced = x_a.t().dot(&weighted);
        for i in 0..coords.len() {
            reduced[[i, i]] += l2;
        }
        for (w, g, bg) in &group_hess {
            let norm = bg.dot(bg).sqrt();
            let coeff = w / norm;
            for (si, &ji) in g.iter().enumerate() {
                let a = pos[&ji];
                reduced[[a, a]] += coeff;
                for (sj, &jj) in g.iter().enumerate() {
                    let b = pos[&jj];
                    reduced[[a, b]] -= coeff * bg[si] * bg[sj] / (norm * norm);
                }
            }
        }
        let factor = LdlFactor::new(&reduced).ok();
        let counters = Counters::default();
        if factor.is_some() {
            counters.factorizations.store(1, Ordering::Relaxed);
        }
        Ok(Self {
            n,
            route: JvpRoute::GroupLassoClosedForm,
            h,
            inner: Inner::Group { x_a, reduced, factor, cfg: *cfg },
            counters,
        })
    }

    /// Cor.-4 route: J̃ = K (K + λH⁻¹)⁻¹ for kernel models.
    pub fn kernel(
        model: &FittedModel,
        gram: Arc<Array2<f64>>,
        _cfg: &SolverConfig,
    ) -> Result<Self, JacobianError> {
        let n = gram.nrows();
        let lambda = model.regularizer.squared_l2_weight();
        if model.regularizer.has_nonsmooth() || lambda <= 0.0 {
            return Err(JacobianError::UnsupportedSpec(
                "kernel route requires a pure ridge penalty".into(),
            ));
        }
        let h = model.hessian_weights.clone();
        if h.iter().any(|&v| v <= 0.0) {
            return Err(JacobianError::UnsupportedSpec(
                "kernel route requires strictly positive loss curvature".into(),
            ));
        }
        let mut shifted = (*gram).clone();
        for i in 0..n {
            shifted[[i, i]] += lambda / h[i];
        }
        let factor = LdlFactor::new(&shifted)?;
        let counters = Counters::default();
        counters.factorizations.store(1, Ordering::Relaxed);
        Ok(Self {
            n,
            route: JvpRoute::KernelRidge,
            h,
            inner: Inner::Kernel { gram, factor },
            counters,
        })
    }

    /// Generic Thm.-2 KKT route; also used to cross-check the fast paths.
    pub fn generic(
        model: &'a FittedModel,
        data: &'a Dataset,
        policy: &ActiveSetPolicy,
        cfg: &SolverConfig,
    ) -> Result<Self, JacobianError> {
        Self::generic_with_route(model, data, policy, cfg, JvpRoute::GenericQp)
    }

    fn generic_with_route(
        model: &'a FittedModel,
        data: &'a Dataset,
        policy: &ActiveSetPolicy,
        cfg: &SolverConfig,
        route: JvpRoute,
    ) -> Result<Self, JacobianError> {
        if model.is_kernel() {
            return Err(JacobianError::UnsupportedSpec(
                "generic route needs an explicit feature representation".into(),
            ));
        }
        let n = data.n_samples();
        let p = data.n_features();
        let h = model.hessian_weights.clone();
        let sets = model.active_set(policy);
        let reg_hess = Arc::new(regularizer_hessian(
            &model.regularizer,
            model.coefficients.view(),
            &sets,
            policy,
        )?);

        // Constraint rows: A_k v = 0 for every inactive component of every
        // non-smooth term.
        let mut rows: Vec<Array1<f64>> = Vec::new();
        for (term, set) in model.regularizer.terms.iter().zip(&sets) {
            match (term, set) {
                (RegTerm::L1 { .. }, ActiveSet::Indices { .. }) => {
                    for j in set.inactive_indices() {
                        let mut e = Array1::<f64>::zeros(p);
                        e[j] = 1.0;
                        rows.push(e);
                    }
                }
                (RegTerm::L1Affine { matrix, .. }, ActiveSet::Indices { .. }) => {
                    for j in set.inactive_indices() {
                        rows.push(matrix.row(j).to_owned());
                    }
                }
                (RegTerm::GroupL2 { groups, .. }, ActiveSet::Indices { .. }) => {
                    for k in set.inactive_indices() {
                        for &j in &groups[k] {
                            let mut e = Array1::<f64>::zeros(p);
                            e[j] = 1.0;
                            rows.push(e);
                        }
                    }
                }
                _ => {}
            }
        }
        let constraints = if rows.is_empty() {
            Array2::<f64>::zeros((0, p))
        } else {
            let mut m = Array2::<f64>::zeros((rows.len(), p));
            for (r, row) in rows.iter().enumerate() {
                m.row_mut(r).assign(row);
            }
            prune_redundant_rows(&m, prune_tol(&m))
        };
        let q = constraints.nrows();

        let use_direct = match cfg.method {
            SolveMethod::DirectLdl => true,
            SolveMethod::Cg | SolveMethod::Minres => false,
            SolveMethod::Auto => data.x.is_dense() && p + q < DENSE_GATHER_LIMIT,
        };
        if use_direct {
            let xd = data.x.to_dense();
            let weighted = &xd * &h.view().insert_axis(Axis(1));
            let mut p_dense = xd.t().dot(&weighted);
            p_dense += &reg_hess.to_dense();
            let solver = KktSolver::build(
                KktMatrix { quadratic: Quadratic::Dense(p_dense), constraints },
                &SolverConfig { method: SolveMethod::DirectLdl, ..*cfg },
            )?;
            let counters = Counters::default();
            counters.factorizations.store(1, Ordering::Relaxed);
            Ok(Self { n, route, h, inner: Inner::KktDirect { data, solver }, counters })
        } else {
            Ok(Self {
                n,
                route,
                h,
                inner: Inner::KktIterative { data, reg_hess, constraints, cfg: *cfg },
                counters: Counters::default(),
            })
        }
    }

    /// Wrap a black-box prediction Jacobian `J = ∂ŷ/∂y` into a J̃ oracle via
    /// the column scaling `J̃ = J · diag(−ℓ″/∂ℓ′∂y)`.
    pub fn normalized(
        j_apply: Arc<dyn LinOp>,
        h: &Array1<f64>,
        dy: &Array1<f64>,
    ) -> Result<Self, JacobianError> {
        let n = j_apply.rows();
        for (i, &v) in dy.iter().enumerate() {
            if v == 0.0 {
                return Err(JacobianError::ZeroDerivative(i));
            }
        }
        let scale = Array1::from_shape_fn(n, |i| -h[i] / dy[i]);
        Ok(Self {
            n,
            route: JvpRoute::NormalizedBlackBox,
            h: h.clone(),
            inner: Inner::Normalized { op: j_apply, scale },
            counters: Counters::default(),
        })
    }

    /// Apply the oracle: `z ↦ J̃z`.
    pub fn apply(&self, z: ArrayView1<f64>) -> Result<Array1<f64>, JacobianError> {
        assert_eq!(z.len(), self.n, "probe length mismatch");
        self.counters.applies.fetch_add(1, Ordering::Relaxed);
        match &self.inner {
            Inner::Zero => Ok(Array1::zeros(self.n)),
            Inner::EnDirect { x_s, factor } => {
                let hz = &self.h * &z;
                let rhs = x_s.t().dot(&hz);
                let w = factor.solve(rhs.view());
                Ok(x_s.dot(&w))
            }
            Inner::EnIterative { data, active, l2, cfg } => {
                self.counters.iterative_solves.fetch_add(1, Ordering::Relaxed);
                let hz = &self.h * &z;
                let full = data.x.rmatvec(hz.view());
                let rhs = Array1::from_iter(active.iter().map(|&j| full[j]));
                let p = data.n_features();
                let op = SymFnOp::new(active.len(), |w: ArrayView1<f64>| {
                    let mut emb = Array1::<f64>::zeros(p);
                    for (slot, &j) in active.iter().enumerate() {
                        emb[j] = w[slot];
                    }
                    let xw = data.x.matvec(emb.view());
                    let hxw = &xw * &self.h;
                    let back = data.x.rmatvec(hxw.view());
                    Array1::from_iter(active.iter().enumerate().map(|(slot, &j)| back[j] + l2 * w[slot]))
                });
                let w = crate::linops::cg_solve(&op, rhs.view(), cfg)?;
                let mut emb = Array1::<f64>::zeros(p);
                for (slot, &j) in active.iter().enumerate() {
                    emb[j] = w[slot];
                }
                Ok(data.x.matvec(emb.view()))
            }
            Inner::KktDirect { data, solver } => {
                let hz = &self.h * &z;
                let rhs_top = data.x.rmatvec(hz.view());
                let q = match solver {
                    KktSolver::Direct { q, .. } => *q,
                    _ => 0,
                };
                let sol = solver.solve(rhs_top.view(), Array1::zeros(q).view())?;
                Ok(data.x.matvec(sol.v.view()))
            }
            Inner::KktIterative { data, reg_hess, constraints, cfg } => {
                self.counters.iterative_solves.fetch_add(1, Ordering::Relaxed);
                let hz = &self.h * &z;
                let rhs_top = data.x.rmatvec(hz.view());
                let p = data.n_features();
                let q = constraints.nrows();
                let quad = |v: ArrayView1<f64>| {
                    let xv = data.x.matvec(v);
                    let hxv = &xv * &self.h;
                    let mut out = data.x.rmatvec(hxv.view());
                    out += &reg_hess.apply(v);
                    out
                };
                if q == 0 {
                    let op = SymFnOp::new(p, quad);
                    let v = crate::linops::cg_solve(&op, rhs_top.view(), cfg)?;
                    return Ok(data.x.matvec(v.view()));
                }
                let op = SymFnOp::new(p + q, |x: ArrayView1<f64>| {
                    let (xv, xnu) = (x.slice(ndarray::s![..p]), x.slice(ndarray::s![p..]));
                    let mut top = quad(xv);
                    top += &constraints.t().dot(&xnu);
                    let bottom = constraints.dot(&xv);
                    let mut out = Array1::<f64>::zeros(p + q);
                    out.slice_mut(ndarray::s![..p]).assign(&top);
                    out.slice_mut(ndarray::s![p..]).assign(&bottom);
                    out
                });
                let mut rhs = Array1::<f64>::zeros(p + q);
                rhs.slice_mut(ndarray::s![..p]).assign(&rhs_top);
                let (sol, _) = minres_solve_with_info(&op, rhs.view(), cfg)?;
                Ok(data.x.matvec(sol.slice(ndarray::s![..p])))
            }
            Inner::Group { x_a, reduced, factor, cfg } => {
                let hz = &self.h * &z;
                let rhs = x_a.t().dot(&hz);
                let w = match factor {
                    Some(f) => f.solve(rhs.view()),
                    None => {
                        self.counters.iterative_solves.fetch_add(1, Ordering::Relaxed);
                        let op = SymFnOp::new(reduced.nrows(), |v| reduced.dot(&v));
                        minres_solve_with_info(&op, rhs.view(), cfg)?.0
                    }
                };
                Ok(x_a.dot(&w))
            }
            Inner::Kernel { gram, factor } => {
                let u = factor.solve(z);
                Ok(gram.dot(&u))
            }
            Inner::Normalized { op, scale } => {
                let scaled = &scale.view() * &z;
                Ok(op.apply(scaled.view()))
            }
        }
    }
}

/// One-shot generic Thm.-2 JVP (builds the KKT system and solves once).
pub fn jvp_generic(
    model: &FittedModel,
    data: &Dataset,
    z: ArrayView1<f64>,
    policy: &ActiveSetPolicy,
    cfg: &SolverConfig,
) -> Result<Array1<f64>, JacobianError> {
    JvpOracle::generic(model, data, policy, cfg)?.apply(z)
}

/// Exact diagonal of J̃ by `n` applications to basis vectors; the reference
/// implementation behind exact ALO.
pub fn exact_diag(oracle: &JvpOracle) -> Result<Array1<f64>, JacobianError> {
    let n = oracle.n();
    let mut diag = Array1::<f64>::zeros(n);
    let mut e = Array1::<f64>::zeros(n);
    for i in 0..n {
        e[i] = 1.0;
        let col = oracle.apply(e.view())?;
        diag[i] = col[i];
        e[i] = 0.0;
    }
    Ok(diag)
}

#[cfg(test)]
mod tests;
