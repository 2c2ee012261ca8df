use super::*;
use crate::data::Dataset;
use crate::model::{fit, fit_kernel, FitConfig, Loss, Regularizer};
use ndarray::{array, Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
}

fn lasso_instance(rng: &mut ChaCha8Rng, n: usize, p: usize, lambda: f64) -> (Dataset, FittedModel) {
    let x = normal_matrix(rng, n, p);
    let s = (p / 10).max(1);
    let mut beta = Array1::<f64>::zeros(p);
    for j in 0..s {
        beta[j] = <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            / (s as f64).sqrt();
    }
    let y = x.dot(&beta) + normal_vector(rng, n);
    let data = Dataset::dense(x, y).unwrap();
    let model = fit(&data, Loss::Squared, &Regularizer::lasso(lambda), &FitConfig::default()).unwrap();
    (data, model)
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(f64::abs).iter().fold(0.0f64, |m, v| m.max(*v))
}

#[test]
fn ridge_route_matches_dense_hat_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let (n, p) = (60, 40);
    let lambda = 2.0;
    let x = normal_matrix(&mut rng, n, p);
    let y = normal_vector(&mut rng, n);
    let data = Dataset::dense(x.clone(), y).unwrap();
    let model = fit(&data, Loss::Squared, &Regularizer::ridge(lambda), &FitConfig::default()).unwrap();
    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    assert_eq!(oracle.route(), JvpRoute::Ridge);

    // Dense oracle: J = X (XᵀX + λI)⁻¹ Xᵀ.
    let mut normal = x.t().dot(&x);
    for i in 0..p {
        normal[[i, i]] += lambda;
    }
    let inv_xt = LdlFactor::new(&normal).unwrap();
    let diag = exact_diag(&oracle).unwrap();
    for i in 0..n {
        let xi = x.row(i).to_owned();
        let w = inv_xt.solve(xi.view());
        let jii = xi.dot(&w);
        assert!((diag[i] - jii).abs() < 1e-10, "diag[{i}]");
        assert!(diag[i] > -1e-8 && diag[i] < 1.0 + 1e-8);
    }
}

#[test]
fn lasso_empty_active_set_is_zero_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let x = normal_matrix(&mut rng, 30, 12);
    let y = normal_vector(&mut rng, 30);
    let data = Dataset::dense(x, y).unwrap();
    let lambda = data.x.rmatvec(data.y.view()).mapv(f64::abs).iter().fold(0.0f64, |m, v| m.max(*v)) * 1.01;
    let model = fit(&data, Loss::Squared, &Regularizer::lasso(lambda), &FitConfig::default()).unwrap();
    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    let z = normal_vector(&mut rng, 30);
    let out = oracle.apply(z.view()).unwrap();
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn elastic_net_route_matches_generic_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (n, p) = (100, 80);
    let x = normal_matrix(&mut rng, n, p);
    let mut beta = Array1::<f64>::zeros(p);
    for j in 0..8 {
        beta[j] = 1.0 + rng.random::<f64>();
    }
    let y = x.dot(&beta) + normal_vector(&mut rng, n);
    let data = Dataset::dense(x, y).unwrap();
    let model = fit(
        &data,
        Loss::Squared,
        &Regularizer::elastic_net(1.5, (n as f64).sqrt()),
        &FitConfig::default(),
    )
    .unwrap();

    let policy = ActiveSetPolicy::default();
    let cfg = SolverConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..SolverConfig::default() };
    let fast = JvpOracle::build(&model, &data, &policy, &cfg).unwrap();
    assert_eq!(fast.route(), JvpRoute::ElasticNetClosedForm);
    let generic = JvpOracle::generic(&model, &data, &policy, &cfg).unwrap();

    for _ in 0..20 {
        let z = normal_vector(&mut rng, n);
        let a = fast.apply(z.view()).unwrap();
        let b = generic.apply(z.view()).unwrap();
        let scale = b.mapv(f64::abs).iter().fold(1e-30f64, |m, v| m.max(*v));
        assert!(max_abs_diff(&a, &b) / scale < 1e-8);
    }
}

#[test]
fn oracle_apply_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (data, model) = lasso_instance(&mut rng, 50, 40, 5.0);
    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    for _ in 0..10 {
        let u = normal_vector(&mut rng, 50);
        let v = normal_vector(&mut rng, 50);
        let (a, b) = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        let combo = oracle.apply((&u.mapv(|x| a * x) + &v.mapv(|x| b * x)).view()).unwrap();
        let parts = &oracle.apply(u.view()).unwrap().mapv(|x| a * x)
            + &oracle.apply(v.view()).unwrap().mapv(|x| b * x);
        assert!(max_abs_diff(&combo, &parts) < 1e-8);
    }
}

#[test]
fn single_active_column_rank_one_diag() {
    // One active column: J̃ diag is x_{i𝒮}² h_i / (Σ_j h_j x_{j𝒮}² + λ).
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let n = 25;
    let x = normal_matrix(&mut rng, n, 6);
    let col = x.column(2).to_owned();
    let y = &col * 3.0 + &(normal_vector(&mut rng, n) * 0.01);
    let data = Dataset::dense(x.clone(), y).unwrap();
    // λ₁ large enough that only the informative column survives.
    let model = fit(&data, Loss::Squared, &Regularizer::elastic_net(0.3, 30.0), &FitConfig::default()).unwrap();
    let active: Vec<usize> = (0..6).filter(|&j| model.coefficients[j] != 0.0).collect();
    assert_eq!(active, vec![2], "fit should keep exactly the informative column");

    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    let diag = exact_diag(&oracle).unwrap();
    let denom: f64 = col.iter().map(|&v| v * v).sum::<f64>() + 0.3;
    for i in 0..n {
        let expect = col[i] * col[i] / denom;
        assert!((diag[i] - expect).abs() < 1e-10);
    }
}

#[test]
fn l1_affine_with_identity_matches_lasso_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (n, p) = (60, 50);
    let x = normal_matrix(&mut rng, n, p);
    let mut beta = Array1::<f64>::zeros(p);
    for j in 0..5 {
        beta[j] = 2.0;
    }
    let y = x.dot(&beta) + normal_vector(&mut rng, n);
    let data = Dataset::dense(x, y).unwrap();
    let lambda = (n as f64).sqrt();

    let lasso_model = fit(&data, Loss::Squared, &Regularizer::lasso(lambda), &FitConfig::default()).unwrap();
    let eye_reg = Regularizer::new(vec![RegTerm::L1Affine {
        matrix: Array2::eye(p),
        offset: Array1::zeros(p),
        weight: lambda,
    }])
    .unwrap();
    let affine_model = fit(&data, Loss::Squared, &eye_reg, &FitConfig::default()).unwrap();
    assert!(max_abs_diff(&lasso_model.coefficients, &affine_model.coefficients) < 1e-7);

    let policy = ActiveSetPolicy::default();
    let cfg = SolverConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..SolverConfig::default() };
    let lasso_oracle = JvpOracle::build(&lasso_model, &data, &policy, &cfg).unwrap();
    let affine_oracle = JvpOracle::build(&affine_model, &data, &policy, &cfg).unwrap();
    assert_eq!(affine_oracle.route(), JvpRoute::GeneralizedL1Qp);
    for _ in 0..10 {
        let z = normal_vector(&mut rng, n);
        let a = lasso_oracle.apply(z.view()).unwrap();
        let b = affine_oracle.apply(z.view()).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-8);
    }
}

#[test]
fn group_lasso_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (n, p) = (70, 24);
    let groups: Vec<Vec<usize>> = (0..6).map(|k| (4 * k..4 * k + 4).collect()).collect();
    let x = normal_matrix(&mut rng, n, p);
    let mut beta = Array1::<f64>::zeros(p);
    for &j in &groups[0] {
        beta[j] = 1.5;
    }
    for &j in &groups[3] {
        beta[j] = -1.0;
    }
    let y = x.dot(&beta) + normal_vector(&mut rng, n);
    let data = Dataset::dense(x, y).unwrap();
    let model = fit(&data, Loss::Squared, &Regularizer::group_lasso(groups, 8.0), &FitConfig::default()).unwrap();

    let policy = ActiveSetPolicy::default();
    let cfg = SolverConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..SolverConfig::default() };
    let fast = JvpOracle::build(&model, &data, &policy, &cfg).unwrap();
    assert_eq!(fast.route(), JvpRoute::GroupLassoClosedForm);
    let generic = JvpOracle::generic(&model, &data, &policy, &cfg).unwrap();
    for _ in 0..10 {
        let z = normal_vector(&mut rng, n);
        let a = fast.apply(z.view()).unwrap();
        let b = generic.apply(z.view()).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-8);
    }
}

#[test]
fn singleton_groups_match_lasso_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let (n, p) = (50, 20);
    let x = normal_matrix(&mut rng, n, p);
    let mut beta = Array1::<f64>::zeros(p);
    for j in 0..4 {
        beta[j] = 2.0;
    }
    let y = x.dot(&beta) + normal_vector(&mut rng, n);
    let data = Dataset::dense(x, y).unwrap();
    let w = 6.0;
    let groups: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    let gl = fit(&data, Loss::Squared, &Regularizer::group_lasso(groups, w), &FitConfig::default()).unwrap();
    let la = fit(&data, Loss::Squared, &Regularizer::lasso(w), &FitConfig::default()).unwrap();

    let policy = ActiveSetPolicy::default();
    let cfg = SolverConfig::default();
    let o_gl = JvpOracle::build(&gl, &data, &policy, &cfg).unwrap();
    let o_la = JvpOracle::build(&la, &data, &policy, &cfg).unwrap();
    for _ in 0..10 {
        let z = normal_vector(&mut rng, n);
        assert!(max_abs_diff(&o_gl.apply(z.view()).unwrap(), &o_la.apply(z.view()).unwrap()) < 1e-7);
    }
}

#[test]
fn kernel_identity_gram_diagonal_case() {
    // K = I, H = h·I: J̃z = z / (1 + λ/h).
    let n = 12;
    let gram = Arc::new(Array2::<f64>::eye(n));
    let y = Array1::from_shape_fn(n, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
    let lambda = 0.8;
    let model = fit_kernel(&gram, &y, Loss::Squared, lambda, &FitConfig::default()).unwrap();
    let oracle = JvpOracle::kernel(&model, Arc::clone(&gram), &SolverConfig::default()).unwrap();
    let z = Array1::from_shape_fn(n, |i| i as f64 - 3.0);
    let out = oracle.apply(z.view()).unwrap();
    for i in 0..n {
        // Squared loss gives h = 1.
        assert!((out[i] - z[i] / (1.0 + lambda)).abs() < 1e-10);
    }
}

#[test]
fn linear_kernel_matches_primal_ridge_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let (n, p) = (30, 50);
    let x = normal_matrix(&mut rng, n, p);
    let y = normal_vector(&mut rng, n);
    let lambda = 1.3;

    let data = Dataset::dense(x.clone(), y.clone()).unwrap();
    let primal = fit(&data, Loss::Squared, &Regularizer::ridge(lambda), &FitConfig::default()).unwrap();
    let primal_oracle =
        JvpOracle::build(&primal, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();

    let gram = Arc::new(x.dot(&x.t()));
    let dual = fit_kernel(&gram, &y, Loss::Squared, lambda, &FitConfig::default()).unwrap();
    let dual_oracle = JvpOracle::kernel(&dual, Arc::clone(&gram), &SolverConfig::default()).unwrap();

    for _ in 0..10 {
        let z = normal_vector(&mut rng, n);
        let a = primal_oracle.apply(z.view()).unwrap();
        let b = dual_oracle.apply(z.view()).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-6);
    }
}

#[test]
fn kernel_logistic_scaled_jacobian_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let n = 80;
    let x = normal_matrix(&mut rng, n, 10);
    // RBF kernel.
    let gamma = 0.2;
    let mut gram = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let d = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum();
            gram[[i, j]] = (-gamma * d).exp();
        }
    }
    let gram = Arc::new(gram);
    let y = Array1::from_shape_fn(n, |_| if rng.random::<bool>() { 1.0 } else { -1.0 });
    let model = fit_kernel(&gram, &y, Loss::Logistic, 0.5, &FitConfig::default()).unwrap();
    let oracle = JvpOracle::kernel(&model, Arc::clone(&gram), &SolverConfig::default()).unwrap();

    // S = H^{1/2} J̃ H^{-1/2} must be symmetric: ⟨u, Sv⟩ = ⟨Su, v⟩.
    let h = model.hessian_weights.clone();
    let s_apply = |v: &Array1<f64>| -> Array1<f64> {
        let scaled = v / &h.mapv(f64::sqrt);
        let jz = oracle.apply(scaled.view()).unwrap();
        &jz * &h.mapv(f64::sqrt)
    };
    for _ in 0..20 {
        let u = normal_vector(&mut rng, n);
        let v = normal_vector(&mut rng, n);
        let lhs = u.dot(&s_apply(&v));
        let rhs = s_apply(&u).dot(&v);
        let scale = u.dot(&u).sqrt() * v.dot(&v).sqrt();
        assert!((lhs - rhs).abs() < 1e-9 * scale);
    }
}

#[test]
fn normalized_oracle_scaling() {
    // Squared loss: h = 1, dy = −1, so J̃ = J.
    let n = 5;
    let j = Arc::new(crate::linops::DenseOp::new(Array2::eye(n)));
    let h = Array1::ones(n);
    let dy = Array1::from_elem(n, -1.0);
    let oracle = JvpOracle::normalized(j.clone(), &h, &dy).unwrap();
    let z = array![1.0, 2.0, 3.0, 4.0, 5.0];
    let out = oracle.apply(z.view()).unwrap();
    assert!(max_abs_diff(&out, &z) < 1e-15);

    // h = 2, dy = −1, J = I: J̃ = 2I.
    let h = Array1::from_elem(n, 2.0);
    let oracle = JvpOracle::normalized(j, &h, &dy).unwrap();
    let out = oracle.apply(z.view()).unwrap();
    assert!(max_abs_diff(&out, &z.mapv(|v| 2.0 * v)) < 1e-15);

    // dy = 0 is an error.
    let dy_bad = Array1::zeros(n);
    let j2: Arc<dyn LinOp> = Arc::new(crate::linops::DenseOp::new(Array2::eye(n)));
    assert!(matches!(
        JvpOracle::normalized(j2, &h, &dy_bad),
        Err(JacobianError::ZeroDerivative(0))
    ));
}

#[test]
fn diag_in_unit_interval_across_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let (data, model) = lasso_instance(&mut rng, 60, 60, 4.0);
    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    let diag = exact_diag(&oracle).unwrap();
    for (i, &d) in diag.iter().enumerate() {
        assert!(d > -1e-8 && d < 1.0 + 1e-8, "diag[{i}] = {d}");
    }
}

#[test]
fn solve_counters_track_cached_factorizations() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let (data, model) = lasso_instance(&mut rng, 40, 30, 4.0);
    let oracle = JvpOracle::build(&model, &data, &ActiveSetPolicy::default(), &SolverConfig::default()).unwrap();
    for _ in 0..7 {
        let z = normal_vector(&mut rng, 40);
        oracle.apply(z.view()).unwrap();
    }
    let counts = oracle.solve_counts();
    assert_eq!(counts.applies, 7);
    assert_eq!(counts.factorizations, 1);
    assert_eq!(counts.linear_solves(), 1);
}
