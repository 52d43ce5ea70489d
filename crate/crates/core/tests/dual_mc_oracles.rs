//! Monte Carlo dual estimators against quadrature, closed forms and
//! common-random-number finite differences.

use ratchet_core::dual_mc::{estimate_all, h_mc, h_uu_mc, xi_mc, McConfig};
use ratchet_core::model::{BenchmarkSpec, FactorDynamics, FactorSpec, GbmIndexSpec, GrowthRate, MarketParams, Model};
use ratchet_core::paths::ReflectedBmLaw;
use ratchet_core::quad;

fn constant_rate(mu: f64, rho: f64, c: f64, horizon: f64) -> Model {
    Model::new(
        MarketParams::one_dim(mu, 1.0, rho, Some(horizon)),
        FactorSpec { dynamics: FactorDynamics::Constant { drift: 0.0, vol: 0.0 }, gamma: vec![1.0], z0: 0.0 },
        BenchmarkSpec { rate: GrowthRate::Constant { c }, a: 0.0 },
    )
    .unwrap()
}

fn ou_logistic() -> Model {
    Model::new(
        MarketParams::one_dim(0.4, 0.8, 0.1, Some(1.0)),
        FactorSpec {
            dynamics: FactorDynamics::OrnsteinUhlenbeck { kappa: 1.5, mean: 0.2, eta: 0.6 },
            gamma: vec![1.0],
            z0: 0.0,
        },
        BenchmarkSpec { rate: GrowthRate::Logistic { c1: 0.5, c2: 0.5, beta: 1.5 }, a: 1.0 },
    )
    .unwrap()
}

/// `-c int_t^T e^{-rho s} E[e^{-R_{s-t}}] ds` with the expectation from the exact density.
fn constant_rate_oracle(model: &Model, t: f64, u: f64, c: f64) -> f64 {
    let law = ReflectedBmLaw::from_market(&model.derived);
    let rho = model.rho();
    let g = |s: f64| (-rho * s).exp() * law.laplace(u, s - t).unwrap();
    -c * quad::integrate(g, t, model.horizon, 1e-10, 1e-9).value
}

#[test]
fn constant_rate_matches_density_quadrature() {
    let model = constant_rate(1.0, 0.2, 1.0, 1.0);
    let cfg = McConfig::default().with_paths(40_000).with_seed(3).with_dt(2.5e-4);
    for &(t, u) in &[(0.0, 0.0), (0.0, 0.3), (0.5, 1.0)] {
        let est = h_mc(&model, t, 0.0, u, &cfg).unwrap();
        let exact = constant_rate_oracle(&model, t, u, 1.0);
        let slack = 0.01 * exact.abs();
        println!("t={t} u={u} mc={} se={} exact={exact}", est.value, est.std_error);
        assert!(est.agrees_with(exact, 3.0, slack));
    }
}

#[test]
fn large_buffer_is_unreflected() {
    let model = constant_rate(1.0, 0.3, 2.0, 1.0);
    let cfg = McConfig::default().with_paths(20_000);
    let u = 20.0;
    let est = h_mc(&model, 0.2, 0.0, u, &cfg).unwrap();
    let exact = -2.0 * (-u - 0.3 * 0.2_f64).exp() * 0.8;
    assert!(est.agrees_with(exact, 3.0, 1e-3 * exact.abs()), "{est:?} {exact}");
}

#[test]
fn h_u_matches_common_noise_difference() {
    let model = ou_logistic();
    let cfg = McConfig::default().with_paths(20_000).with_seed(5);
    let (t, z, u, eps) = (0.1, 0.3, 0.5, 0.02);
    let centre = estimate_all(&model, t, z, u, &cfg).unwrap();
    let up = h_mc(&model, t, z, u + eps, &cfg).unwrap().value;
    let down = h_mc(&model, t, z, u - eps, &cfg).unwrap().value;
    let fd = (up - down) / (2.0 * eps);
    println!("h_u {} se {} fd {fd}", centre.h_u.value, centre.h_u.std_error);
    assert!(centre.h_u.value >= 0.0);
    assert!((centre.h_u.value - fd).abs() <= (3.0 * centre.h_u.std_error).max(5.0 * eps * eps + 2e-3));
}

fn second_difference_check(model: &Model, cfg: &McConfig, us: &[f64], rel: f64) {
    let (t, z, eps) = (0.0, 0.0, 0.05);
    for &u in us {
        let huu = h_uu_mc(model, t, z, u, cfg).unwrap();
        let hu = estimate_all(model, t, z, u, cfg).unwrap().h_u;
        let up = h_mc(model, t, z, u + eps, cfg).unwrap().value;
        let mid = h_mc(model, t, z, u, cfg).unwrap().value;
        let down = h_mc(model, t, z, u - eps, cfg).unwrap().value;
        let fd = (up - 2.0 * mid + down) / (eps * eps);
        println!("u={u} h_uu {} se {} fd {fd} h_u {}", huu.value, huu.std_error, hu.value);
        assert!(huu.value + hu.value > 0.0);
        assert!((huu.value - fd).abs() <= 3.0 * huu.std_error + rel * fd.abs().max(0.05), "u={u}");
    }
}

#[test]
fn h_uu_matches_second_difference() {
    let model = constant_rate(1.0, 0.2, 1.0, 1.0);
    let cfg = McConfig::default().with_paths(40_000).with_seed(8).with_dt(2.5e-4);
    second_difference_check(&model, &cfg, &[0.2, 0.6, 1.2], 0.05);
}

#[test]
fn h_uu_with_correlated_factor_stays_close() {
    let cfg = McConfig::default().with_paths(40_000).with_seed(8);
    second_difference_check(&ou_logistic(), &cfg, &[0.2, 0.6, 1.2], 0.15);
}

#[test]
fn h_z_matches_common_noise_difference() {
    let model = ou_logistic();
    let cfg = McConfig::default().with_paths(20_000).with_seed(2);
    let (t, z, u, eps) = (0.0, 0.4, 0.3, 1e-3);
    let e = estimate_all(&model, t, z, u, &cfg).unwrap();
    let up = estimate_all(&model, t, z + eps, u, &cfg).unwrap();
    let down = estimate_all(&model, t, z - eps, u, &cfg).unwrap();
    let fd = (up.h.value - down.h.value) / (2.0 * eps);
    let fdu = (up.h_u.value - down.h_u.value) / (2.0 * eps);
    println!("h_z {} fd {fd}  h_zu {} fd {fdu}", e.h_z.value, e.h_zu.value);
    assert!((e.h_z.value - fd).abs() <= 1e-4 + 1e-3 * fd.abs());
    assert!((e.h_zu.value - fdu).abs() <= 1e-4 + 1e-3 * fdu.abs());
}

#[test]
fn h_t_matches_time_difference() {
    let model = ou_logistic();
    let cfg = McConfig::default().with_paths(40_000).with_seed(4).with_dt(1e-3);
    let (t, z, u, eps) = (0.3, 0.1, 0.4, 0.02);
    let e = estimate_all(&model, t, z, u, &cfg).unwrap();
    let up = h_mc(&model, t + eps, z, u, &cfg).unwrap();
    let down = h_mc(&model, t - eps, z, u, &cfg).unwrap();
    let fd = (up.value - down.value) / (2.0 * eps);
    let se = (up.std_error + down.std_error) / (2.0 * eps);
    println!("h_t {} se {} fd {fd} se {se}", e.h_t.value, e.h_t.std_error);
    assert!((e.h_t.value - fd).abs() <= 3.0 * (se + e.h_t.std_error) + 0.02 * fd.abs());
}

#[test]
fn xi_matches_geometric_closed_form() {
    let market = MarketParams::one_dim(0.3, 1.0, 0.5, Some(1.0));
    for sigma_i in [0.0, 0.25] {
        let index = GbmIndexSpec { mu_i: 0.4, sigma_i, z0: 1.0, gamma: vec![1.0] };
        let model = Model::from_index(market.clone(), &index, 0.0).unwrap();
        let lambda = index.lambda(&market).unwrap();
        let cfg = McConfig::default().with_paths(40_000).with_seed(1);
        for (t, z) in [(0.0, 1.0), (0.5, 2.0)] {
            let est = xi_mc(&model, t, z, &cfg).unwrap();
            let exact = z * ((lambda * (1.0 - t)).exp() - 1.0);
            println!("sigma_i={sigma_i} t={t} xi {} se {} exact {exact}", est.value, est.std_error);
            assert!(est.agrees_with(exact, 3.0, 2e-3 * exact));
        }
    }
}

#[test]
fn scaled_h_u_approaches_xi() {
    let model = ou_logistic();
    let cfg = McConfig::default().with_paths(20_000).with_seed(6);
    let (t, z) = (0.2, 0.1);
    let xi = xi_mc(&model, t, z, &cfg).unwrap();
    for u in [8.0, 12.0] {
        let hu = estimate_all(&model, t, z, u, &cfg).unwrap().h_u;
        let scaled = (model.rho() * t + u).exp() * hu.value;
        let se = (model.rho() * t + u).exp() * hu.std_error;
        assert!((scaled - xi.value).abs() <= 3.0 * (se + xi.std_error) + 1e-3, "{scaled} {}", xi.value);
    }
}

#[test]
fn h_is_monotone_in_buffer_with_common_noise() {
    let model = ou_logistic();
    let cfg = McConfig::default().with_paths(4_000).with_seed(12).with_dt(2e-3);
    let mut prev = f64::NEG_INFINITY;
    for u in [0.0, 0.1, 0.4, 1.0, 3.0] {
        let h = h_mc(&model, 0.0, 0.0, u, &cfg).unwrap().value;
        assert!(h <= 0.0);
        assert!(h >= prev);
        prev = h;
    }
}
