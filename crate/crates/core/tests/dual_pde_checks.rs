//! Finite-difference dual field against the density quadrature, Monte Carlo
//! and its own refinements.

use ratchet_core::dual_mc::{estimate_all, xi_mc, McConfig};
use ratchet_core::dual_pde::{solve_dual, PdeConfig};
use ratchet_core::model::{BenchmarkSpec, FactorDynamics, FactorSpec, GbmIndexSpec, GrowthRate, MarketParams, Model};
use ratchet_core::paths::ReflectedBmLaw;
use ratchet_core::quad;

fn constant_rate(mu: f64, rho: f64, c: f64) -> Model {
    Model::new(
        MarketParams::one_dim(mu, 1.0, rho, Some(1.0)),
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

fn quadrature_h(model: &Model, t: f64, u: f64, c: f64) -> f64 {
    let law = ReflectedBmLaw::from_market(&model.derived);
    let rho = model.rho();
    let g = |s: f64| (-rho * s).exp() * law.laplace(u, s - t).unwrap();
    -c * quad::integrate(g, t, model.horizon, 1e-10, 1e-9).value
}

#[test]
fn constant_rate_field_matches_quadrature() {
    for rho in [0.0, 0.2] {
        let model = constant_rate(1.0, rho, 1.0);
        let field = solve_dual(&model, &PdeConfig::default()).unwrap();
        for &(t, u) in &[(0.0, 0.0), (0.0, 0.5), (0.3, 0.1), (0.6, 1.5), (0.9, 3.0)] {
            let h = field.h(t, 0.0, u).unwrap();
            let exact = quadrature_h(&model, t, u, 1.0);
            println!("rho={rho} t={t} u={u} pde={h} exact={exact}");
            assert!((h - exact).abs() <= 5e-3 * exact.abs() + 1e-6);
        }
    }
}

#[test]
fn correlated_factor_field_matches_monte_carlo() {
    let model = ou_logistic();
    let field = solve_dual(&model, &PdeConfig::default()).unwrap();
    let cfg = McConfig::default().with_paths(20_000).with_seed(21).with_dt(5e-4);
    for &(t, z, u) in &[(0.0, 0.0, 0.0), (0.0, 0.5, 0.4), (0.4, -0.5, 1.0), (0.7, 0.3, 0.2)] {
        let est = estimate_all(&model, t, z, u, &cfg).unwrap();
        let h = field.h(t, z, u).unwrap();
        println!("t={t} z={z} u={u} pde={h} mc={} se={}", est.h.value, est.h.std_error);
        assert!((h - est.h.value).abs() <= (3.0 * est.h.std_error).max(0.02 * h.abs()));
        let xi = field.xi(t, z).unwrap();
        println!("   xi pde={xi} mc={} se={}", est.xi.value, est.xi.std_error);
        assert!((xi - est.xi.value).abs() <= 3.0 * est.xi.std_error + 5e-3 * xi);
    }
}

#[test]
fn geometric_field_reproduces_xi_closed_form() {
    let market = MarketParams::one_dim(0.3, 1.0, 0.5, Some(1.0));
    let index = GbmIndexSpec { mu_i: 0.4, sigma_i: 0.25, z0: 1.0, gamma: vec![1.0] };
    let model = Model::from_index(market.clone(), &index, 0.0).unwrap();
    let lambda = index.lambda(&market).unwrap();
    let field = solve_dual(&model, &PdeConfig::default().with_nodes(200, 120)).unwrap();
    for (t, z) in [(0.0, 1.0), (0.5, 2.0)] {
        let xi = field.xi(t, z).unwrap();
        let exact = z * ((lambda * (1.0 - t)).exp() - 1.0);
        println!("t={t} z={z} xi={xi} exact={exact}");
        assert!((xi - exact).abs() <= 2e-3 * exact);
    }
    let cfg = McConfig::default().with_paths(10_000).with_seed(2);
    let mc = xi_mc(&model, 0.0, 1.0, &cfg).unwrap();
    assert!((field.xi(0.0, 1.0).unwrap() - mc.value).abs() <= 3.0 * mc.std_error + 2e-3 * mc.value);
}

#[test]
fn refinement_ratios_match_scheme_order() {
    let model = constant_rate(1.0, 0.2, 1.0);
    let probe = |n: usize, dt: f64| {
        let field = solve_dual(&model, &PdeConfig::default().with_nodes(n, 1).with_u_max(8.0).with_dt(dt)).unwrap();
        field.h_node(0, 0, 0)
    };
    // Second order in du with a negligible time error.
    let s: Vec<f64> = [41, 81, 161].iter().map(|&n| probe(n, 1e-4)).collect();
    let space = (s[0] - s[1]) / (s[1] - s[2]);
    // First order in dt on a fine buffer grid.
    let t: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&dt| probe(321, dt)).collect();
    let time = (t[0] - t[1]) / (t[1] - t[2]);
    println!("space {s:?} ratio {space}; time {t:?} ratio {time}");
    assert!((1.5..=4.5).contains(&space));
    assert!((1.5..=4.5).contains(&time));
}

#[test]
fn field_is_negative_monotone_and_convex() {
    let model = ou_logistic();
    let field = solve_dual(&model, &PdeConfig::default().with_nodes(160, 80)).unwrap();
    let last = field.t.len() - 1;
    for k in 0..field.t.len() {
        for j in 0..field.n_z() {
            for i in 0..field.n_u() {
                let h = field.h_node(k, j, i);
                if k == last {
                    assert_eq!(h, 0.0);
                } else {
                    assert!(h < 0.0);
                }
            }
        }
    }
    for &t in &[0.0, 0.5, 0.95] {
        for &z in &[-1.0, 0.0, 1.0] {
            let s = field.slice(t, z).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let y = field.y_floor() + (1.0 - field.y_floor()) * i as f64 / 200.0;
                let p = s.eval_y(y).unwrap();
                assert!(p.vhat_yy >= -1e-8);
                assert!(p.vhat_y >= prev - 1e-12);
                prev = p.vhat_y;
            }
            assert!(s.eval_y(1.0).unwrap().vhat_y.abs() < 1e-8);
        }
    }
}
