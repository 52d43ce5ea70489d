//! Geometric index: quadrature, finite differences and simulation agree.

use ratchet_core::dual_mc::{h_mc, McConfig};
use ratchet_core::dual_pde::{solve_dual, PdeConfig};
use ratchet_core::gbm::{finite_horizon_sigma0, GbmSolution};
use ratchet_core::model::{GbmIndexSpec, MarketParams, Model};
use ratchet_core::tracker::{evaluate_strategy, SimConfig, Strategy};

fn finite_market() -> (MarketParams, GbmIndexSpec) {
    (
        MarketParams::one_dim(0.3, 1.0, 0.5, Some(1.0)),
        GbmIndexSpec { mu_i: 0.4, sigma_i: 0.0, z0: 1.0, gamma: vec![1.0] },
    )
}

#[test]
fn sigma0_quadrature_matches_field() {
    let (market, index) = finite_market();
    let model = Model::from_index(market.clone(), &index, 0.0).unwrap();
    let field = solve_dual(&model, &PdeConfig::default().with_nodes(200, 120)).unwrap();
    let ys = [1.0, 0.6, 0.3, 0.1];
    for (t, z) in [(0.0, 1.0), (0.4, 0.7), (0.7, 1.4)] {
        let exact = finite_horizon_sigma0(&market, &index, t, z, &ys).unwrap();
        for (y, e) in ys.iter().zip(exact) {
            let v = field.vhat_eval(t, z, *y).unwrap().vhat;
            assert!((v - e).abs() <= 5e-3 * e.abs() + 1e-5, "t={t} z={z} y={y}: {v} vs {e}");
        }
    }
}

#[test]
fn sigma0_quadrature_matches_monte_carlo() {
    let (market, index) = finite_market();
    let model = Model::from_index(market.clone(), &index, 0.0).unwrap();
    let cfg = McConfig::default().with_paths(20_000).with_dt(5e-4).with_seed(44);
    for y in [1.0, 0.5] {
        let exact = finite_horizon_sigma0(&market, &index, 0.0, 1.0, &[y]).unwrap()[0];
        let est = h_mc(&model, 0.0, 1.0, -f64::ln(y), &cfg).unwrap();
        assert!(
            (est.value - exact).abs() <= 3.0 * est.std_error + 0.01 * exact.abs(),
            "y={y}: mc {} +- {} vs {exact}",
            est.value,
            est.std_error
        );
    }
}

#[test]
fn stationary_policy_cost_matches_value() {
    let market = MarketParams::one_dim(0.3, 1.0, 2.0, None);
    let index = GbmIndexSpec { mu_i: 1.0, sigma_i: 0.0, z0: 1.0, gamma: vec![1.0] };
    let sol = GbmSolution::new(&market, &index).unwrap();
    let model = Model::from_index(market, &index, 0.0).unwrap();
    let cfg = SimConfig::default().with_paths(4000).with_dt(2e-3).with_seed(9);
    let r = evaluate_strategy(&model, Strategy::ClosedFormGbm { solution: &sol, printed: false }, 1.0, 0.5, &cfg).unwrap();
    let target = -sol.value(1.0, 0.5).unwrap();
    assert!((r.mean - target).abs() <= 3.0 * r.std_error + 0.03 * target, "{} vs {target}", r.mean);
    assert!(r.max_route_gap <= 1e-10);
}
