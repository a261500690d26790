use std::path::Path;

use ocn_core::scenario::{InitSpec, Scenario, TopologySpec};

fn report(topology: TopologySpec) -> ocn_core::scenario::TopologyReport {
    let init = InitSpec::Random { seed: 5, target_inf_norm: 4.64, zero_mean: true };
    Scenario::minimal(topology, Some(init))
        .resolve(Path::new("."))
        .unwrap()
        .topology_report()
        .unwrap()
}

#[test]
fn complete_22_row() {
    let r = report(TopologySpec::Complete { m: 22 });
    assert_eq!(r.channels, 231);
    assert!((r.varsigma_p - 0.220).abs() < 1e-3);
    assert_eq!((r.d_min, r.d_max, r.rho, r.phi), (40, 40, 2, 2));
    assert!((r.omega - 1.951).abs() < 1e-3);
    assert!((r.xi_lower - 0.024).abs() < 1e-3 && (r.xi_upper - 0.024).abs() < 1e-3);
    assert_eq!(r.r_index, 2.0);
    assert!((r.lambda_1 - 19.0 / 41.0).abs() < 1e-9);
    assert!((r.lambda_n_minus_1 + 1.0 / 41.0).abs() < 1e-9);
    assert!((r.eta_upper.unwrap() - 0.925).abs() < 1e-3);
    assert!((r.min_limit - 0.6825).abs() < 1e-12);
}

#[test]
fn synthetic_row_constants() {
    let r = report(TopologySpec::Synthetic2225);
    assert_eq!((r.junctions, r.channels), (22, 25));
    assert_eq!((r.d_min, r.d_max, r.rho, r.phi), (2, 5, 5, 7));
    assert!((r.omega - 1.667).abs() < 1e-3);
    assert!((r.xi_lower - 0.167).abs() < 1e-3 && (r.xi_upper - 0.667).abs() < 1e-3);
    assert!((r.r_index - 683.6).abs() < 0.1);
    assert!((r.eta_upper.unwrap() - 0.912).abs() < 1e-3);
}
