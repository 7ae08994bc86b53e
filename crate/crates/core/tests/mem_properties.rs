mod common;

use dmem::mem::{component_stationarity, xi_second_moment, ErrorDist, LongRunComponentParams, MemParams, ShortRunParams};
use dmem::inference::MemSpec;
use proptest::prelude::*;

use common::sim;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn short_run_component_has_unit_mean() {
    let short = ShortRunParams::new(0.2, 0.1, 0.6);
    let s = sim(MemParams::Amem { short, level: 1.0 }, ErrorDist::Gamma { phi: 5.0 }, 50_000, 1);
    assert!((mean(&s.path.xi) - 1.0).abs() < 0.01, "{}", mean(&s.path.xi));
}

#[test]
fn short_run_second_moment_matches_closed_form() {
    let short = ShortRunParams::new(0.2, 0.1, 0.6);
    let s = sim(MemParams::Amem { short, level: 1.0 }, ErrorDist::Gamma { phi: 5.0 }, 200_000, 2);
    let m2 = s.path.xi.iter().map(|x| x * x).sum::<f64>() / s.path.xi.len() as f64;
    let expect = xi_second_moment(&short, 0.2).unwrap();
    assert!((m2 / expect - 1.0).abs() < 0.02, "{m2} vs {expect}");
}

#[test]
fn targeted_amem_matches_its_level() {
    let short = ShortRunParams::new(0.15, 0.1, 0.7);
    let params = MemParams::Amem { short, level: 14.0 };
    let s = sim(params, ErrorDist::LogNormal { v: 0.25 }, 60_000, 3);
    let x = s.series.rvol();
    assert!((mean(&x) / 14.0 - 1.0).abs() < 0.02);
    let data = s.filter_data().unwrap();
    // refiltering at the truth with the realized sample mean as the target
    let spec = MemSpec::amem();
    let th = spec.theta(&params).unwrap();
    let path = spec.path(&th, &data, data.mean_x()).unwrap();
    assert!((mean(&path.mu) / data.mean_x() - 1.0).abs() < 0.02);
}

#[test]
fn component_long_run_mean_matches_stationarity_formula() {
    let short = ShortRunParams::new(0.25, 0.1, 0.4);
    let mut long = LongRunComponentParams { omega_tau: 0.3, alpha1_tau: 0.04, gamma1_tau: 0.02, beta1_tau: 0.93 };
    let mu = 10.0;
    let m = component_stationarity(&short, &long, mu, 0.2).unwrap();
    long.omega_tau = m.omega_tau_implied;
    let s = sim(MemParams::Component { short, long }, ErrorDist::Gamma { phi: 5.0 }, 200_000, 4);
    let x = s.series.rvol();
    assert!((mean(&x) / mu - 1.0).abs() < 0.03, "{}", mean(&x));
    assert!((mean(&s.path.tau) / m.e_tau - 1.0).abs() < 0.03);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filtered_paths_are_positive_and_reproduce_the_data(
        a in 0.01f64..0.4,
        g in 0.0f64..0.3,
        b in 0.0f64..0.9,
        seed in 0u64..1000,
    ) {
        let short = ShortRunParams::new(a, g, b);
        prop_assume!(short.validate().is_ok());
        let s = sim(MemParams::Amem { short, level: 5.0 }, ErrorDist::Gamma { phi: 4.0 }, 400, seed);
        prop_assert!(s.path.mu.iter().all(|m| *m > 0.0 && m.is_finite()));
        let x = s.series.rvol();
        for i in 0..x.len() {
            prop_assert!((s.path.mu[i] * s.eps[i] - x[i]).abs() <= 1e-9 * x[i].max(1.0));
            prop_assert!((s.path.tau[i] * s.path.xi[i] - s.path.mu[i]).abs() <= 1e-12 * s.path.mu[i]);
        }
    }
}
