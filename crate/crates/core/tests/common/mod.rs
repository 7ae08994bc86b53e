#![allow(dead_code)]

use dmem::inference::MemSpec;
use dmem::mem::{
    simulate, ErrorDist, LongRunComponentParams, MemParams, MidasLongRunParams, ShortRunParams, Simulation,
    SimulationDesign,
};
use dmem::midas::BetaLag;
use dmem::timeseries::{DayObs, MacroTransform, PanelSeries};

pub const MIDAS_K: usize = 12;

/// Monte Carlo designs on a unit volatility scale.
pub fn designs() -> Vec<(MemSpec, MemParams)> {
    vec![
        (MemSpec::amem(), MemParams::Amem { short: ShortRunParams::new(0.2, 0.1, 0.6), level: 1.0 }),
        (
            MemSpec::component(),
            MemParams::Component {
                short: ShortRunParams::new(0.25, 0.1, 0.4),
                long: LongRunComponentParams { omega_tau: 0.02, alpha1_tau: 0.04, gamma1_tau: 0.02, beta1_tau: 0.93 },
            },
        ),
        (
            MemSpec::midas(MIDAS_K),
            MemParams::Midas {
                short: ShortRunParams::new(0.2, 0.1, 0.6),
                long: MidasLongRunParams { m: 0.0, zeta: -0.4, lag: BetaLag::decaying(MIDAS_K, 2.0).unwrap() },
            },
        ),
    ]
}

/// Designs on a percent-volatility scale with no parameter near zero.
pub fn scaled_designs() -> Vec<(MemSpec, MemParams)> {
    vec![
        (MemSpec::amem(), MemParams::Amem { short: ShortRunParams::new(0.15, 0.1, 0.7), level: 14.0 }),
        (
            MemSpec::component(),
            MemParams::Component {
                short: ShortRunParams::new(0.25, 0.1, 0.4),
                long: LongRunComponentParams { omega_tau: 0.4, alpha1_tau: 0.04, gamma1_tau: 0.02, beta1_tau: 0.93 },
            },
        ),
        (
            MemSpec::midas(MIDAS_K),
            MemParams::Midas {
                short: ShortRunParams::new(0.2, 0.1, 0.6),
                long: MidasLongRunParams { m: 2.5, zeta: -0.3, lag: BetaLag::decaying(MIDAS_K, 3.0).unwrap() },
            },
        ),
    ]
}

pub fn sim(params: MemParams, error: ErrorDist, n: usize, seed: u64) -> Simulation {
    simulate(&SimulationDesign::new(params, error, n), seed).unwrap()
}

/// A MEM-MIDAS panel on a percent scale, with macro lags for the
/// mixed-frequency models.
pub fn midas_panel(n: usize, seed: u64) -> PanelSeries {
    let p = MemParams::Midas {
        short: ShortRunParams::new(0.2, 0.1, 0.6),
        long: MidasLongRunParams { m: 2.5, zeta: -0.2, lag: BetaLag::decaying(MIDAS_K, 4.0).unwrap() },
    };
    sim(p, ErrorDist::Gamma { phi: 8.0 }, n, seed).series
}

/// Copy of `series` with every day from `from` on, and every macro value
/// from that day's period on, overwritten.
pub fn poison(series: &PanelSeries, from: usize) -> PanelSeries {
    let days: Vec<DayObs> = series
        .days()
        .iter()
        .enumerate()
        .map(|(i, d)| if i < from { *d } else { DayObs { date: d.date, ret: -1e3, rvol: 1e3 } })
        .collect();
    let mut out = PanelSeries::from_days(days).unwrap();
    if let Some(m) = series.macro_series() {
        let cut = series.periods()[series.day_periods()[from]].key;
        let raw: Vec<_> = m.iter().map(|(k, v)| if k >= cut { (k, 50.0) } else { (k, v) }).collect();
        out = out.attach_macro(&raw, MacroTransform::Level).unwrap();
    }
    out
}
