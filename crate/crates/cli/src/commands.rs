use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use chrono::NaiveDate;
use serde::Serialize;

use dmem::benchmarks::{fit_ahar, fit_garch_family, GarchFitOptions};
use dmem::data::FilterData;
use dmem::evaluation::{
    aggregate_tau_monthly, mcs, mse, qlike, rolling_backtest, tau_correlations, BacktestPlan, BootstrapSettings,
    Forecaster, LossPanel, McsResult, ModelChoice, TauSeries,
};
use dmem::inference::{fit_mem, FitResult, ModelId};
use dmem::mem::simulate;
use dmem::timeseries::PanelSeries;

use crate::config::RunConfig;
use crate::output::{num, relative_to, Emitter};

/// A loaded configuration with its resolved locations.
pub struct Run {
    pub cfg: RunConfig,
    /// Directory relative data paths resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = RunConfig::load(config)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let base = match config.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let out = out.unwrap_or_else(|| relative_to(&base, &cfg.output_dir));
        Ok(Run { cfg, base, out })
    }

    fn series(&self, command: &str) -> Result<PanelSeries> {
        let data = self.cfg.data.as_ref().with_context(|| format!("the {command} command needs a [data] section"))?;
        data.load(&self.base)
    }

    fn choices(&self, command: &str) -> Result<Vec<ModelChoice>> {
        let c = self.cfg.choices()?;
        ensure!(!c.is_empty(), "the {command} command needs at least one [[models]] entry");
        Ok(c)
    }
}

/// In-sample fit on the whole panel. The flag marks a path whose `mean`
/// is a conditional variance.
fn fit_in_sample(choice: &ModelChoice, series: &PanelSeries) -> Result<(FitResult, FilterData, bool)> {
    let data = FilterData::from_series(series, choice.macro_k())?;
    Ok(match choice {
        ModelChoice::Mem { spec, estimator, options } => {
            let data = spec.prepare(series)?;
            (fit_mem(spec, &data, *estimator, None, options)?.result, data, false)
        }
        ModelChoice::Ahar => (fit_ahar(&data)?.result, data, false),
        ModelChoice::Garch { model } => (fit_garch_family(&data, *model, &GarchFitOptions::default())?.result, data, true),
    })
}

fn opt_num(v: Option<&Vec<f64>>, i: usize) -> String {
    num(v.map(|s| s[i]))
}

pub fn fit(run: &Run) -> Result<Vec<PathBuf>> {
    let choices = run.choices("fit")?;
    let series = run.series("fit")?;
    let mut fits = Vec::new();
    for c in &choices {
        let id = c.id();
        log::info!("fitting {id}");
        let (result, _, variance) = fit_in_sample(c, &series).with_context(|| format!("model {id}"))?;
        fits.push((id, result, variance));
    }

    let mut em = Emitter::new(run.out.clone(), &run.cfg, "fit")?;
    for (id, r, _) in &fits {
        em.json(&format!("fit_{id}.json"), "fit-result", r)?;
    }
    em.csv(
        "params.csv",
        &[],
        &["model", "estimator", "param", "value", "se", "se_opg", "se_hessian", "se_sandwich", "at_bound"],
        |w| {
            for (id, r, _) in &fits {
                let est = r.estimator.to_string();
                for p in &r.params {
                    w.write_record([
                        id.as_str(),
                        &est,
                        &p.name,
                        &num(Some(p.value)),
                        &num(p.se),
                        &num(p.se_opg),
                        &num(p.se_hessian),
                        &num(p.se_sandwich),
                        if p.at_bound { "true" } else { "false" },
                    ])?;
                }
                if let Some(s) = &r.shape {
                    w.write_record([id.as_str(), &est, &s.name, &num(Some(s.value)), "", "", "", "", "false"])?;
                }
            }
            Ok(())
        },
    )?;
    em.csv(
        "paths.csv",
        &["mean is mu for MEM and AHAR and the conditional variance h for GARCH-type models; vol is in the units of the data".into()],
        &["date", "model", "mean", "vol", "tau", "xi", "residual"],
        |w| {
            for (id, r, variance) in &fits {
                let p = &r.path;
                for i in 0..p.dates.len() {
                    let vol = if *variance { p.mean[i].max(0.0).sqrt() } else { p.mean[i] };
                    w.write_record([
                        p.dates[i].to_string(),
                        id.to_string(),
                        num(Some(p.mean[i])),
                        num(Some(vol)),
                        opt_num(p.tau.as_ref(), i),
                        opt_num(p.xi.as_ref(), i),
                        num(Some(p.residuals[i])),
                    ])?;
                }
            }
            Ok(())
        },
    )?;
    em.csv("ljung_box.csv", &[], &["model", "lag", "statistic", "p_value"], |w| {
        for (id, r, _) in &fits {
            for lb in &r.ljung_box {
                w.write_record([id.to_string(), lb.lag.to_string(), num(Some(lb.statistic)), num(Some(lb.p_value))])?;
            }
        }
        Ok(())
    })?;

    let realized: HashMap<NaiveDate, f64> = series.dates().into_iter().zip(series.rvol()).collect();
    em.csv("in_sample_loss.csv", &[], &["model", "days", "qlike", "mse"], |w| {
        for (id, r, variance) in &fits {
            let p = &r.path;
            let (mut q, mut m) = (0.0, 0.0);
            for (d, &mean) in p.dates.iter().zip(&p.mean) {
                let fc = if *variance { mean.max(0.0).sqrt() } else { mean };
                let x = realized[d];
                q += qlike(x, fc).with_context(|| format!("model {id} on {d}"))?;
                m += mse(x, fc);
            }
            let n = p.dates.len() as f64;
            w.write_record([id.to_string(), p.dates.len().to_string(), num(Some(q / n)), num(Some(m / n))])?;
        }
        Ok(())
    })?;
    Ok(em.written().to_vec())
}

#[derive(Serialize)]
struct BacktestSummary<'a> {
    plan: &'a BacktestPlan,
    refits: usize,
    out_of_sample_days: usize,
    models: &'a [String],
    dropped: &'a [String],
    alpha: f64,
    bootstrap: BootstrapSettings,
}

/// MCS flags for one table row: `None` when the row is too short to test.
fn row_mcs(panel: &LossPanel, alpha: f64, boot: &BootstrapSettings) -> Result<Option<McsResult>> {
    if panel.n_models() < 2 || panel.n_days() < 50 {
        return Ok(None);
    }
    Ok(Some(mcs(panel, alpha, boot)?))
}

fn sub_panel(p: &LossPanel, from: usize, to: usize) -> Result<LossPanel> {
    Ok(LossPanel::new(
        p.dates[from..to].to_vec(),
        p.models.clone(),
        p.kind,
        p.losses.iter().map(|r| r[from..to].to_vec()).collect(),
    )?)
}

pub fn backtest(run: &Run) -> Result<Vec<PathBuf>> {
    let choices = run.choices("backtest")?;
    let series = run.series("backtest")?;
    let bt = &run.cfg.backtest;
    let plan = bt.plan();
    let models: Vec<&dyn Forecaster> = choices.iter().map(|c| c as &dyn Forecaster).collect();
    let out = rolling_backtest(&series, &plan, &models)?;
    ensure!(!out.models.is_empty(), "every model was dropped from the backtest");
    let boot = BootstrapSettings { replications: bt.replications, block_len: bt.block_len, seed: run.cfg.seed };

    let mut em = Emitter::new(run.out.clone(), &run.cfg, "backtest")?;
    em.csv("forecasts.csv", &[], &["date", "model", "window_id", "fitted_window", "forecast", "realized"], |w| {
        for r in &out.records {
            w.write_record([
                r.date.to_string(),
                r.model.clone(),
                r.window_id.to_string(),
                r.fitted_window.to_string(),
                num(Some(r.forecast)),
                num(Some(r.realized)),
            ])?;
        }
        Ok(())
    })?;
    em.csv("events.csv", &[], &["model", "window_id", "message"], |w| {
        for e in &out.events {
            w.write_record([e.model.clone(), e.window_id.to_string(), e.message.clone()])?;
        }
        Ok(())
    })?;

    let mut table = Vec::new();
    let mut full = Vec::new();
    for &kind in &bt.losses {
        let panel = out.loss_panel(kind)?;
        let mut start = 0;
        for row in panel.mean_by_year() {
            let (from, to) = if row.label == "Full" { (0, panel.n_days()) } else { (start, start + row.days) };
            start = to.min(panel.n_days());
            let flags = if panel.n_models() == 1 {
                // a lone model is its own confidence set
                None
            } else {
                row_mcs(&sub_panel(&panel, from, to)?, bt.alpha, &boot)?
            };
            if row.label == "Full" {
                if let Some(r) = &flags {
                    full.push((kind, r.clone()));
                }
            }
            for (m, name) in panel.models.iter().enumerate() {
                let (in_mcs, p) = match (&flags, panel.n_models()) {
                    (_, 1) => ("true".to_string(), num(Some(1.0))),
                    (Some(r), _) => (r.contains(name).to_string(), num(Some(r.p_values[m].1))),
                    (None, _) => (String::new(), String::new()),
                };
                table.push([
                    kind.name().to_string(),
                    row.label.clone(),
                    row.days.to_string(),
                    name.clone(),
                    num(Some(row.means[m])),
                    in_mcs,
                    p,
                ]);
            }
        }
    }
    em.csv(
        "losses.csv",
        &[format!("mcs alpha={} replications={} seed={}", bt.alpha, bt.replications, run.cfg.seed)],
        &["loss", "period", "days", "model", "mean_loss", "in_mcs", "mcs_p_value"],
        |w| {
            for r in &table {
                w.write_record(r)?;
            }
            Ok(())
        },
    )?;
    for (kind, r) in &full {
        em.json(&format!("mcs_{}.json", kind.name().to_lowercase()), "mcs", r)?;
    }
    let days = out.records.iter().filter(|r| Some(&r.model) == out.models.first()).count();
    em.json(
        "backtest.json",
        "backtest-summary",
        &BacktestSummary {
            plan: &out.plan,
            refits: out.refits,
            out_of_sample_days: days,
            models: &out.models,
            dropped: &out.dropped,
            alpha: bt.alpha,
            bootstrap: boot,
        },
    )?;
    Ok(em.written().to_vec())
}

pub fn simulate_cmd(run: &Run) -> Result<Vec<PathBuf>> {
    let design = run.cfg.simulate.as_ref().context("the simulate command needs a [simulate] section")?;
    let sim = simulate(design, run.cfg.seed)?;
    ensure!(sim.series.len() == design.horizon, "simulated {} days, requested {}", sim.series.len(), design.horizon);

    let mut em = Emitter::new(run.out.clone(), &run.cfg, "simulate")?;
    let echo = vec![format!("seed={}", run.cfg.seed), format!("design={}", serde_json::to_string(design)?)];
    let daily = em.path("daily.csv");
    let mut header = em.header_lines();
    header.extend(echo.iter().cloned());
    sim.series.write_csv(&daily, &header).with_context(|| format!("cannot write {}", daily.display()))?;
    em.record(daily);

    let dates = sim.series.dates();
    em.csv("truth.csv", &echo, &["date", "mu", "tau", "xi", "eps"], |w| {
        for i in 0..dates.len() {
            w.write_record([
                dates[i].to_string(),
                num(Some(sim.path.mu[i])),
                num(Some(sim.path.tau[i])),
                num(Some(sim.path.xi[i])),
                num(Some(sim.eps[i])),
            ])?;
        }
        Ok(())
    })?;
    if let Some(m) = sim.series.macro_series() {
        em.csv("macro.csv", &echo, &["period", "value"], |w| {
            for (k, v) in m.iter() {
                w.write_record([k.to_string(), num(Some(v))])?;
            }
            Ok(())
        })?;
    }
    Ok(em.written().to_vec())
}

pub fn longrun(run: &Run) -> Result<Vec<PathBuf>> {
    let lr = run.cfg.longrun.as_ref().context("the longrun command needs a [longrun] section")?;
    ensure!(!lr.indices.is_empty(), "longrun.indices is empty");
    let choices = run.choices("longrun")?;
    for c in &choices {
        let id = c.id();
        if !matches!(id, ModelId::ComponentMem | ModelId::MemMidas | ModelId::Gm | ModelId::Dagm) {
            bail!("model {id} has no long-run component");
        }
    }

    let mut all = Vec::new();
    for index in &lr.indices {
        let series = index.data.load(&run.base).with_context(|| format!("index {}", index.name))?;
        for c in &choices {
            let id = c.id();
            let (r, data, variance) =
                fit_in_sample(c, &series).with_context(|| format!("model {id} on index {}", index.name))?;
            let tau = r.path.tau.with_context(|| format!("model {id} returned no tau path"))?;
            ensure!(tau.len() == data.len(), "model {id}: tau path covers {} of {} days", tau.len(), data.len());
            // GARCH-type tau scales a variance; report it as a volatility
            let tau: Vec<f64> = if variance { tau.iter().map(|v| v.sqrt()).collect() } else { tau };
            let monthly = aggregate_tau_monthly(&tau, &data.period, &data.period_keys)?;
            all.push(TauSeries {
                model: id.to_string(),
                index: index.name.clone(),
                periods: monthly.iter().map(|p| p.0).collect(),
                values: monthly.iter().map(|p| p.1).collect(),
            });
        }
    }

    // correlations run on the periods every series covers
    let mut common: BTreeSet<_> = all[0].periods.iter().copied().collect();
    for s in &all[1..] {
        let own: BTreeSet<_> = s.periods.iter().copied().collect();
        common = common.intersection(&own).copied().collect();
    }
    ensure!(common.len() >= 3, "the tau series share only {} periods", common.len());
    let aligned: Vec<TauSeries> = all
        .iter()
        .map(|s| {
            let (periods, values) =
                s.periods.iter().zip(&s.values).filter(|(p, _)| common.contains(p)).map(|(p, v)| (*p, *v)).unzip();
            TauSeries { model: s.model.clone(), index: s.index.clone(), periods, values }
        })
        .collect();
    let corr = tau_correlations(&aligned)?;

    let mut em = Emitter::new(run.out.clone(), &run.cfg, "longrun")?;
    em.csv(
        "tau_monthly.csv",
        &["date is the first day of the period; GARCH-type values are square roots of the variance component".into()],
        &["date", "value", "model", "index"],
        |w| {
            for s in &all {
                for (p, v) in s.periods.iter().zip(&s.values) {
                    w.write_record([p.start.to_string(), num(Some(*v)), s.model.clone(), s.index.clone()])?;
                }
            }
            Ok(())
        },
    )?;
    em.csv(
        "correlations.csv",
        &[],
        &["model_a", "index_a", "model_b", "index_b", "correlation", "periods"],
        |w| {
            for c in &corr {
                w.write_record([
                    c.model_a.clone(),
                    c.index_a.clone(),
                    c.model_b.clone(),
                    c.index_b.clone(),
                    num(Some(c.correlation)),
                    c.n.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    Ok(em.written().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmem::evaluation::LossKind;

    #[test]
    fn sub_panel_keeps_models() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates: Vec<NaiveDate> = (0..10).map(|i| d0 + chrono::Duration::days(i)).collect();
        let p = LossPanel::new(dates, vec!["a".into(), "b".into()], LossKind::Qlike, vec![vec![1.0; 10], vec![2.0; 10]])
            .unwrap();
        let s = sub_panel(&p, 2, 5).unwrap();
        assert_eq!(s.n_days(), 3);
        assert_eq!(s.mean_losses(), vec![1.0, 2.0]);
        assert!(row_mcs(&s, 0.1, &BootstrapSettings::default()).unwrap().is_none());
    }
}
