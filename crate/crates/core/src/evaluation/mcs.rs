use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::LossPanel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub replications: usize,
    /// `None` picks `ceil(N^(1/3))`.
    pub block_len: Option<usize>,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        BootstrapSettings { replications: 5000, block_len: None, seed: 20_240_101 }
    }
}

/// One rejected equal-predictive-ability test and the model it removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsElimination {
    pub model: String,
    /// Studentized average deficit of the eliminated model.
    pub t_stat: f64,
    pub t_sq: f64,
    pub p_value: f64,
    /// Running maximum of the p-values up to this step.
    pub mcs_p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub alpha: f64,
    pub survivors: Vec<String>,
    pub eliminated: Vec<McsElimination>,
    /// MCS p-value of every model, in panel order.
    pub p_values: Vec<(String, f64)>,
    pub replications: usize,
    pub block_len: usize,
    pub seed: u64,
}

impl McsResult {
    pub fn contains(&self, model: &str) -> bool {
        self.survivors.iter().any(|m| m == model)
    }
}

pub fn default_block_len(n: usize) -> usize {
    ((n as f64).cbrt().ceil() as usize).max(1)
}

/// Mean loss of every model under one moving-block resample. Replication
/// `b` draws from its own ChaCha8 stream, so results do not depend on
/// scheduling.
fn bootstrap_means(panel: &LossPanel, s: &BootstrapSettings, block: usize) -> Vec<Vec<f64>> {
    let n = panel.n_days();
    let starts = n - block + 1;
    let nblocks = n.div_ceil(block);
    (0..s.replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(b as u64);
            let mut sums = vec![0.0; panel.n_models()];
            let mut taken = 0;
            for _ in 0..nblocks {
                let st = rng.random_range(0..starts);
                let len = block.min(n - taken);
                for (m, row) in panel.losses.iter().enumerate() {
                    sums[m] += row[st..st + len].iter().sum::<f64>();
                }
                taken += len;
            }
            sums.into_iter().map(|v| v / n as f64).collect()
        })
        .collect()
}

/// Model Confidence Set with the semi-quadratic statistic
/// `T_SQ = sum_{i<j} t_ij^2`. Models are removed one at a time, largest
/// studentized average deficit first, while equal predictive ability is
/// rejected at `alpha`.
pub fn mcs(panel: &LossPanel, alpha: f64, settings: &BootstrapSettings) -> Result<McsResult> {
    let m = panel.n_models();
    let n = panel.n_days();
    if m < 2 {
        return Err(Error::invalid(format!("MCS needs at least two models, got {m}")));
    }
    if n < 50 {
        return Err(Error::invalid(format!("MCS needs at least 50 loss observations, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if settings.replications == 0 {
        return Err(Error::invalid("MCS needs at least one bootstrap replication"));
    }
    let block = settings.block_len.unwrap_or_else(|| default_block_len(n)).clamp(1, n);
    let mean: Vec<f64> = panel.losses.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let boot = bootstrap_means(panel, settings, block);
    let bf = settings.replications as f64;

    // bootstrap variance of the differential between i and j
    let var_diff = |i: usize, j: usize| -> f64 {
        let d = mean[i] - mean[j];
        boot.iter().map(|b| (b[i] - b[j] - d).powi(2)).sum::<f64>() / bf
    };

    let mut alive: Vec<usize> = (0..m).collect();
    let mut eliminated = Vec::new();
    let mut running_p: f64 = 0.0;
    let mut p_of = vec![0.0; m];
    while alive.len() > 1 {
        let k = alive.len();
        let mut t_sq = 0.0;
        let mut degenerate = false;
        let mut pairs = Vec::new();
        for a in 0..k {
            for c in a + 1..k {
                let (i, j) = (alive[a], alive[c]);
                let d = mean[i] - mean[j];
                let v = var_diff(i, j);
                if v > 0.0 {
                    t_sq += d * d / v;
                    pairs.push((i, j, d, v));
                } else if d != 0.0 {
                    degenerate = true;
                }
            }
        }
        let p_value = if degenerate {
            0.0
        } else if t_sq == 0.0 {
            1.0
        } else {
            let exceed = boot
                .iter()
                .filter(|b| {
                    let t: f64 = pairs.iter().map(|&(i, j, d, v)| (b[i] - b[j] - d).powi(2) / v).sum();
                    t >= t_sq
                })
                .count();
            exceed as f64 / bf
        };
        running_p = running_p.max(p_value);
        if p_value >= alpha {
            break;
        }

        // elimination rule: largest studentized deficit against the set average
        let set_mean = alive.iter().map(|&i| mean[i]).sum::<f64>() / k as f64;
        let mut worst = (alive[0], f64::NEG_INFINITY);
        for &i in &alive {
            let d = mean[i] - set_mean;
            let v = boot
                .iter()
                .map(|b| {
                    let bm = alive.iter().map(|&j| b[j]).sum::<f64>() / k as f64;
                    (b[i] - bm - d).powi(2)
                })
                .sum::<f64>()
                / bf;
            let t = if v > 0.0 {
                d / v.sqrt()
            } else if d > 0.0 {
                f64::INFINITY
            } else if d < 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            };
            if t > worst.1 || (t == worst.1 && mean[i] > mean[worst.0]) {
                worst = (i, t);
            }
        }
        let (out, t_stat) = worst;
        p_of[out] = running_p;
        eliminated.push(McsElimination {
            model: panel.models[out].clone(),
            t_stat,
            t_sq,
            p_value,
            mcs_p_value: running_p,
        });
        alive.retain(|&i| i != out);
    }
    // survivors carry the p-value of the final, accepted test; a lone
    // survivor gets 1
    let survivor_p = if alive.len() == 1 { 1.0 } else { running_p };
    for &i in &alive {
        p_of[i] = survivor_p;
    }
    Ok(McsResult {
        alpha,
        survivors: alive.iter().map(|&i| panel.models[i].clone()).collect(),
        eliminated,
        p_values: panel.models.iter().cloned().zip(p_of).collect(),
        replications: settings.replications,
        block_len: block,
        seed: settings.seed,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::evaluation::LossKind;
    use chrono::NaiveDate;
    use rand_distr::{Distribution, Exp, Uniform};

    pub(crate) fn panel(rows: Vec<Vec<f64>>, names: &[&str]) -> LossPanel {
        let d0 = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
        let n = rows[0].len();
        LossPanel::new(
            (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect(),
            names.iter().map(|s| s.to_string()).collect(),
            LossKind::Qlike,
            rows,
        )
        .unwrap()
    }

    /// A and B share a base loss with independent multiplicative noise; C is
    /// B plus positive noise.
    pub(crate) fn three_model_panel(n: usize, seed: u64) -> LossPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = Exp::new(20.0).unwrap();
        let wiggle = Uniform::new(-0.3, 0.3).unwrap();
        let extra = Exp::new(50.0).unwrap();
        let (mut a, mut b, mut c) = (vec![], vec![], vec![]);
        for _ in 0..n {
            let l: f64 = base.sample(&mut rng);
            let lb = l * (1.0 + wiggle.sample(&mut rng));
            a.push(l * (1.0 + wiggle.sample(&mut rng)));
            b.push(lb);
            c.push(lb + extra.sample(&mut rng));
        }
        panel(vec![a, b, c], &["A", "B", "C"])
    }

    fn settings(seed: u64) -> BootstrapSettings {
        BootstrapSettings { replications: 2000, block_len: None, seed }
    }

    #[test]
    fn strict_dominance_is_a_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..300).map(|_| Exp::new(10.0).unwrap().sample(&mut rng)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.01 + 0.05 * rng.random::<f64>()).collect();
        let r = mcs(&panel(vec![a.clone(), b], &["A", "B"]), 0.25, &settings(3)).unwrap();
        assert_eq!(r.survivors, vec!["A"]);
        // constant differential: zero bootstrap variance
        let b: Vec<f64> = a.iter().map(|v| v + 0.02).collect();
        let r = mcs(&panel(vec![b, a], &["B", "A"]), 0.25, &settings(3)).unwrap();
        assert_eq!(r.survivors, vec!["A"]);
        assert_eq!(r.eliminated[0].p_value, 0.0);
    }

    #[test]
    fn identical_losses_both_survive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..200).map(|_| Exp::new(10.0).unwrap().sample(&mut rng)).collect();
        let r = mcs(&panel(vec![a.clone(), a], &["A", "B"]), 0.25, &settings(4)).unwrap();
        assert_eq!(r.survivors.len(), 2);
        assert!(r.p_values.iter().all(|(_, p)| *p == 1.0));
    }

    #[test]
    fn three_model_oracle() {
        let hits = (0..40)
            .filter(|&s| {
                let r = mcs(&three_model_panel(500, 100 + s), 0.05, &settings(s)).unwrap();
                r.survivors == ["A", "B"]
            })
            .count();
        assert!(hits >= 36, "{hits}/40");
    }

    #[test]
    fn deterministic_and_monotone_in_alpha() {
        let p = three_model_panel(300, 7);
        let r1 = mcs(&p, 0.1, &settings(9)).unwrap();
        let r2 = mcs(&p, 0.1, &settings(9)).unwrap();
        assert_eq!(r1, r2);
        let mut prev = usize::MAX;
        for alpha in [0.01, 0.05, 0.1, 0.25, 0.5, 0.9] {
            let r = mcs(&p, alpha, &settings(9)).unwrap();
            assert!(r.survivors.len() <= prev);
            prev = r.survivors.len();
            for e in r.eliminated.windows(2) {
                assert!(e[1].mcs_p_value >= e[0].mcs_p_value);
            }
            assert!(r.p_values.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn input_checks() {
        let a = vec![1.0; 60];
        assert!(mcs(&panel(vec![a.clone()], &["A"]), 0.25, &settings(1)).is_err());
        let short = vec![1.0; 20];
        assert!(mcs(&panel(vec![short.clone(), short], &["A", "B"]), 0.25, &settings(1)).is_err());
        assert!(mcs(&panel(vec![a.clone(), a], &["A", "B"]), 1.5, &settings(1)).is_err());
        assert_eq!(default_block_len(3000), 15);
        assert_eq!(default_block_len(27), 3);
    }
}
