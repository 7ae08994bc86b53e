use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::PeriodKey;

/// A monthly long-run component of one model on one index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSeries {
    pub model: String,
    pub index: String,
    pub periods: Vec<PeriodKey>,
    pub values: Vec<f64>,
}

/// Per-period mean of a daily `tau` path. A path that is already constant
/// within every period (MEM-MIDAS) comes back unchanged.
pub fn aggregate_tau_monthly(tau: &[f64], period: &[usize], keys: &[PeriodKey]) -> Result<Vec<(PeriodKey, f64)>> {
    if tau.len() != period.len() {
        return Err(Error::invalid(format!("tau has {} days, period index {}", tau.len(), period.len())));
    }
    let mut out: Vec<(PeriodKey, f64)> = Vec::new();
    let mut i = 0;
    while i < tau.len() {
        let p = period[i];
        let key = *keys.get(p).ok_or_else(|| Error::invalid(format!("period {p} has no key")))?;
        let start = i;
        while i < tau.len() && period[i] == p {
            i += 1;
        }
        let days = &tau[start..i];
        let v = if days.iter().all(|t| *t == days[0]) {
            days[0]
        } else {
            days.iter().sum::<f64>() / days.len() as f64
        };
        out.push((key, v));
    }
    Ok(out)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("correlation needs at least two points"));
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("correlation of a constant series"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCorrelation {
    pub model_a: String,
    pub index_a: String,
    pub model_b: String,
    pub index_b: String,
    pub correlation: f64,
    pub n: usize,
}

/// Pearson correlations of every pair that shares a model (across indices)
/// or an index (across models). Paired series must cover the same periods.
pub fn tau_correlations(series: &[TauSeries]) -> Result<Vec<TauCorrelation>> {
    let mut out = Vec::new();
    for (i, a) in series.iter().enumerate() {
        if a.periods.len() != a.values.len() {
            return Err(Error::invalid(format!("{}/{}: length mismatch", a.model, a.index)));
        }
        for b in &series[i + 1..] {
            if a.model != b.model && a.index != b.index {
                continue;
            }
            if a.values.len() != b.values.len() || a.periods != b.periods {
                return Err(Error::invalid(format!(
                    "length mismatch: {}/{} has {} periods, {}/{} has {}",
                    a.model,
                    a.index,
                    a.values.len(),
                    b.model,
                    b.index,
                    b.values.len()
                )));
            }
            out.push(TauCorrelation {
                model_a: a.model.clone(),
                index_a: a.index.clone(),
                model_b: b.model.clone(),
                index_b: b.index.clone(),
                correlation: pearson(&a.values, &b.values)?,
                n: a.values.len(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: usize) -> Vec<PeriodKey> {
        let mut k = PeriodKey::month(2010, 1).unwrap();
        (0..n)
            .map(|_| {
                let c = k;
                k = k.next();
                c
            })
            .collect()
    }

    #[test]
    fn monthly_means() {
        let ks = keys(2);
        let m = aggregate_tau_monthly(&[8.0, 12.0, 3.0, 3.0, 3.0], &[0, 0, 1, 1, 1], &ks).unwrap();
        assert_eq!(m, vec![(ks[0], 10.0), (ks[1], 3.0)]);
        // period-constant input passes through bit for bit
        let v = 0.1f64 + 0.2;
        let m = aggregate_tau_monthly(&[v; 7], &[0; 7], &ks).unwrap();
        assert_eq!(m[0].1, v);
        assert!(aggregate_tau_monthly(&[1.0], &[0, 0], &ks).is_err());
    }

    #[test]
    fn correlations() {
        let ks = keys(4);
        let s = |model: &str, index: &str, v: Vec<f64>| TauSeries {
            model: model.into(),
            index: index.into(),
            periods: ks.clone(),
            values: v,
        };
        let a = s("component-mem", "spx", vec![1.0, 2.0, 3.0, 4.0]);
        let b = s("mem-midas", "spx", vec![4.0, 3.0, 2.0, 1.0]);
        let c = s("component-mem", "ftse", vec![1.0, 2.0, 3.0, 4.0]);
        let d = s("mem-midas", "ftse", vec![2.0, 1.0, 0.0, 5.0]);
        let t = tau_correlations(&[a.clone(), b, c, d]).unwrap();
        // two within-model and two within-index pairs
        assert_eq!(t.len(), 4);
        assert!((t[0].correlation + 1.0).abs() < 1e-12);
        assert!((t[1].correlation - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a.values, &a.values).unwrap(), 1.0);
        let mut short = s("mem-midas", "spx", vec![1.0, 2.0, 3.0]);
        short.periods.pop();
        assert!(tau_correlations(&[a, short]).is_err());
    }
}
