//! Mixed-frequency panel: daily observations nested in low-frequency periods,
//! with an optional aligned low-frequency (macro) series.
//!
//! A [`PanelSeries`] is immutable once built. Every day belongs to exactly
//! one period `t` and carries a within-period index `i = 1..N_t`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trading day: open-to-close return and realized volatility, both in
/// annualized percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayObs {
    pub date: NaiveDate,
    pub ret: f64,
    pub rvol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frequency {
    #[serde(alias = "calendar-month")]
    Month,
    #[serde(alias = "calendar-week")]
    Week,
}

/// A low-frequency period, identified by its first calendar day (first of
/// the month, or the Monday of the ISO week).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeriodKey {
    pub frequency: Frequency,
    pub start: NaiveDate,
}

impl PeriodKey {
    pub fn of(date: NaiveDate, frequency: Frequency) -> Self {
        let start = match frequency {
            Frequency::Month => NaiveDate::from_ymd_opt(date.year(), date.month(), 1).unwrap(),
            Frequency::Week => {
                date - Duration::days(date.weekday().num_days_from_monday() as i64)
            }
        };
        PeriodKey { frequency, start }
    }

    pub fn month(year: i32, month: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, 1).map(|start| PeriodKey {
            frequency: Frequency::Month,
            start,
        })
    }

    pub fn prev(self) -> Self {
        match self.frequency {
            Frequency::Month => {
                let (y, m) = if self.start.month() == 1 {
                    (self.start.year() - 1, 12)
                } else {
                    (self.start.year(), self.start.month() - 1)
                };
                PeriodKey::month(y, m).unwrap()
            }
            Frequency::Week => PeriodKey {
                frequency: Frequency::Week,
                start: self.start - Duration::days(7),
            },
        }
    }

    pub fn next(self) -> Self {
        match self.frequency {
            Frequency::Month => {
                let (y, m) = if self.start.month() == 12 {
                    (self.start.year() + 1, 1)
                } else {
                    (self.start.year(), self.start.month() + 1)
                };
                PeriodKey::month(y, m).unwrap()
            }
            Frequency::Week => PeriodKey {
                frequency: Frequency::Week,
                start: self.start + Duration::days(7),
            },
        }
    }

    /// Parses `YYYY-MM` (monthly only) or a full `YYYY-MM-DD` date, which is
    /// mapped to the period containing it.
    pub fn parse(s: &str, frequency: Frequency) -> Option<Self> {
        let s = s.trim();
        if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Some(PeriodKey::of(d, frequency));
        }
        if frequency == Frequency::Month {
            let (y, m) = s.split_once('-')?;
            return PeriodKey::month(y.parse().ok()?, m.parse().ok()?);
        }
        None
    }
}

impl fmt::Display for PeriodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frequency {
            Frequency::Month => write!(f, "{:04}-{:02}", self.start.year(), self.start.month()),
            Frequency::Week => {
                let w = self.start.iso_week();
                write!(f, "{:04}-W{:02}", w.year(), w.week())
            }
        }
    }
}

/// Span of days belonging to one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub key: PeriodKey,
    pub first_day: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MacroTransform {
    #[default]
    Level,
    /// `12^0.5 * 100 * (X_t / X_{t-1} - 1)`
    #[serde(alias = "mom-annualized-percent")]
    MonthOverMonthAnnualizedPercent,
}

/// Low-frequency series keyed by period, after transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    frequency: Frequency,
    transform: MacroTransform,
    values: BTreeMap<PeriodKey, f64>,
}

impl MacroSeries {
    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn transform(&self) -> MacroTransform {
        self.transform
    }

    pub fn get(&self, key: PeriodKey) -> Option<f64> {
        self.values.get(&key).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (PeriodKey, f64)> + '_ {
        self.values.iter().map(|(k, v)| (*k, *v))
    }

    /// `X_{t-1}, ..., X_{t-K}`, most recent first. Never reads `X_t` itself.
    pub fn lags(&self, key: PeriodKey, k: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(k);
        let mut missing = Vec::new();
        let mut p = key;
        for _ in 0..k {
            p = p.prev();
            match self.values.get(&p) {
                Some(v) => out.push(*v),
                None => missing.push(p.to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::MissingPeriods(missing))
        }
    }
}

/// Bookkeeping from CSV ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct LoadReport {
    pub dropped_rows: usize,
    pub resorted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    days: Vec<DayObs>,
    exog: Option<Vec<f64>>,
    frequency: Frequency,
    periods: Vec<Period>,
    day_period: Vec<usize>,
    macro_series: Option<MacroSeries>,
    load_report: LoadReport,
}

impl PanelSeries {
    /// Builds a monthly-period panel from strictly increasing days.
    pub fn from_days(days: Vec<DayObs>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::NoObservations);
        }
        for (row, d) in days.iter().enumerate() {
            if !d.ret.is_finite() {
                return Err(Error::Parse { row, message: "return is not finite".into() });
            }
            if !(d.rvol.is_finite() && d.rvol >= 0.0) {
                return Err(Error::Parse {
                    row,
                    message: format!("realized volatility {} is negative or nonfinite", d.rvol),
                });
            }
        }
        if let Some(w) = days.windows(2).position(|w| w[1].date <= w[0].date) {
            return Err(Error::invalid(format!(
                "days not strictly increasing at {}",
                days[w + 1].date
            )));
        }
        let mut s = PanelSeries {
            days,
            exog: None,
            frequency: Frequency::Month,
            periods: Vec::new(),
            day_period: Vec::new(),
            macro_series: None,
            load_report: LoadReport::default(),
        };
        s.index_periods(Frequency::Month);
        Ok(s)
    }

    /// Attaches a single predetermined, de-meaned regressor `z` aligned with
    /// the days.
    pub fn with_exog(mut self, z: Vec<f64>) -> Result<Self> {
        if z.len() != self.days.len() {
            return Err(Error::invalid(format!(
                "exogenous series has {} values for {} days",
                z.len(),
                self.days.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("exogenous series contains nonfinite values"));
        }
        self.exog = Some(z);
        Ok(self)
    }

    fn index_periods(&mut self, frequency: Frequency) {
        self.frequency = frequency;
        self.periods.clear();
        self.day_period.clear();
        for (idx, d) in self.days.iter().enumerate() {
            let key = PeriodKey::of(d.date, frequency);
            match self.periods.last_mut() {
                Some(p) if p.key == key => p.len += 1,
                _ => self.periods.push(Period { key, first_day: idx, len: 1 }),
            }
            self.day_period.push(self.periods.len() - 1);
        }
    }

    /// Regroups the days into calendar months or ISO weeks. Any attached
    /// macro series of a different frequency is dropped.
    pub fn assign_periods(mut self, frequency: Frequency) -> Self {
        self.index_periods(frequency);
        if self.macro_series.as_ref().is_some_and(|m| m.frequency != frequency) {
            self.macro_series = None;
        }
        self
    }

    /// Transforms `raw` and keys it by period. Fails if the raw periods have
    /// gaps or do not cover every period of the sample.
    pub fn attach_macro(
        mut self,
        raw: &[(PeriodKey, f64)],
        transform: MacroTransform,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::invalid("macro series is empty"));
        }
        if let Some((k, _)) = raw.iter().find(|(k, _)| k.frequency != self.frequency) {
            return Err(Error::invalid(format!(
                "macro period {k} does not match panel frequency {:?}",
                self.frequency
            )));
        }
        let mut sorted = raw.to_vec();
        sorted.sort_by_key(|(k, _)| *k);
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!("duplicate macro period {}", w[0].0)));
        }
        let mut missing = Vec::new();
        for w in sorted.windows(2) {
            let mut p = w[0].0.next();
            while p < w[1].0 {
                missing.push(p.to_string());
                p = p.next();
            }
        }
        let mut values = BTreeMap::new();
        match transform {
            MacroTransform::Level => {
                for (k, v) in &sorted {
                    if !v.is_finite() {
                        return Err(Error::invalid(format!("macro value at {k} is not finite")));
                    }
                    values.insert(*k, *v);
                }
            }
            MacroTransform::MonthOverMonthAnnualizedPercent => {
                for w in sorted.windows(2) {
                    let (prev, cur) = (w[0].1, w[1].1);
                    if !(prev > 0.0 && cur > 0.0 && prev.is_finite() && cur.is_finite()) {
                        return Err(Error::invalid(format!(
                            "growth-rate transform needs positive levels (at {})",
                            w[1].0
                        )));
                    }
                    if w[1].0 == w[0].0.next() {
                        values.insert(w[1].0, mom_annualized_percent(cur, prev));
                    }
                }
            }
        }
        for p in &self.periods {
            if !values.contains_key(&p.key) && !missing.contains(&p.key.to_string()) {
                missing.push(p.key.to_string());
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingPeriods(missing));
        }
        self.macro_series = Some(MacroSeries { frequency: self.frequency, transform, values });
        Ok(self)
    }

    pub fn days(&self) -> &[DayObs] {
        &self.days
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn frequency(&self) -> Frequency {
        self.frequency
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    /// Period ordinal of each day.
    pub fn day_periods(&self) -> &[usize] {
        &self.day_period
    }

    /// `(t, i)` for a day: the period ordinal and the 1-based position of the
    /// day inside its period.
    pub fn position(&self, day: usize) -> (usize, usize) {
        let t = self.day_period[day];
        (t, day - self.periods[t].first_day + 1)
    }

    pub fn macro_series(&self) -> Option<&MacroSeries> {
        self.macro_series.as_ref()
    }

    pub fn exog(&self) -> Option<&[f64]> {
        self.exog.as_deref()
    }

    pub fn load_report(&self) -> LoadReport {
        self.load_report
    }

    pub fn rvol(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.rvol).collect()
    }

    pub fn returns(&self) -> Vec<f64> {
        self.days.iter().map(|d| d.ret).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }

    /// Keeps days with `start <= date <= end`; the macro series is kept whole
    /// so that lags before the new start remain available.
    pub fn restrict(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Result<Self> {
        let keep: Vec<usize> = (0..self.days.len())
            .filter(|&i| {
                let d = self.days[i].date;
                start.is_none_or(|s| d >= s) && end.is_none_or(|e| d <= e)
            })
            .collect();
        if keep.is_empty() {
            return Err(Error::NoObservations);
        }
        let mut out = PanelSeries::from_days(keep.iter().map(|&i| self.days[i]).collect())?;
        out.index_periods(self.frequency);
        if let Some(z) = &self.exog {
            out.exog = Some(keep.iter().map(|&i| z[i]).collect());
        }
        out.macro_series = self.macro_series.clone();
        out.load_report = self.load_report;
        Ok(out)
    }

    /// Writes `date,ret,rvol[,exog]` with shortest round-trip float formatting.
    pub fn write_csv(&self, path: impl AsRef<Path>, header_lines: &[String]) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for line in header_lines {
            writeln!(f, "# {line}")?;
        }
        match &self.exog {
            Some(_) => writeln!(f, "date,ret,rvol,exog")?,
            None => writeln!(f, "date,ret,rvol")?,
        }
        for (i, d) in self.days.iter().enumerate() {
            match &self.exog {
                Some(z) => writeln!(f, "{},{:?},{:?},{:?}", d.date, d.ret, d.rvol, z[i])?,
                None => writeln!(f, "{},{:?},{:?}", d.date, d.ret, d.rvol)?,
            }
        }
        f.flush()?;
        Ok(())
    }
}

pub fn mom_annualized_percent(current: f64, previous: f64) -> f64 {
    12f64.sqrt() * 100.0 * (current / previous - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Variance,
    Volatility,
}

/// Column mapping for a daily CSV. Units are never inferred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub return_column: String,
    pub measure_column: String,
    pub measure: Measure,
    /// Variance is mapped to `sqrt(annualization * v)`, volatility to
    /// `sqrt(annualization) * v`. Use 1 for series that are already annualized.
    #[serde(default = "default_annualization")]
    pub annualization: f64,
    #[serde(default = "one")]
    pub return_scale: f64,
    #[serde(default)]
    pub exog_column: Option<String>,
}

fn default_date_column() -> String {
    "date".into()
}
fn default_date_format() -> String {
    "%Y-%m-%d".into()
}
fn default_annualization() -> f64 {
    252.0
}
fn one() -> f64 {
    1.0
}

impl CsvSchema {
    /// Schema of files written by [`PanelSeries::write_csv`].
    pub fn native() -> Self {
        CsvSchema {
            date_column: "date".into(),
            date_format: "%Y-%m-%d".into(),
            return_column: "ret".into(),
            measure_column: "rvol".into(),
            measure: Measure::Volatility,
            annualization: 1.0,
            return_scale: 1.0,
            exog_column: None,
        }
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "n/a")
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::invalid(format!("column '{name}' not found")))
}

/// Loads daily observations. Rows with a missing value are dropped and
/// counted; unsorted input is sorted and flagged. Periods default to months.
pub fn load_daily_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelSeries> {
    if !(schema.annualization.is_finite() && schema.annualization > 0.0) {
        return Err(Error::invalid("annualization factor must be positive"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let c_date = column(&headers, &schema.date_column)?;
    let c_ret = column(&headers, &schema.return_column)?;
    let c_meas = column(&headers, &schema.measure_column)?;
    let c_exog = schema.exog_column.as_deref().map(|c| column(&headers, c)).transpose()?;

    let mut rows: Vec<(DayObs, Option<f64>)> = Vec::new();
    let mut dropped = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // 1-based data row, header excluded
        let row = idx + 1;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(c_date), &schema.date_format).map_err(|e| {
            Error::Parse { row, message: format!("unparsable date '{}': {e}", field(c_date)) }
        })?;
        let cols = [Some(c_ret), Some(c_meas), c_exog];
        if cols.iter().flatten().any(|&c| is_missing(field(c))) {
            dropped += 1;
            continue;
        }
        let num = |c: usize| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("unparsable number '{}'", field(c)),
            })
        };
        let ret = num(c_ret)? * schema.return_scale;
        let raw = num(c_meas)?;
        if raw < 0.0 {
            return Err(Error::Parse {
                row,
                message: format!("negative {:?} value {raw}", schema.measure),
            });
        }
        let rvol = match schema.measure {
            Measure::Variance => (schema.annualization * raw).sqrt(),
            Measure::Volatility => schema.annualization.sqrt() * raw,
        };
        let z = c_exog.map(num).transpose()?;
        rows.push((DayObs { date, ret, rvol }, z));
    }
    if rows.is_empty() {
        return Err(Error::NoObservations);
    }
    let resorted = rows.windows(2).any(|w| w[1].0.date < w[0].0.date);
    if resorted {
        log::warn!("daily input was not sorted by date; sorting");
        rows.sort_by_key(|(d, _)| d.date);
    }
    let exog: Option<Vec<f64>> = c_exog.map(|_| rows.iter().map(|(_, z)| z.unwrap()).collect());
    let mut series = PanelSeries::from_days(rows.into_iter().map(|(d, _)| d).collect())?;
    if let Some(z) = exog {
        series = series.with_exog(z)?;
    }
    series.load_report = LoadReport { dropped_rows: dropped, resorted };
    Ok(series)
}

/// Reads `(period, value)` pairs from a CSV with the named columns.
pub fn load_macro_csv(
    path: impl AsRef<Path>,
    period_column: &str,
    value_column: &str,
    frequency: Frequency,
) -> Result<Vec<(PeriodKey, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let cp = column(&headers, period_column)?;
    let cv = column(&headers, value_column)?;
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 1;
        let ps = rec.get(cp).unwrap_or("");
        let key = PeriodKey::parse(ps, frequency)
            .ok_or_else(|| Error::Parse { row, message: format!("unparsable period '{ps}'") })?;
        let vs = rec.get(cv).unwrap_or("");
        let v = vs
            .parse::<f64>()
            .map_err(|_| Error::Parse { row, message: format!("unparsable value '{vs}'") })?;
        out.push((key, v));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
        let mut out = Vec::new();
        let mut cur = start;
        while out.len() < n {
            if cur.weekday().num_days_from_monday() < 5 {
                out.push(cur);
            }
            cur += Duration::days(1);
        }
        out
    }

    fn series_on(dates: &[NaiveDate]) -> PanelSeries {
        PanelSeries::from_days(
            dates.iter().map(|&date| DayObs { date, ret: 0.1, rvol: 10.0 }).collect(),
        )
        .unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn variance_schema(annualization: f64) -> CsvSchema {
        CsvSchema {
            date_column: "date".into(),
            date_format: "%Y-%m-%d".into(),
            return_column: "r".into(),
            measure_column: "rk".into(),
            measure: Measure::Variance,
            annualization,
            return_scale: 1.0,
            exog_column: None,
        }
    }

    #[test]
    fn variance_column_is_square_rooted() {
        let f = write_tmp("date,r,rk\n2005-01-03,0.5,164.3524\n");
        let s = load_daily_csv(f.path(), &variance_schema(1.0)).unwrap();
        assert!((s.days()[0].rvol - 12.82).abs() < 1e-12);
    }

    #[test]
    fn volatility_column_passes_through() {
        let f = write_tmp("date,ret,rvol\n2005-01-03,0.5,13.0\n");
        let s = load_daily_csv(f.path(), &CsvSchema::native()).unwrap();
        assert_eq!(s.days()[0].rvol, 13.0);
    }

    #[test]
    fn default_annualization_applies_to_variance() {
        let f = write_tmp("date,r,rk\n2005-01-03,0.5,1.0\n");
        let s = load_daily_csv(f.path(), &variance_schema(252.0)).unwrap();
        assert!((s.days()[0].rvol - 252f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_file_has_no_observations() {
        let f = write_tmp("date,r,rk\n");
        let err = load_daily_csv(f.path(), &variance_schema(1.0)).unwrap_err();
        assert!(matches!(err, Error::NoObservations));
        assert_eq!(err.to_string(), "no observations");
    }

    #[test]
    fn bad_date_reports_row() {
        let f = write_tmp("date,r,rk\n2005-01-03,0.5,1.0\n2005-13-40,0.5,1.0\n");
        match load_daily_csv(f.path(), &variance_schema(1.0)).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_variance_is_rejected() {
        let f = write_tmp("date,r,rk\n2005-01-03,0.5,-1.0\n");
        assert!(matches!(
            load_daily_csv(f.path(), &variance_schema(1.0)),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn missing_rows_dropped_and_unsorted_input_sorted() {
        let f = write_tmp(
            "date,r,rk\n2005-01-05,0.5,4.0\n2005-01-03,,4.0\n2005-01-04,-0.5,9.0\n2005-01-06,1,NA\n",
        );
        let s = load_daily_csv(f.path(), &variance_schema(1.0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.load_report(), LoadReport { dropped_rows: 2, resorted: true });
        assert_eq!(s.days()[0].date, d(2005, 1, 4));
        assert_eq!(s.days()[0].rvol, 3.0);
    }

    #[test]
    fn zero_volatility_days_are_retained() {
        let f = write_tmp("date,r,rk\n2005-01-03,0.5,0\n2005-01-04,0.5,1\n");
        let s = load_daily_csv(f.path(), &variance_schema(1.0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.days()[0].rvol, 0.0);
    }

    #[test]
    fn january_2005_forms_one_monthly_period() {
        let days: Vec<NaiveDate> =
            business_days(d(2005, 1, 3), 25).into_iter().filter(|x| x.month() == 1).collect();
        assert_eq!(days.len(), 21);
        let s = series_on(&days);
        assert_eq!(s.periods().len(), 1);
        assert_eq!(s.periods()[0].key, PeriodKey::month(2005, 1).unwrap());
        for i in 0..21 {
            assert_eq!(s.position(i), (0, i + 1));
        }
    }

    #[test]
    fn month_boundary_resets_day_index() {
        // Friday 2005-04-29 then Monday 2005-05-02
        let s = series_on(&[d(2005, 4, 28), d(2005, 4, 29), d(2005, 5, 2)]);
        assert_eq!(s.position(1), (0, 2));
        assert_eq!(s.position(2), (1, 1));
    }

    #[test]
    fn weekly_periods_over_two_weeks() {
        let s = series_on(&business_days(d(2005, 1, 3), 10)).assign_periods(Frequency::Week);
        let lens: Vec<usize> = s.periods().iter().map(|p| p.len).collect();
        assert_eq!(lens, vec![5, 5]);
        assert_eq!(s.periods().iter().map(|p| p.len).sum::<usize>(), s.len());
    }

    #[test]
    fn growth_transform_matches_hand_value() {
        let s = series_on(&[d(2005, 2, 1)]);
        let raw = [
            (PeriodKey::month(2005, 1).unwrap(), 100.0),
            (PeriodKey::month(2005, 2).unwrap(), 101.0),
        ];
        let s = s.attach_macro(&raw, MacroTransform::MonthOverMonthAnnualizedPercent).unwrap();
        let x = s.macro_series().unwrap().get(PeriodKey::month(2005, 2).unwrap()).unwrap();
        assert!((x - 3.4641016151377544).abs() < 1e-10);
    }

    #[test]
    fn constant_level_gives_zero_growth_and_level_is_identity() {
        let raw = [
            (PeriodKey::month(2005, 1).unwrap(), 5.0),
            (PeriodKey::month(2005, 2).unwrap(), 5.0),
        ];
        let s = series_on(&[d(2005, 2, 1)]);
        let g = s.clone().attach_macro(&raw, MacroTransform::MonthOverMonthAnnualizedPercent);
        assert_eq!(g.unwrap().macro_series().unwrap().get(raw[1].0), Some(0.0));
        let l = s.attach_macro(&raw, MacroTransform::Level).unwrap();
        assert_eq!(l.macro_series().unwrap().get(raw[1].0), Some(5.0));
    }

    #[test]
    fn gaps_in_macro_are_listed() {
        let s = series_on(&[d(2005, 4, 1)]);
        let raw = [
            (PeriodKey::month(2005, 1).unwrap(), 1.0),
            (PeriodKey::month(2005, 4).unwrap(), 1.0),
        ];
        match s.attach_macro(&raw, MacroTransform::Level).unwrap_err() {
            Error::MissingPeriods(p) => assert_eq!(p, vec!["2005-02", "2005-03"]),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn lags_never_read_current_or_future_periods() {
        let s = series_on(&[d(2005, 4, 1)]);
        let raw: Vec<_> = (1..=6).map(|m| (PeriodKey::month(2005, m).unwrap(), m as f64)).collect();
        let s = s.attach_macro(&raw, MacroTransform::Level).unwrap();
        let lags = s.macro_series().unwrap().lags(PeriodKey::month(2005, 4).unwrap(), 3).unwrap();
        assert_eq!(lags, vec![3.0, 2.0, 1.0]);
        assert!(s.macro_series().unwrap().lags(PeriodKey::month(2005, 4).unwrap(), 4).is_err());
    }

    #[test]
    fn period_keys_roll_over_years() {
        let jan = PeriodKey::month(2005, 1).unwrap();
        assert_eq!(jan.prev().to_string(), "2004-12");
        assert_eq!(jan.prev().next(), jan);
        assert_eq!(PeriodKey::parse("2005-01", Frequency::Month), Some(jan));
        assert_eq!(PeriodKey::parse("2005-01-17", Frequency::Month), Some(jan));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn csv_round_trip_is_exact(
                vals in proptest::collection::vec((-200.0f64..200.0, 0.0f64..150.0), 1..60)
            ) {
                let dates = business_days(d(2003, 3, 3), vals.len());
                let days: Vec<DayObs> = dates.iter().zip(&vals)
                    .map(|(&date, &(ret, rvol))| DayObs { date, ret, rvol }).collect();
                let s = PanelSeries::from_days(days).unwrap();
                let f = tempfile::NamedTempFile::new().unwrap();
                s.write_csv(f.path(), &["test".into()]).unwrap();
                let back = load_daily_csv(f.path(), &CsvSchema::native()).unwrap();
                prop_assert_eq!(back.days(), s.days());
                prop_assert_eq!(back.periods().iter().map(|p| p.len).sum::<usize>(), back.len());
            }
        }
    }
}
