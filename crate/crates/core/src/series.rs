//! Measured epidemic series and the fitting window cut from them.

use alloc::vec::Vec;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dde::LinearHistory;
use crate::math::ceil;
use crate::model::{Compartment, State};
use crate::{Error, Result};

/// A day where a cumulative column went down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityWarning {
    pub compartment: Compartment,
    pub date: NaiveDate,
    pub previous: f64,
    pub value: f64,
}

/// Daily series of active infected, cumulative recovered and cumulative
/// deceased, with susceptible derived as `n0 − i − r − d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicSeries {
    start: NaiveDate,
    n0: f64,
    infected: Vec<f64>,
    recovered: Vec<f64>,
    deceased: Vec<f64>,
    susceptible: Vec<f64>,
    warnings: Vec<MonotonicityWarning>,
}

impl EpidemicSeries {
    /// Rows are consecutive days starting at `start`.
    pub fn new(
        start: NaiveDate,
        infected: Vec<f64>,
        recovered: Vec<f64>,
        deceased: Vec<f64>,
        n0: f64,
    ) -> Result<Self> {
        let len = infected.len();
        if len == 0 {
            return Err(Error::invalid("series", "no rows"));
        }
        for other in [recovered.len(), deceased.len()] {
            if other != len {
                return Err(Error::LengthMismatch { left: len, right: other });
            }
        }
        if !n0.is_finite() || n0 <= 0.0 {
            return Err(Error::invalid("n0", "must be finite and > 0"));
        }
        let columns = [
            ("infected", &infected),
            ("recovered", &recovered),
            ("deceased", &deceased),
        ];
        for (name, col) in columns {
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(
                    "series",
                    alloc::format!("{name} counts must be finite and non-negative"),
                ));
            }
        }
        let susceptible: Vec<f64> = (0..len)
            .map(|k| n0 - infected[k] - recovered[k] - deceased[k])
            .collect();
        if let Some(k) = susceptible.iter().position(|s| *s < 0.0) {
            return Err(Error::invalid(
                "n0",
                alloc::format!(
                    "derived susceptible is negative on day {k}: n0={n0} below i+r+d"
                ),
            ));
        }
        let mut series = EpidemicSeries {
            start,
            n0,
            infected,
            recovered,
            deceased,
            susceptible,
            warnings: Vec::new(),
        };
        series.warnings = series.scan_monotonicity();
        Ok(series)
    }

    fn scan_monotonicity(&self) -> Vec<MonotonicityWarning> {
        let mut out = Vec::new();
        for (c, col) in [
            (Compartment::R, &self.recovered),
            (Compartment::D, &self.deceased),
        ] {
            for k in 1..col.len() {
                if col[k] < col[k - 1] {
                    out.push(MonotonicityWarning {
                        compartment: c,
                        date: self.date(k),
                        previous: col[k - 1],
                        value: col[k],
                    });
                }
            }
        }
        out.sort_by_key(|w| w.date);
        out
    }

    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.len() - 1)
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Days::new(index as u64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn column(&self, c: Compartment) -> &[f64] {
        match c {
            Compartment::S => &self.susceptible,
            Compartment::I => &self.infected,
            Compartment::R => &self.recovered,
            Compartment::D => &self.deceased,
        }
    }

    pub fn state(&self, index: usize) -> State {
        State::new(
            self.susceptible[index],
            self.infected[index],
            self.recovered[index],
            self.deceased[index],
        )
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|k| self.state(k))
    }

    pub fn warnings(&self) -> &[MonotonicityWarning] {
        &self.warnings
    }

    /// Rows `from..to` as a new series.
    pub fn subseries(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::invalid(
                "series",
                alloc::format!("row range {from}..{to} invalid for {} rows", self.len()),
            ));
        }
        EpidemicSeries::new(
            self.date(from),
            self.infected[from..to].to_vec(),
            self.recovered[from..to].to_vec(),
            self.deceased[from..to].to_vec(),
            self.n0,
        )
    }
}

/// Fitting window `[start, end]` plus `history_days` of data kept before
/// `start` to seed the delay history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub history_days: usize,
}

impl DataWindow {
    pub fn fit_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1).max(0) as usize
    }
}

/// History segment and fitting window stored as one contiguous series.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSeries {
    combined: EpidemicSeries,
    history_days: usize,
}

impl WindowedSeries {
    pub fn combined(&self) -> &EpidemicSeries {
        &self.combined
    }

    pub fn history_days(&self) -> usize {
        self.history_days
    }

    /// Row of `combined` holding the first fitting day.
    pub fn t0_index(&self) -> usize {
        self.history_days
    }

    pub fn fit_days(&self) -> usize {
        self.combined.len() - self.history_days
    }

    pub fn fit_series(&self) -> EpidemicSeries {
        if self.history_days == 0 {
            return self.combined.clone();
        }
        self.combined
            .subseries(self.history_days, self.combined.len())
            .expect("fit range is non-empty")
    }

    pub fn history_series(&self) -> Option<EpidemicSeries> {
        (self.history_days > 0).then(|| {
            self.combined
                .subseries(0, self.history_days)
                .expect("history range is non-empty")
        })
    }

    /// Measured state on fitting day `day` (0 = window start).
    pub fn fit_state(&self, day: usize) -> State {
        self.combined.state(self.history_days + day)
    }
}

pub fn slice(series: &EpidemicSeries, window: &DataWindow) -> Result<WindowedSeries> {
    if window.end < window.start {
        return Err(Error::invalid("window", "end precedes start"));
    }
    let domain_err = |date: NaiveDate| Error::invalid(
        "window",
        alloc::format!(
            "{date} outside data range {} .. {}",
            series.start(),
            series.end()
        ),
    );
    let start = series.index_of(window.start).ok_or_else(|| domain_err(window.start))?;
    let end = series.index_of(window.end).ok_or_else(|| domain_err(window.end))?;
    if window.history_days > start {
        return Err(Error::InsufficientHistory {
            required: window.history_days,
            available: start,
        });
    }
    let from = start - window.history_days;
    let combined = if from == 0 && end + 1 == series.len() {
        series.clone()
    } else {
        series.subseries(from, end + 1)?
    };
    Ok(WindowedSeries {
        combined,
        history_days: window.history_days,
    })
}

/// Piecewise-linear history through the measured states on
/// `[t0 − max_lag, t0]`, with time measured in days relative to row `t0_index`.
pub fn build_history(
    series: &EpidemicSeries,
    t0_index: usize,
    max_lag: f64,
) -> Result<LinearHistory<4>> {
    if !max_lag.is_finite() || max_lag < 0.0 {
        return Err(Error::invalid("max_lag", "must be finite and non-negative"));
    }
    if t0_index >= series.len() {
        return Err(Error::invalid("t0", "beyond the end of the series"));
    }
    let required = ceil(max_lag) as usize;
    if required > t0_index {
        return Err(Error::InsufficientHistory {
            required,
            available: t0_index,
        });
    }
    let from = t0_index - required;
    let times = (from..=t0_index)
        .map(|k| k as f64 - t0_index as f64)
        .collect();
    let values = (from..=t0_index).map(|k| series.state(k).to_array()).collect();
    LinearHistory::new(times, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dde::History;
    use alloc::vec;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn small() -> EpidemicSeries {
        EpidemicSeries::new(
            date(2020, 9, 1),
            vec![10.0, 12.0, 11.0],
            vec![0.0, 1.0, 2.0],
            vec![0.0, 0.0, 1.0],
            1000.0,
        )
        .unwrap()
    }

    #[test]
    fn derives_susceptible() {
        assert_eq!(small().column(Compartment::S), &[990.0, 987.0, 986.0]);
        assert!(small().warnings().is_empty());
    }

    #[test]
    fn records_decreasing_recovered() {
        let s = EpidemicSeries::new(
            date(2020, 9, 1),
            vec![5.0; 3],
            vec![3.0, 2.0, 4.0],
            vec![0.0; 3],
            100.0,
        )
        .unwrap();
        assert_eq!(s.warnings().len(), 1);
        assert_eq!(s.warnings()[0].date, date(2020, 9, 2));
        assert_eq!(s.warnings()[0].compartment, Compartment::R);
    }

    #[test]
    fn rejects_negative_and_overfull() {
        assert!(EpidemicSeries::new(date(2020, 1, 1), vec![-1.0], vec![0.0], vec![0.0], 10.0).is_err());
        assert!(EpidemicSeries::new(date(2020, 1, 1), vec![8.0], vec![2.0], vec![1.0], 10.0).is_err());
        assert!(EpidemicSeries::new(date(2020, 1, 1), vec![], vec![], vec![], 10.0).is_err());
    }

    #[test]
    fn history_at_knots_and_midpoints() {
        let s = small();
        let h = build_history(&s, 2, 2.0).unwrap();
        assert_eq!(h.domain(), (-2.0, 0.0));
        assert_eq!(h.value(-1.0), s.state(1).to_array());
        assert_eq!(h.value(0.0), s.state(2).to_array());
        let mid = h.value(-0.5);
        assert_eq!(mid[1], 11.5);
        assert_eq!(mid[2], 1.5);
    }

    #[test]
    fn history_too_long_errors() {
        match build_history(&small(), 2, 2.5) {
            Err(Error::InsufficientHistory { required, available }) => {
                assert_eq!((required, available), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_window_is_identity() {
        let s = small();
        let w = DataWindow {
            start: s.start(),
            end: s.end(),
            history_days: 0,
        };
        let sliced = slice(&s, &w).unwrap();
        assert_eq!(sliced.fit_series(), s);
        assert!(sliced.history_series().is_none());
    }

    #[test]
    fn window_with_history() {
        let s = small();
        let w = DataWindow {
            start: date(2020, 9, 2),
            end: date(2020, 9, 3),
            history_days: 1,
        };
        let sliced = slice(&s, &w).unwrap();
        assert_eq!(sliced.fit_days(), 2);
        assert_eq!(sliced.fit_state(0), s.state(1));
        assert_eq!(sliced.history_series().unwrap().len(), 1);
    }

    #[test]
    fn window_outside_range() {
        let s = small();
        let w = DataWindow {
            start: date(2020, 8, 31),
            end: date(2020, 9, 2),
            history_days: 0,
        };
        assert!(slice(&s, &w).is_err());
        let w = DataWindow {
            start: date(2020, 9, 2),
            end: date(2020, 9, 3),
            history_days: 2,
        };
        assert!(matches!(slice(&s, &w), Err(Error::InsufficientHistory { .. })));
    }
}
