//! CSV ingestion and export of daily surveillance series.
//!
//! Input schema: `date,infected,recovered,deceased`, ISO dates, one row per
//! day, non-negative decimal counts. Exports add a trailing `susceptible`
//! column, which the loader accepts and ignores.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use delayfit_core::series::EpidemicSeries;
use delayfit_core::model::Compartment;

use crate::fmt::num;

const HEADER: [&str; 4] = ["date", "infected", "recovered", "deceased"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty file: no header row")]
    Empty,
    #[error("no data rows after the header")]
    NoRows,
    #[error("unexpected header {found:?}, expected date,infected,recovered,deceased")]
    Header { found: Vec<String> },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: negative {column} count {value}")]
    Negative { line: u64, column: &'static str, value: f64 },
    #[error("non-daily spacing, missing dates: {}", format_dates(.missing))]
    Gap { missing: Vec<NaiveDate> },
    #[error(transparent)]
    Series(#[from] delayfit_core::Error),
}

fn format_dates(dates: &[NaiveDate]) -> String {
    const SHOWN: usize = 10;
    let mut s: Vec<String> = dates.iter().take(SHOWN).map(|d| d.to_string()).collect();
    if dates.len() > SHOWN {
        s.push(format!("... ({} total)", dates.len()));
    }
    s.join(", ")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Fill missing days by linear interpolation instead of rejecting.
    pub interpolate_gaps: bool,
}

struct Row {
    line: u64,
    date: NaiveDate,
    values: [f64; 3],
}

pub fn load_csv(path: impl AsRef<Path>, n0: f64) -> Result<EpidemicSeries, DataError> {
    load_csv_with(path, n0, LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    n0: f64,
    options: LoadOptions,
) -> Result<EpidemicSeries, DataError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let series = read_csv(file, n0, options)?;
    log::info!(
        "loaded {} rows from {} ({} .. {}), {} monotonicity warnings",
        series.len(),
        path.display(),
        series.start(),
        series.end(),
        series.warnings().len()
    );
    for w in series.warnings() {
        log::warn!(
            "{}: {} decreased from {} to {}",
            w.date,
            w.compartment,
            w.previous,
            w.value
        );
    }
    Ok(series)
}

pub fn read_csv<R: Read>(reader: R, n0: f64, options: LoadOptions) -> Result<EpidemicSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(DataError::Empty),
        Some(r) => r.map_err(|e| parse_err(1, e))?,
    };
    let found: Vec<String> = header.iter().map(str::to_owned).collect();
    let known = found.len() >= 4
        && found[..4].iter().zip(HEADER).all(|(a, b)| a == b)
        && (found.len() == 4 || (found.len() == 5 && found[4] == "susceptible"));
    if !known {
        return Err(DataError::Header { found });
    }

    let mut rows: Vec<Row> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != found.len() {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", found.len(), rec.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| DataError::Parse {
            line,
            message: format!("bad date {:?}: {e}", &rec[0]),
        })?;
        let mut values = [0.0; 3];
        for (k, column) in ["infected", "recovered", "deceased"].into_iter().enumerate() {
            let v: f64 = rec[k + 1].parse().map_err(|_| DataError::Parse {
                line,
                message: format!("bad {column} count {:?}", &rec[k + 1]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("non-finite {column} count"),
                });
            }
            if v < 0.0 {
                return Err(DataError::Negative { line, column, value: v });
            }
            values[k] = v;
        }
        if let Some(prev) = rows.last() {
            if date <= prev.date {
                return Err(DataError::Parse {
                    line,
                    message: format!("date {date} does not follow {}", prev.date),
                });
            }
        }
        rows.push(Row { line, date, values });
    }
    if rows.is_empty() {
        return Err(DataError::NoRows);
    }

    let filled = fill_days(&rows, options)?;
    let start = rows[0].date;
    let col = |k: usize| filled.iter().map(|v| v[k]).collect::<Vec<f64>>();
    Ok(EpidemicSeries::new(start, col(0), col(1), col(2), n0)?)
}

fn parse_err(line: u64, e: csv::Error) -> DataError {
    DataError::Parse {
        line,
        message: e.to_string(),
    }
}

fn fill_days(rows: &[Row], options: LoadOptions) -> Result<Vec<[f64; 3]>, DataError> {
    let mut missing = Vec::new();
    for pair in rows.windows(2) {
        let mut d = pair[0].date + Days::new(1);
        while d < pair[1].date {
            missing.push(d);
            d = d + Days::new(1);
        }
    }
    if !missing.is_empty() && !options.interpolate_gaps {
        return Err(DataError::Gap { missing });
    }
    let mut out = Vec::with_capacity(rows.len() + missing.len());
    out.push(rows[0].values);
    for pair in rows.windows(2) {
        let span = (pair[1].date - pair[0].date).num_days();
        for k in 1..span {
            let t = k as f64 / span as f64;
            let (a, b) = (pair[0].values, pair[1].values);
            out.push(std::array::from_fn(|n| a[n] + t * (b[n] - a[n])));
        }
        out.push(pair[1].values);
    }
    if !missing.is_empty() {
        log::warn!(
            "interpolated {} missing days (first after line {})",
            missing.len(),
            rows[0].line
        );
    }
    Ok(out)
}

pub fn write_csv_to<W: Write>(series: &EpidemicSeries, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "infected", "recovered", "deceased", "susceptible"])?;
    for k in 0..series.len() {
        let st = series.state(k);
        w.write_record([
            series.date(k).to_string(),
            num(st.i),
            num(st.r),
            num(st.d),
            num(series.column(Compartment::S)[k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(series: &EpidemicSeries, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_csv_to(series, file).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}
