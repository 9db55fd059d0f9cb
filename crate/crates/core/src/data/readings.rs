use std::path::Path;

use chrono::{NaiveDateTime, Timelike};

use super::TrafficSeries;
use crate::error::{Error, Result};
use crate::graph::csv_error;

/// A parsed readings file and how many cells had to be filled.
#[derive(Clone, Debug, PartialEq)]
pub struct Readings {
    pub series: TrafficSeries,
    pub filled: usize,
}

enum Stamp {
    Minutes(f64),
    DateTime(NaiveDateTime),
}

impl Stamp {
    fn parse(s: &str) -> Option<Stamp> {
        if let Ok(v) = s.parse::<f64>() {
            return v.is_finite().then_some(Stamp::Minutes(v));
        }
        ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
            .map(Stamp::DateTime)
    }

    fn minutes(&self) -> f64 {
        match self {
            Stamp::Minutes(m) => *m,
            Stamp::DateTime(dt) => dt.and_utc().timestamp() as f64 / 60.0,
        }
    }

    fn minute_of_day(&self) -> u32 {
        match self {
            Stamp::Minutes(m) => m.rem_euclid(1440.0) as u32,
            Stamp::DateTime(dt) => dt.hour() * 60 + dt.minute(),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "nan" | "NaN" | "NAN" | "NA" | "null")
}

/// Loads `timestamp,node_0,…,node_{N-1}` readings.
///
/// Timestamps are either minutes (any numeric value) or date-times such as
/// `2012-03-01 00:05:00`, and must increase strictly. The step length is the
/// gap between the first two rows (5 minutes for a single-row file). Missing
/// cells are forward-filled from the same node; cells with no earlier value
/// become 0.
pub fn load_readings_csv(path: impl AsRef<Path>) -> Result<Readings> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("timestamp") || headers.len() < 2 {
        return Err(Error::Format(format!(
            "{}: header must be `timestamp,node_0,…`",
            path.display()
        )));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("node_{i}") {
            return Err(Error::Format(format!(
                "{}: column {} is `{h}`, expected `node_{i}`",
                path.display(),
                i + 1
            )));
        }
    }
    let n = headers.len() - 1;

    let mut stamps: Vec<Stamp> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut last: Vec<Option<f64>> = vec![None; n];
    let mut filled = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let stamp = Stamp::parse(&record[0]).ok_or_else(|| {
            Error::Format(format!("{}:{line}: invalid timestamp `{}`", path.display(), &record[0]))
        })?;
        if let Some(prev) = stamps.last() {
            if stamp.minutes() <= prev.minutes() {
                return Err(Error::Data(format!(
                    "{}:{line}: timestamp `{}` does not increase",
                    path.display(),
                    &record[0]
                )));
            }
        }
        stamps.push(stamp);
        for (node, cell) in record.iter().skip(1).enumerate() {
            let parsed = if is_missing(cell) {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Format(format!("{}:{line}: invalid reading `{cell}`", path.display()))
                })?;
                v.is_finite().then_some(v)
            };
            let v = match parsed {
                Some(v) => {
                    last[node] = Some(v);
                    v
                }
                None => {
                    filled += 1;
                    last[node].unwrap_or(0.0)
                }
            };
            values.push(v);
        }
    }
    if stamps.is_empty() {
        return Err(Error::Data(format!("{}: no readings", path.display())));
    }
    let step = match stamps.get(1) {
        Some(second) => second.minutes() - stamps[0].minutes(),
        None => 5.0,
    };
    if step.fract() != 0.0 || step < 1.0 || step > 1440.0 {
        return Err(Error::Data(format!(
            "{}: step of {step} minutes is not a whole number of minutes",
            path.display()
        )));
    }
    let series = TrafficSeries::with_start(n, step as u32, stamps[0].minute_of_day(), values)?;
    Ok(Readings { series, filled })
}

/// Writes readings with timestamps in minutes. Values use the shortest
/// round-trip decimal form, so a reload is bitwise exact.
pub fn write_readings_csv(series: &TrafficSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend((0..series.n_nodes()).map(|i| format!("node_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    let mut row = Vec::with_capacity(series.n_nodes() + 1);
    for t in 0..series.n_steps() {
        row.clear();
        let minute = series.start_minute() as u64 + t as u64 * series.step_minutes() as u64;
        row.push(minute.to_string());
        row.extend(series.step(t).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticConfig};
    use crate::graph::Graph;

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("readings.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn well_formed_file() {
        let (_d, p) = write("timestamp,node_0,node_1\n0,1.5,2\n5,3,4\n10,5,6\n");
        let r = load_readings_csv(&p).unwrap();
        assert_eq!((r.series.n_steps(), r.series.n_nodes()), (3, 2));
        assert_eq!(r.series.step_minutes(), 5);
        assert_eq!(r.filled, 0);
        assert_eq!(r.series.values(), &[1.5, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn missing_cells_are_forward_filled_then_zeroed() {
        let (_d, p) = write("timestamp,node_0,node_1\n0,1,NaN\n5,NaN,4\n10,,6\n");
        let r = load_readings_csv(&p).unwrap();
        assert_eq!(r.series.values(), &[1.0, 0.0, 1.0, 4.0, 1.0, 6.0]);
        assert_eq!(r.filled, 3);

        let (_d, p) = write("timestamp,node_0\n0,2\n5,nan\n");
        assert_eq!(load_readings_csv(&p).unwrap().filled, 1);
    }

    #[test]
    fn ragged_rows_report_the_line() {
        let (_d, p) = write("timestamp,node_0,node_1\n0,1,2\n5,3\n");
        match load_readings_csv(&p) {
            Err(Error::Format(msg)) => assert!(msg.contains(":3"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_timestamps_are_rejected() {
        let (_d, p) = write("timestamp,node_0\n0,1\n10,2\n5,3\n");
        assert!(matches!(load_readings_csv(&p), Err(Error::Data(_))));
        let (_d, p) = write(
            "timestamp,node_0\n2012-03-01 00:05:00,1\n2012-03-01 00:00:00,2\n",
        );
        assert!(matches!(load_readings_csv(&p), Err(Error::Data(_))));
    }

    #[test]
    fn datetime_stamps_set_step_and_start() {
        let (_d, p) = write("timestamp,node_0\n2012-03-01 07:00:00,1\n2012-03-01 07:05:00,2\n");
        let s = load_readings_csv(&p).unwrap().series;
        assert_eq!((s.step_minutes(), s.start_minute()), (5, 420));
    }

    #[test]
    fn generated_series_round_trips() {
        let g = Graph::erdos_renyi_geometric(7, 0.5, 2).unwrap();
        let s = generate_synthetic(&g, &SyntheticConfig { n_steps: 300, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_readings_csv(&s, &path).unwrap();
        let back = load_readings_csv(&path).unwrap();
        assert_eq!(back.filled, 0);
        for (a, b) in back.series.values().iter().zip(s.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert_eq!(back.series, s);
    }
}
