//! Tick-data ingestion and previous-tick resampling onto a regular grid.
//!
//! Also reads and writes the two-column `t,x` path format.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::PricePath;

/// Regular US equity session, in seconds.
pub const DEFAULT_SESSION_SECS: f64 = 6.5 * 3600.0;
/// 09:30:00 in seconds after midnight.
pub const DEFAULT_OPEN_SECS: f64 = 9.5 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    /// Seconds since session open.
    pub timestamp: f64,
    pub price: f64,
}

/// Which columns hold time and price.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub time: Column,
    pub price: Column,
    /// Whether the first row is a header. Required when columns are named.
    pub has_header: bool,
    /// Clock times (`HH:MM:SS`) are converted to seconds after this time of day.
    pub open_secs: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time: Column::Name("time".into()),
            price: Column::Name("price".into()),
            has_header: true,
            open_secs: DEFAULT_OPEN_SECS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTicks {
    pub records: Vec<TickRecord>,
    /// Rows that appeared earlier in the file than a later-timestamped row.
    pub out_of_order: usize,
    /// Rows dropped because a later row had the same timestamp.
    pub duplicates: usize,
}

/// Parses `HH:MM:SS[.fff]` or plain seconds. Clock times are made relative to `open_secs`.
pub fn parse_time(field: &str, open_secs: f64) -> Option<f64> {
    let field = field.trim();
    if field.contains(':') {
        let parts: Vec<&str> = field.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return None;
        }
        let h: f64 = parts[0].parse().ok()?;
        let m: f64 = parts[1].parse().ok()?;
        let s: f64 = match parts.get(2) {
            Some(p) => p.parse().ok()?,
            None => 0.0,
        };
        if !(h >= 0.0 && (0.0..60.0).contains(&m) && (0.0..61.0).contains(&s)) {
            return None;
        }
        Some(h * 3600.0 + m * 60.0 + s - open_secs)
    } else {
        field.parse::<f64>().ok().filter(|t| t.is_finite())
    }
}

/// Parses a duration such as `20s`, `5m`, `1/3min`, `0.5h` or plain seconds.
pub fn parse_duration(spec: &str) -> Result<f64> {
    let s = spec.trim().to_ascii_lowercase();
    let bad = || Error::InvalidConfig(format!("bad duration '{spec}'"));
    let split = s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let value = match num.split_once('/') {
        Some((a, b)) => {
            a.trim().parse::<f64>().map_err(|_| bad())?
                / b.trim().parse::<f64>().map_err(|_| bad())?
        }
        None => num.trim().parse::<f64>().map_err(|_| bad())?,
    };
    let scale = match unit.trim() {
        "" | "s" | "sec" | "secs" => 1.0,
        "m" | "min" | "mins" => 60.0,
        "h" | "hr" | "hour" | "hours" => 3600.0,
        _ => return Err(bad()),
    };
    let secs = value * scale;
    if !(secs.is_finite() && secs > 0.0) {
        return Err(bad());
    }
    Ok(secs)
}

fn resolve(col: &Column, headers: Option<&csv::StringRecord>) -> Result<usize> {
    match col {
        Column::Index(i) => Ok(*i),
        Column::Name(name) => headers
            .and_then(|h| h.iter().position(|f| f.trim().eq_ignore_ascii_case(name)))
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column '{name}'"),
            }),
    }
}

/// Reads tick records, validates them and sorts them by time.
///
/// Equal timestamps keep the record that appears last in the input.
pub fn parse_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<ParsedTicks> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = if schema.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Parse {
                    line: 1,
                    message: e.to_string(),
                })?
                .clone(),
        )
    } else {
        None
    };
    let ti = resolve(&schema.time, headers.as_ref())?;
    let pi = resolve(&schema.price, headers.as_ref())?;

    let mut records = Vec::new();
    let mut out_of_order = 0;
    let mut latest = f64::NEG_INFINITY;
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize| {
            row.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing field {i}"),
            })
        };
        let timestamp = parse_time(field(ti)?, schema.open_secs).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable time '{}'", row.get(ti).unwrap_or("")),
        })?;
        let raw_price = field(pi)?;
        let price: f64 = raw_price.parse().map_err(|_| Error::Parse {
            line,
            message: format!("unparseable price '{raw_price}'"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("price must be positive, got {price}"),
            });
        }
        if timestamp < latest {
            out_of_order += 1;
        }
        latest = latest.max(timestamp);
        records.push(TickRecord { timestamp, price });
    }
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    // Stable sort keeps file order among equal timestamps.
    records.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let before = records.len();
    let mut deduped: Vec<TickRecord> = Vec::with_capacity(before);
    for r in records {
        match deduped.last_mut() {
            Some(last) if last.timestamp == r.timestamp => *last = r,
            _ => deduped.push(r),
        }
    }
    Ok(ParsedTicks {
        duplicates: before - deduped.len(),
        records: deduped,
        out_of_order,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingRule {
    /// Seconds between grid points.
    pub interval: f64,
    /// Session length in seconds, measured from the open.
    pub session: f64,
}

impl SamplingRule {
    pub fn new(interval: f64, session: f64) -> Result<Self> {
        let rule = Self { interval, session };
        rule.grid_len()?;
        Ok(rule)
    }

    /// Number of increments `n = session / interval`.
    pub fn grid_len(&self) -> Result<usize> {
        if !(self.interval > 0.0 && self.session > 0.0) {
            return Err(Error::InvalidConfig(
                "interval and session must be positive".into(),
            ));
        }
        let ratio = self.session / self.interval;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "interval {}s does not divide the {}s session",
                self.interval, self.session
            )));
        }
        if n < 8.0 {
            return Err(Error::InvalidConfig(format!(
                "session has only {n} intervals, need >= 8"
            )));
        }
        Ok(n as usize)
    }
}

/// Previous-tick sampling of log prices on `t_i = i * interval`, with `T = 1` day.
///
/// The opening grid point takes the first tick if it falls inside the first
/// interval; every later grid point uses the last tick at or before it.
pub fn resample(records: &[TickRecord], rule: &SamplingRule) -> Result<PricePath> {
    let n = rule.grid_len()?;
    let first = records.first().ok_or(Error::NoRecords)?;
    if first.timestamp > rule.interval {
        return Err(Error::GridBeforeFirstTick(0.0));
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut idx = 0;
    for i in 0..=n {
        let t = i as f64 * rule.interval;
        while idx + 1 < records.len() && records[idx + 1].timestamp <= t {
            idx += 1;
        }
        let rec = &records[idx];
        if rec.timestamp > t && i > 0 {
            return Err(Error::GridBeforeFirstTick(t));
        }
        values.push(rec.price.ln());
    }
    PricePath::new(1.0, values)
}

/// Writes a path as `t,x` rows with `t` in trading days, at full precision.
pub fn path_to_csv(path: &PricePath) -> String {
    let mut out = String::with_capacity(32 * (path.n() + 2));
    out.push_str("t,x\n");
    for (i, x) in path.values().iter().enumerate() {
        out.push_str(&format!("{},{}\n", path.time(i), x));
    }
    out
}

/// Reads the `t,x` format. The grid must start at 0 and be evenly spaced.
pub fn path_from_csv<R: Read>(source: R) -> Result<PricePath> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 2 || &headers[0] != "t" || &headers[1] != "x" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header 't,x'".into(),
        });
    }
    let mut ts = Vec::new();
    let mut xs = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|f| f.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("bad number in column {i}"),
                })
        };
        ts.push(num(0)?);
        xs.push(num(1)?);
    }
    if xs.len() < 2 {
        return Err(Error::PathTooShort(xs.len()));
    }
    let n = xs.len() - 1;
    let t_end = ts[n] - ts[0];
    let step = t_end / n as f64;
    for (i, &t) in ts.iter().enumerate() {
        if (t - ts[0] - i as f64 * step).abs() > 1e-6 * step {
            return Err(Error::Parse {
                line: i + 2,
                message: format!("time {t} is off the regular grid"),
            });
        }
    }
    PricePath::new(t_end, xs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_clock_times() {
        let data = "time,price\n09:30:00,60.12\n09:30:05,60.10\n";
        let p = parse_csv(data.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(
            p.records[0],
            TickRecord {
                timestamp: 0.0,
                price: 60.12
            }
        );
        assert_eq!(p.records[1].timestamp, 5.0);
    }

    #[test]
    fn negative_price_names_line() {
        let data = "time,price\n0,60.0\n1,-1\n";
        match parse_csv(data.as_bytes(), &CsvSchema::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let data = "time,price\n0,abc\n";
        assert!(matches!(
            parse_csv(data.as_bytes(), &CsvSchema::default()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn sorts_and_dedups() {
        let data = "time,price\n10,1.0\n5,2.0\n10,3.0\n7,4.0\n";
        let p = parse_csv(data.as_bytes(), &CsvSchema::default()).unwrap();
        let ts: Vec<f64> = p.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![5.0, 7.0, 10.0]);
        assert_eq!(p.records[2].price, 3.0);
        assert_eq!(p.out_of_order, 2);
        assert_eq!(p.duplicates, 1);
    }

    #[test]
    fn empty_and_headerless() {
        assert_eq!(
            parse_csv("time,price\n".as_bytes(), &CsvSchema::default()),
            Err(Error::NoRecords)
        );
        let schema = CsvSchema {
            time: Column::Index(1),
            price: Column::Index(0),
            has_header: false,
            ..CsvSchema::default()
        };
        let p = parse_csv("50.0,3\n51.0,4\n".as_bytes(), &schema).unwrap();
        assert_eq!(
            p.records[1],
            TickRecord {
                timestamp: 4.0,
                price: 51.0
            }
        );
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("20s").unwrap(), 20.0);
        assert_eq!(parse_duration("5m").unwrap(), 300.0);
        assert!((parse_duration("1/3min").unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(parse_duration("6.5h").unwrap(), 23400.0);
        assert_eq!(parse_duration("10").unwrap(), 10.0);
        assert!(parse_duration("3 parsecs").is_err());
        assert!(parse_duration("-2s").is_err());
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(
            SamplingRule::new(20.0, DEFAULT_SESSION_SECS)
                .unwrap()
                .grid_len()
                .unwrap(),
            1170
        );
        assert_eq!(
            SamplingRule::new(10.0, DEFAULT_SESSION_SECS)
                .unwrap()
                .grid_len()
                .unwrap(),
            2340
        );
        assert_eq!(
            SamplingRule::new(5.0, DEFAULT_SESSION_SECS)
                .unwrap()
                .grid_len()
                .unwrap(),
            4680
        );
        assert!(SamplingRule::new(7.0, DEFAULT_SESSION_SECS).is_err());
        assert!(SamplingRule::new(3600.0, DEFAULT_SESSION_SECS).is_err());
    }

    #[test]
    fn single_tick_gives_constant_path() {
        let ticks = [TickRecord {
            timestamp: 0.0,
            price: 50.0,
        }];
        let rule = SamplingRule::new(20.0, DEFAULT_SESSION_SECS).unwrap();
        let p = resample(&ticks, &rule).unwrap();
        assert_eq!(p.n(), 1170);
        assert!(p.values().iter().all(|&x| x == 50f64.ln()));
    }

    #[test]
    fn previous_tick_never_looks_ahead() {
        let ticks = [
            TickRecord {
                timestamp: 3.0,
                price: 10.0,
            },
            TickRecord {
                timestamp: 20.0,
                price: 11.0,
            },
            TickRecord {
                timestamp: 39.9,
                price: 12.0,
            },
            TickRecord {
                timestamp: 40.1,
                price: 13.0,
            },
        ];
        let rule = SamplingRule::new(20.0, 200.0).unwrap();
        let p = resample(&ticks, &rule).unwrap();
        let prices: Vec<f64> = p.values().iter().map(|x| x.exp()).collect();
        let expect = [10.0, 11.0, 12.0, 13.0, 13.0];
        for (got, want) in prices.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        let late = [TickRecord {
            timestamp: 25.0,
            price: 10.0,
        }];
        assert_eq!(resample(&late, &rule), Err(Error::GridBeforeFirstTick(0.0)));
    }

    #[test]
    fn path_csv_round_trip() {
        let vals = [0.0, 0.1 + 0.2, -1.0 / 3.0, 1e-17, 4.0];
        let p = PricePath::new(1.0, vals.to_vec()).unwrap();
        let back = path_from_csv(path_to_csv(&p).as_bytes()).unwrap();
        assert_eq!(back, p);
        assert!(path_from_csv("a,b\n0,1\n1,2\n".as_bytes()).is_err());
        assert!(path_from_csv("t,x\n0,1\n0.3,2\n1,3\n".as_bytes()).is_err());
    }
}
