//! Hourly time-series loading, cleaning, alignment, and chronological splits.
//!
//! CSV layout: UTF-8, comma separated, ISO-8601 timestamps `YYYY-MM-DDTHH:00`
//! in the first column, real-valued columns after it, `.` decimal separator,
//! empty cell = missing. Timestamps are local civil time; rows must be in
//! ascending order and duplicates are rejected.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime, Timelike};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

/// Serde adapter for timestamps in the `YYYY-MM-DDTHH:MM` form used by the
/// CSV files and config files.
pub mod hour_format {
    use super::{parse_timestamp, TIMESTAMP_FORMAT};
    use chrono::NaiveDateTime;
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(dt: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&dt.format(TIMESTAMP_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let text = String::deserialize(d)?;
        parse_timestamp(&text)
            .ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{text}`")))
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: malformed timestamp `{text}`")]
    MalformedTimestamp { row: usize, text: String },
    #[error("row {row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { row: usize, timestamp: String },
    #[error("row {row}: timestamp {timestamp} is not on the hourly grid")]
    NonHourlyStep { row: usize, timestamp: String },
    #[error("row {row}: timestamp {timestamp} is out of order")]
    OutOfOrderTimestamp { row: usize, timestamp: String },
    #[error("row {row}: cannot parse value `{text}` in column {column}")]
    MalformedValue {
        row: usize,
        column: String,
        text: String,
    },
    #[error("file has no value columns")]
    NoValueColumns,
    #[error("file has no data rows")]
    Empty,
    #[error("series `{0}`: leading or trailing gap cannot be interpolated")]
    EdgeMissing(String),
    #[error("series have no common time range")]
    EmptyIntersection,
    #[error("split boundary {0} is outside the table range")]
    BoundaryOutOfRange(String),
    #[error("split ratios must be positive and sum to 1")]
    BadRatios,
    #[error("series lengths or starts differ")]
    MisalignedSeries,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// A regularly sampled hourly series. `mask[i]` is true when the value at
/// step `i` is missing; missing slots hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub series_id: String,
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub unit: String,
}

impl TimeSeries {
    pub fn new(series_id: impl Into<String>, start: NaiveDateTime, values: Vec<f64>) -> Self {
        let mask = vec![false; values.len()];
        Self {
            series_id: series_id.into(),
            start,
            values,
            mask,
            unit: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp_at(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp_at(self.len().saturating_sub(1))
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Several series on one shared hourly grid, column order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTable {
    pub start: NaiveDateTime,
    pub columns: Vec<String>,
    /// Column-major values; every column has the same length.
    pub values: Vec<Vec<f64>>,
}

impl AlignedTable {
    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp_at(&self, row: usize) -> NaiveDateTime {
        self.start + Duration::hours(row as i64)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .position(|c| c == name)
            .map(|i| self.values[i].as_slice())
    }

    fn slice_rows(&self, from: usize, to: usize) -> AlignedTable {
        AlignedTable {
            start: self.timestamp_at(from),
            columns: self.columns.clone(),
            values: self.values.iter().map(|c| c[from..to].to_vec()).collect(),
        }
    }
}

/// How to cut a table into train/validation/test pieces. Boundary timestamps
/// are inclusive: a row belongs to train iff `ts <= train_end`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Boundaries {
        #[serde(with = "hour_format")]
        train_end: NaiveDateTime,
        #[serde(with = "hour_format")]
        val_end: NaiveDateTime,
    },
    Ratio { ratio: (f64, f64, f64) },
}

pub fn parse_timestamp(text: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text.trim(), TIMESTAMP_FORMAT).ok()
}

/// Reads one `TimeSeries` per value column. Empty cells set the missing mask;
/// gaps in the hourly grid are inserted as missing rows.
pub fn ingest_csv_reader<R: Read>(reader: R) -> Result<Vec<TimeSeries>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(IngestError::NoValueColumns);
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();

    let mut start: Option<NaiveDateTime> = None;
    let mut prev: Option<NaiveDateTime> = None;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut masks: Vec<Vec<bool>> = vec![Vec::new(); names.len()];

    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after the header
        let record = record?;
        let ts_text = record.get(0).unwrap_or("");
        let ts = parse_timestamp(ts_text).ok_or_else(|| IngestError::MalformedTimestamp {
            row,
            text: ts_text.to_owned(),
        })?;
        if ts.minute() != 0 || ts.second() != 0 {
            return Err(IngestError::NonHourlyStep {
                row,
                timestamp: ts_text.to_owned(),
            });
        }
        if let Some(p) = prev {
            if ts == p {
                return Err(IngestError::DuplicateTimestamp {
                    row,
                    timestamp: ts_text.to_owned(),
                });
            }
            if ts < p {
                return Err(IngestError::OutOfOrderTimestamp {
                    row,
                    timestamp: ts_text.to_owned(),
                });
            }
            // Complete the grid: every skipped hour becomes a missing row.
            let gap = (ts - p).num_hours() - 1;
            for _ in 0..gap {
                for (col, mask) in columns.iter_mut().zip(masks.iter_mut()) {
                    col.push(f64::NAN);
                    mask.push(true);
                }
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);
        for (c, name) in names.iter().enumerate() {
            let cell = record.get(c + 1).unwrap_or("").trim();
            if cell.is_empty() {
                columns[c].push(f64::NAN);
                masks[c].push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| IngestError::MalformedValue {
                    row,
                    column: name.clone(),
                    text: cell.to_owned(),
                })?;
                columns[c].push(v);
                masks[c].push(false);
            }
        }
    }

    let start = start.ok_or(IngestError::Empty)?;
    Ok(names
        .into_iter()
        .zip(columns)
        .zip(masks)
        .map(|((name, values), mask)| TimeSeries {
            series_id: name,
            start,
            values,
            mask,
            unit: String::new(),
        })
        .collect())
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeries>, IngestError> {
    let file = std::fs::File::open(path)?;
    ingest_csv_reader(file)
}

/// Writes series sharing one grid back to CSV. Missing values become empty
/// cells; floats use the shortest representation that round-trips.
pub fn export_csv_writer<W: Write>(series: &[TimeSeries], out: W) -> Result<(), IngestError> {
    let first = series.first().ok_or(IngestError::Empty)?;
    if series
        .iter()
        .any(|s| s.start != first.start || s.len() != first.len())
    {
        return Err(IngestError::MisalignedSeries);
    }
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_owned()];
    header.extend(series.iter().map(|s| s.series_id.clone()));
    wtr.write_record(&header)?;
    for i in 0..first.len() {
        let mut record = vec![first.timestamp_at(i).format(TIMESTAMP_FORMAT).to_string()];
        for s in series {
            record.push(if s.mask[i] {
                String::new()
            } else {
                format!("{}", s.values[i])
            });
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn export_csv(series: &[TimeSeries], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let file = std::fs::File::create(path)?;
    export_csv_writer(series, file)
}

/// Replaces every masked interior value by linear interpolation between the
/// nearest present neighbors and clears the mask. Leading or trailing gaps
/// are an error; only interpolation is licensed, not extrapolation.
pub fn linear_interpolate_missing(series: &TimeSeries) -> Result<TimeSeries, IngestError> {
    if series.is_empty() {
        return Err(IngestError::Empty);
    }
    if series.mask[0] || *series.mask.last().unwrap() {
        return Err(IngestError::EdgeMissing(series.series_id.clone()));
    }
    let mut values = series.values.clone();
    let mut i = 0;
    while i < values.len() {
        if !series.mask[i] {
            i += 1;
            continue;
        }
        let left = i - 1; // present: i > 0 and a masked run is preceded by a present value
        let mut right = i;
        while series.mask[right] {
            right += 1;
        }
        let span = (right - left) as f64;
        let (a, b) = (values[left], values[right]);
        for j in (left + 1)..right {
            let frac = (j - left) as f64 / span;
            values[j] = a + (b - a) * frac;
        }
        i = right + 1;
    }
    Ok(TimeSeries {
        series_id: series.series_id.clone(),
        start: series.start,
        values,
        mask: vec![false; series.len()],
        unit: series.unit.clone(),
    })
}

/// Restricts all series to their common time range, column order preserved.
pub fn align(series_list: &[TimeSeries]) -> Result<AlignedTable, IngestError> {
    if series_list.is_empty() {
        return Err(IngestError::Empty);
    }
    let start = series_list.iter().map(|s| s.start).max().unwrap();
    let end = series_list.iter().map(|s| s.end()).min().unwrap();
    if end < start {
        return Err(IngestError::EmptyIntersection);
    }
    let len = (end - start).num_hours() as usize + 1;
    let mut values = Vec::with_capacity(series_list.len());
    for s in series_list {
        let offset = (start - s.start).num_hours() as usize;
        values.push(s.values[offset..offset + len].to_vec());
    }
    Ok(AlignedTable {
        start,
        columns: series_list.iter().map(|s| s.series_id.clone()).collect(),
        values,
    })
}

/// Cuts a table into three contiguous chronological pieces whose
/// concatenation equals the input.
pub fn split_dataset(
    table: &AlignedTable,
    spec: &SplitSpec,
) -> Result<(AlignedTable, AlignedTable, AlignedTable), IngestError> {
    let n = table.len();
    if n == 0 {
        return Err(IngestError::Empty);
    }
    let (train_n, val_n) = match spec {
        SplitSpec::Boundaries { train_end, val_end } => {
            let last = table.timestamp_at(n - 1);
            if *train_end >= *val_end {
                return Err(IngestError::BoundaryOutOfRange(val_end.to_string()));
            }
            for bound in [train_end, val_end] {
                if **bound < table.start || **bound >= last {
                    return Err(IngestError::BoundaryOutOfRange(bound.to_string()));
                }
            }
            let train_n = (*train_end - table.start).num_hours() as usize + 1;
            let val_n = (*val_end - *train_end).num_hours() as usize;
            (train_n, val_n)
        }
        SplitSpec::Ratio {
            ratio: (tr, va, te),
        } => {
            if *tr <= 0.0 || *va <= 0.0 || *te <= 0.0 || (tr + va + te - 1.0).abs() > 1e-9 {
                return Err(IngestError::BadRatios);
            }
            let train_n = (tr * n as f64).floor() as usize;
            let val_n = (va * n as f64).floor() as usize;
            if train_n == 0 || val_n == 0 || train_n + val_n >= n {
                return Err(IngestError::BadRatios);
            }
            (train_n, val_n)
        }
    };
    Ok((
        table.slice_rows(0, train_n),
        table.slice_rows(train_n, train_n + val_n),
        table.slice_rows(train_n + val_n, n),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dt(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    fn series(start: &str, values: Vec<f64>, mask: Vec<bool>) -> TimeSeries {
        TimeSeries {
            series_id: "s".into(),
            start: dt(start),
            values,
            mask,
            unit: String::new(),
        }
    }

    #[test]
    fn ingest_marks_empty_cells_missing() {
        let csv = "timestamp,load\n2020-01-01T00:00,1.5\n2020-01-01T01:00,\n2020-01-01T02:00,2.5\n";
        let out = ingest_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].mask, vec![false, true, false]);
        assert_eq!(out[0].values[0], 1.5);
        assert!(out[0].values[1].is_nan());
    }

    #[test]
    fn ingest_completes_hourly_grid() {
        let csv = "timestamp,load\n2020-01-01T01:00,1.0\n2020-01-01T03:00,3.0\n";
        let out = ingest_csv_reader(csv.as_bytes()).unwrap();
        assert_eq!(out[0].len(), 3);
        assert_eq!(out[0].mask, vec![false, true, false]);
        assert_eq!(out[0].timestamp_at(1), dt("2020-01-01T02:00"));
    }

    #[test]
    fn ingest_rejects_duplicate_timestamp() {
        let csv = "timestamp,load\n2020-01-01T00:00,1.0\n2020-01-01T00:00,2.0\n";
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes()).unwrap_err(),
            IngestError::DuplicateTimestamp { row: 3, .. }
        ));
    }

    #[test]
    fn ingest_rejects_off_grid_timestamp() {
        let csv = "timestamp,load\n2020-01-01T00:30,1.0\n";
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes()).unwrap_err(),
            IngestError::NonHourlyStep { .. }
        ));
    }

    #[test]
    fn ingest_rejects_malformed_timestamp() {
        let csv = "timestamp,load\nnot-a-time,1.0\n";
        assert!(matches!(
            ingest_csv_reader(csv.as_bytes()).unwrap_err(),
            IngestError::MalformedTimestamp { .. }
        ));
    }

    #[test]
    fn interpolate_midpoint() {
        let s = series("2020-01-01T00:00", vec![1.0, f64::NAN, 3.0], vec![false, true, false]);
        let out = linear_interpolate_missing(&s).unwrap();
        assert_eq!(out.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(out.missing_count(), 0);
    }

    #[test]
    fn interpolate_two_point_gap() {
        // Line through (0, 0) and (3, 3) gives 1 and 2 at the masked steps.
        let s = series(
            "2020-01-01T00:00",
            vec![0.0, f64::NAN, f64::NAN, 3.0],
            vec![false, true, true, false],
        );
        let out = linear_interpolate_missing(&s).unwrap();
        assert_eq!(out.values, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn interpolate_rejects_edge_gap() {
        let s = series("2020-01-01T00:00", vec![f64::NAN, 2.0, 3.0], vec![true, false, false]);
        assert!(matches!(
            linear_interpolate_missing(&s).unwrap_err(),
            IngestError::EdgeMissing(_)
        ));
    }

    #[test]
    fn align_cuts_to_intersection() {
        let a = series("2020-01-01T00:00", (0..=100).map(f64::from).collect(), vec![false; 101]);
        let mut b = series("2020-01-03T02:00", (0..=100).map(f64::from).collect(), vec![false; 101]);
        b.series_id = "b".into();
        let table = align(&[a, b]).unwrap();
        assert_eq!(table.start, dt("2020-01-03T02:00"));
        assert_eq!(table.len(), 51); // hours 50..=100 of series a
        assert_eq!(table.values[0][0], 50.0);
        assert_eq!(table.values[1][0], 0.0);
    }

    #[test]
    fn align_identity_on_identical_ranges() {
        let a = series("2020-01-01T00:00", vec![1.0, 2.0, 3.0], vec![false; 3]);
        let table = align(std::slice::from_ref(&a)).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(table.values[0], a.values);
    }

    #[test]
    fn align_disjoint_ranges_error() {
        let a = series("2020-01-01T00:00", vec![1.0, 2.0], vec![false; 2]);
        let mut b = series("2020-02-01T00:00", vec![1.0, 2.0], vec![false; 2]);
        b.series_id = "b".into();
        assert!(matches!(
            align(&[a, b]).unwrap_err(),
            IngestError::EmptyIntersection
        ));
    }

    #[test]
    fn ratio_split_sizes() {
        let table = AlignedTable {
            start: dt("2020-01-01T00:00"),
            columns: vec!["x".into()],
            values: vec![(0..1000).map(|i| i as f64).collect()],
        };
        let (tr, va, te) = split_dataset(
            &table,
            &SplitSpec::Ratio {
                ratio: (0.8, 0.1, 0.1),
            },
        )
        .unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (800, 100, 100));
        let mut glued = tr.values[0].clone();
        glued.extend(&va.values[0]);
        glued.extend(&te.values[0]);
        assert_eq!(glued, table.values[0]);
        assert_eq!(va.timestamp_at(0), table.timestamp_at(800));
    }

    #[test]
    fn calendar_split_matches_paper_hour_counts() {
        // Hourly rows from 01:00 Jan 1 2016 through 00:00 Jan 1 2020; the
        // stamp closes the measured hour, so `train_end = 2019-03-01T00:00`
        // keeps everything up to the end of February 2019.
        // Hand count: 8784 + 8760 + 8760 + (31+28)*24 = 27720 train hours,
        // then Mar-Jul = 153 days and Aug-Dec = 153 days of 24 rows each.
        let n = 35064;
        let table = AlignedTable {
            start: dt("2016-01-01T01:00"),
            columns: vec!["x".into()],
            values: vec![vec![0.0; n]],
        };
        let spec = SplitSpec::Boundaries {
            train_end: dt("2019-03-01T00:00"),
            val_end: dt("2019-08-01T00:00"),
        };
        let (tr, va, te) = split_dataset(&table, &spec).unwrap();
        assert_eq!(tr.len(), 27720);
        assert_eq!(va.len(), 3672);
        assert_eq!(te.len(), 3672);
        assert_eq!(tr.len() + va.len() + te.len(), n);
    }

    #[test]
    fn split_rejects_boundary_after_end() {
        let table = AlignedTable {
            start: dt("2020-01-01T00:00"),
            columns: vec!["x".into()],
            values: vec![vec![0.0; 48]],
        };
        let spec = SplitSpec::Boundaries {
            train_end: dt("2020-03-01T00:00"),
            val_end: dt("2020-04-01T00:00"),
        };
        assert!(matches!(
            split_dataset(&table, &spec).unwrap_err(),
            IngestError::BoundaryOutOfRange(_)
        ));
    }

    #[test]
    fn export_then_ingest_is_identity_on_complete_files() {
        let a = series("2020-06-01T00:00", vec![1.25, 2.5, 3.125, 0.1], vec![false; 4]);
        let mut buf = Vec::new();
        export_csv_writer(std::slice::from_ref(&a), &mut buf).unwrap();
        let back = ingest_csv_reader(buf.as_slice()).unwrap();
        assert_eq!(back[0].values, a.values);
        assert_eq!(back[0].start, a.start);
    }

    proptest! {
        /// Masking interior points of an affine sequence and interpolating
        /// recovers the original within 1e-12.
        #[test]
        fn interpolation_exact_on_affine_inputs(
            n in 3usize..80,
            slope in -100.0f64..100.0,
            intercept in -1000.0f64..1000.0,
            seed in any::<u64>(),
        ) {
            use rand::prelude::*;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let original: Vec<f64> = (0..n).map(|i| intercept + slope * i as f64).collect();
            let mut mask = vec![false; n];
            for m in mask.iter_mut().take(n - 1).skip(1) {
                *m = rng.gen_bool(0.4);
            }
            let mut values = original.clone();
            for (v, &m) in values.iter_mut().zip(&mask) {
                if m { *v = f64::NAN; }
            }
            let s = series("2020-01-01T00:00", values, mask);
            let out = linear_interpolate_missing(&s).unwrap();
            for (got, want) in out.values.iter().zip(&original) {
                prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
            }
        }

        /// Every row lands in exactly one split piece.
        #[test]
        fn split_is_a_partition(n in 10usize..500, tr in 0.2f64..0.7, va in 0.1f64..0.25) {
            let te = 1.0 - tr - va;
            prop_assume!(te > 0.05);
            let table = AlignedTable {
                start: dt("2020-01-01T00:00"),
                columns: vec!["x".into()],
                values: vec![(0..n).map(|i| i as f64).collect()],
            };
            let spec = SplitSpec::Ratio { ratio: (tr, va, te) };
            let (a, b, c) = split_dataset(&table, &spec).unwrap();
            let mut glued = a.values[0].clone();
            glued.extend(&b.values[0]);
            glued.extend(&c.values[0]);
            prop_assert_eq!(glued, table.values[0].clone());
        }
    }
}
