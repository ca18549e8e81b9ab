use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ingest::vocabulary::Category;
use crate::scalar::Real;
use crate::series::{Month, TimeSeries};

/// One term's search-volume history on the 0..=100 index scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    pub term: String,
    pub category: Option<Category>,
    /// Strictly increasing months.
    pub observations: Vec<(Month, f64)>,
}

impl RawSeries {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn max(&self) -> Option<f64> {
        self.observations.iter().map(|o| o.1).reduce(f64::max)
    }

    pub fn with_term(mut self, term: impl Into<String>, category: Option<Category>) -> Self {
        self.term = term.into();
        self.category = category;
        self
    }

    /// Serializes to the `date,value` CSV layout.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (m, v) in &self.observations {
            out.push_str(&format!("{m},{v}\n"));
        }
        out
    }
}

/// Reads `date,value` rows. Row numbers in errors count data rows from 1.
fn read_rows(bytes: &[u8]) -> Result<Vec<(usize, Month, f64)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        row: 0,
        message: format!("input is not UTF-8: {e}"),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse {
        row: 0,
        message: e.to_string(),
    })?;
    if header.len() != 2 || &header[0] != "date" || &header[1] != "value" {
        return Err(Error::Parse {
            row: 0,
            message: format!("expected header 'date,value', got '{}'", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                row,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let month: Month = record[0].parse().map_err(|_| Error::Parse {
            row,
            message: format!("malformed date '{}'", &record[0]),
        })?;
        let value: f64 = record[1].parse().map_err(|_| Error::Parse {
            row,
            message: format!("malformed value '{}'", &record[1]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                row,
                message: "non-finite value".into(),
            });
        }
        rows.push((row, month, value));
    }
    Ok(rows)
}

fn sorted_unique(rows: Vec<(usize, Month, f64)>) -> Result<Vec<(Month, f64)>> {
    let mut by_month = BTreeMap::new();
    for (_, m, v) in rows {
        if by_month.insert(m, v).is_some() {
            return Err(Error::Duplicate(m));
        }
    }
    Ok(by_month.into_iter().collect())
}

/// Parses a search-volume CSV (`date,value`, `YYYY-MM`, values in [0,100]).
pub fn parse_raw_series(bytes: &[u8]) -> Result<RawSeries> {
    let rows = read_rows(bytes)?;
    if let Some(&(row, _, value)) = rows.iter().find(|r| !(0.0..=100.0).contains(&r.2)) {
        return Err(Error::Range { row, value });
    }
    Ok(RawSeries {
        term: String::new(),
        category: None,
        observations: sorted_unique(rows)?,
    })
}

/// Parses an unrestricted `date,value` CSV (targets and macro indicators).
///
/// Months must be contiguous once sorted.
pub fn parse_time_series<T: Real>(bytes: &[u8]) -> Result<TimeSeries<T>> {
    let obs = sorted_unique(read_rows(bytes)?)?;
    let start = obs
        .first()
        .map(|o| o.0)
        .ok_or_else(|| Error::Length("series has no rows".into()))?;
    for (i, (m, _)) in obs.iter().enumerate() {
        if m.months_since(start) as usize != i {
            return Err(Error::Parse {
                row: i + 1,
                message: format!("gap before {m}: series must be contiguous"),
            });
        }
    }
    Ok(TimeSeries::monthly(
        start,
        obs.into_iter().map(|(_, v)| T::of(v)).collect(),
    ))
}

/// Writes a series as CSV; monthly labels are `YYYY-MM`, quarterly `YYYY-Qn`.
pub fn time_series_to_csv<T: Real>(series: &TimeSeries<T>) -> String {
    let mut out = String::from("date,value\n");
    for (i, v) in series.values.iter().enumerate() {
        out.push_str(&format!("{},{}\n", series.label(i), v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file() {
        let s = parse_raw_series(b"date,value\n2007-01,50\n2007-02,100").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.max(), Some(100.0));
    }

    #[test]
    fn bound_violation_reports_row() {
        match parse_raw_series(b"date,value\n2007-01,101") {
            Err(Error::Range { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_date_reports_row() {
        match parse_raw_series(b"date,value\n2007-01,1\n2007/02,3\n") {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_month() {
        match parse_raw_series(b"date,value\n2007-01,1\n2007-01,3\n") {
            Err(Error::Duplicate(m)) => assert_eq!(m.to_string(), "2007-01"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let s = parse_raw_series(b"date,value\n2007-03,1\n2007-01,3\n").unwrap();
        assert_eq!(s.observations[0].0.to_string(), "2007-01");
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(
            parse_raw_series(b"month,value\n2007-01,1\n"),
            Err(Error::Parse { row: 0, .. })
        ));
    }

    #[test]
    fn time_series_requires_contiguity() {
        assert!(parse_time_series::<f64>(b"date,value\n2007-01,-1.5\n2007-03,2\n").is_err());
        let ts = parse_time_series::<f64>(b"date,value\n2007-01,-1.5\n2007-02,2\n").unwrap();
        assert_eq!(ts.values, vec![-1.5, 2.0]);
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in proptest::collection::vec(0.0f64..=100.0, 1..40), start in 0i32..200) {
            let first = Month::new(2000, 1).unwrap().offset(start);
            let s = RawSeries {
                term: String::new(),
                category: None,
                observations: values.iter().enumerate().map(|(i, &v)| (first.offset(i as i32), v)).collect(),
            };
            let text = s.to_csv();
            let back = parse_raw_series(text.as_bytes()).unwrap();
            prop_assert_eq!(&back, &s);
            prop_assert_eq!(back.to_csv(), text);
        }
    }
}
