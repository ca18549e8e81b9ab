use crate::error::{Error, Result};
use crate::ingest::raw::RawSeries;
use crate::ingest::vocabulary::{Category, Variant, Vocabulary};
use crate::linalg::Matrix;
use crate::series::{Month, MonthRange};

/// Aligned search-volume panel: rows are months, columns are terms.
///
/// Missing cells hold `NaN` in `values` and `true` in `missing`.
#[derive(Clone, Debug, PartialEq)]
pub struct TermPanel {
    pub terms: Vec<String>,
    pub categories: Vec<Option<Category>>,
    pub span: MonthRange,
    pub values: Matrix<f64>,
    /// Row-major, same shape as `values`.
    pub missing: Vec<bool>,
}

impl TermPanel {
    pub fn width(&self) -> usize {
        self.terms.len()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.width() + col]
    }

    pub fn missing_count(&self, col: usize) -> usize {
        (0..self.span.len()).filter(|&r| self.is_missing(r, col)).count()
    }

    pub fn column_index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> TermPanel {
        let t = self.span.len();
        let mut missing = Vec::with_capacity(t * cols.len());
        for r in 0..t {
            for &c in cols {
                missing.push(self.is_missing(r, c));
            }
        }
        TermPanel {
            terms: cols.iter().map(|&c| self.terms[c].clone()).collect(),
            categories: cols.iter().map(|&c| self.categories[c]).collect(),
            span: self.span,
            values: self.values.select_columns(cols),
            missing,
        }
    }

    /// Columns whose terms the vocabulary flags for `variant`, in vocabulary order.
    pub fn for_variant(&self, vocabulary: &Vocabulary, variant: Variant) -> Result<TermPanel> {
        let mut cols = Vec::new();
        for entry in vocabulary.terms(variant) {
            let c = self.column_index(&entry.term).ok_or_else(|| {
                Error::Config(format!("panel has no column for term '{}'", entry.term))
            })?;
            cols.push(c);
        }
        Ok(self.select_columns(&cols))
    }

    pub fn for_category(&self, category: Category) -> TermPanel {
        let cols: Vec<usize> = (0..self.width())
            .filter(|&c| self.categories[c] == Some(category))
            .collect();
        self.select_columns(&cols)
    }

    /// Restricts rows to `range`, which must lie within the span.
    pub fn slice_rows(&self, range: &MonthRange) -> Result<TermPanel> {
        let a = self
            .span
            .index_of(range.start)
            .filter(|_| self.span.contains(range.end))
            .ok_or_else(|| Error::InvalidSpan(format!("{range} not within panel span {}", self.span)))?;
        let n = self.width();
        Ok(TermPanel {
            terms: self.terms.clone(),
            categories: self.categories.clone(),
            span: *range,
            values: self.values.select_rows(a..a + range.len()),
            missing: self.missing[a * n..(a + range.len()) * n].to_vec(),
        })
    }

    /// Panel CSV: `date,<term1>,<term2>,...`, missing cells empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["date".to_string()];
        header.extend(self.terms.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (r, m) in self.span.months().enumerate() {
            let mut rec = vec![m.to_string()];
            for c in 0..self.width() {
                rec.push(if self.is_missing(r, c) {
                    String::new()
                } else {
                    self.values[(r, c)].to_string()
                });
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Reads the panel CSV layout; categories come from `vocabulary` when the term is listed.
    pub fn from_csv(bytes: &[u8], vocabulary: Option<&Vocabulary>) -> Result<TermPanel> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes);
        let header = reader
            .headers()
            .map_err(|e| Error::Parse {
                row: 0,
                message: e.to_string(),
            })?
            .clone();
        if header.is_empty() || &header[0] != "date" || header.len() < 2 {
            return Err(Error::Parse {
                row: 0,
                message: "expected header 'date,<term>,...'".into(),
            });
        }
        let terms: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let n = terms.len();
        let mut months: Vec<Month> = Vec::new();
        let mut data = Vec::new();
        let mut missing = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::Parse {
                row,
                message: e.to_string(),
            })?;
            if rec.len() != n + 1 {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {} fields", n + 1),
                });
            }
            let m: Month = rec[0].parse().map_err(|_| Error::Parse {
                row,
                message: format!("malformed date '{}'", &rec[0]),
            })?;
            if let Some(&prev) = months.last() {
                if m != prev.succ() {
                    return Err(Error::Parse {
                        row,
                        message: format!("rows must be consecutive months ({prev} then {m})"),
                    });
                }
            }
            months.push(m);
            for c in 0..n {
                let cell = &rec[c + 1];
                if cell.is_empty() {
                    data.push(f64::NAN);
                    missing.push(true);
                } else {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        message: format!("malformed value '{cell}'"),
                    })?;
                    if !(0.0..=100.0).contains(&v) {
                        return Err(Error::Range { row, value: v });
                    }
                    data.push(v);
                    missing.push(false);
                }
            }
        }
        let span = MonthRange::with_len(
            *months.first().ok_or_else(|| Error::Length("panel has no rows".into()))?,
            months.len(),
        )?;
        let categories = terms
            .iter()
            .map(|t| vocabulary.and_then(|v| v.get(t)).map(|e| e.category))
            .collect();
        Ok(TermPanel {
            terms,
            categories,
            span,
            values: Matrix::from_vec(months.len(), n, data)?,
            missing,
        })
    }
}

/// Aligns series on `span`; months a series lacks are marked missing.
pub fn assemble_panel(series: &[RawSeries], span: MonthRange) -> Result<TermPanel> {
    if series.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let t = span.len();
    let n = series.len();
    let mut values = Matrix::from_fn(t, n, |_, _| f64::NAN);
    let mut missing = vec![true; t * n];
    for (c, s) in series.iter().enumerate() {
        for &(m, v) in &s.observations {
            if let Some(r) = span.index_of(m) {
                values[(r, c)] = v;
                missing[r * n + c] = false;
            }
        }
    }
    Ok(TermPanel {
        terms: series.iter().map(|s| s.term.clone()).collect(),
        categories: series.iter().map(|s| s.category).collect(),
        span,
        values,
        missing,
    })
}
