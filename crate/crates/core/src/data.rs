//! Typed containers for multivariate series and labels, CSV ingestion and
//! train/test splitting.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` named variables observed at `T` timestamps.
///
/// Values are stored time-major: the observation at time `t` is the
/// contiguous slice `values[t * n .. (t + 1) * n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    len: usize,
    period_seconds: Option<f64>,
    time_offset: usize,
}

impl SeriesMatrix {
    /// Builds a matrix from time-major values. Requires at least one
    /// variable and one timestamp; ingestion enforces `T >= 2` separately.
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let n = names.len();
        if n == 0 {
            return Err(Error::Shape("at least one variable is required".into()));
        }
        if values.len() % n != 0 || values.is_empty() {
            return Err(Error::Shape(format!(
                "{} values do not form whole observations of {} variables",
                values.len(),
                n
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / n,
                column: names[pos % n].clone(),
                value: values[pos].to_string(),
            });
        }
        let len = values.len() / n;
        Ok(Self {
            names,
            values,
            len,
            period_seconds: None,
            time_offset: 0,
        })
    }

    /// Builds a matrix from one vector per variable.
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                got: columns.len(),
            });
        }
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("columns have different lengths".into()));
        }
        let n = columns.len();
        let mut values = vec![0.0; n * len];
        for (i, col) in columns.iter().enumerate() {
            for (t, &v) in col.iter().enumerate() {
                values[t * n + i] = v;
            }
        }
        Self::new(names, values)
    }

    pub fn with_period(mut self, seconds: f64) -> Result<Self> {
        if !(seconds > 0.0 && seconds.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "period must be positive, got {seconds}"
            )));
        }
        self.period_seconds = Some(seconds);
        Ok(self)
    }

    pub(crate) fn with_time_offset(mut self, offset: usize) -> Self {
        self.time_offset = offset;
        self
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of variables.
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    /// Number of timestamps.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn period_seconds(&self) -> Option<f64> {
        self.period_seconds
    }

    /// Original timestamp of row 0 within its segment (h − 1 after smoothing).
    pub fn time_offset(&self) -> usize {
        self.time_offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        let n = self.n_vars();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn observations(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator + '_ {
        self.values.chunks_exact(self.n_vars())
    }

    pub fn get(&self, t: usize, var: usize) -> f64 {
        self.values[t * self.n_vars() + var]
    }

    /// Copies out the series of one variable.
    pub fn variable(&self, var: usize) -> Vec<f64> {
        self.observations().map(|o| o[var]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps only the listed variables, in the listed order.
    pub fn select(&self, vars: &[usize]) -> Result<Self> {
        if let Some(&bad) = vars.iter().find(|&&v| v >= self.n_vars()) {
            return Err(Error::Shape(format!("variable index {bad} out of range")));
        }
        let names = vars.iter().map(|&v| self.names[v].clone()).collect();
        let mut values = Vec::with_capacity(vars.len() * self.len);
        for obs in self.observations() {
            values.extend(vars.iter().map(|&v| obs[v]));
        }
        let mut out = Self::new(names, values)?;
        out.period_seconds = self.period_seconds;
        out.time_offset = self.time_offset;
        Ok(out)
    }

    /// Rows `range` of the matrix as a new matrix.
    pub fn rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len {
            return Err(Error::Shape(format!(
                "row range {:?} invalid for T = {}",
                range, self.len
            )));
        }
        let n = self.n_vars();
        let mut out = Self::new(
            self.names.clone(),
            self.values[range.start * n..range.end * n].to_vec(),
        )?;
        out.period_seconds = self.period_seconds;
        Ok(out)
    }

    /// Appends the rows of `other` (same variables) after the rows of `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.names != other.names {
            return Err(Error::Shape("cannot concatenate matrices with different variables".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let mut out = Self::new(self.names.clone(), values)?;
        out.period_seconds = self.period_seconds;
        out.time_offset = self.time_offset;
        Ok(out)
    }
}

/// Binary per-timestamp labels (predicted flags or ground truth).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<u8>,
    aligned_to: String,
}

impl LabelVector {
    pub fn new(labels: Vec<u8>, aligned_to: impl Into<String>) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&l| l > 1) {
            return Err(Error::BadLabel {
                row: pos,
                column: "label".into(),
                value: labels[pos].to_string(),
            });
        }
        Ok(Self {
            labels,
            aligned_to: aligned_to.into(),
        })
    }

    pub fn from_bools(flags: impl IntoIterator<Item = bool>, aligned_to: impl Into<String>) -> Self {
        Self {
            labels: flags.into_iter().map(u8::from).collect(),
            aligned_to: aligned_to.into(),
        }
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn aligned_to(&self) -> &str {
        &self.aligned_to
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            labels: self.labels[range].to_vec(),
            aligned_to: self.aligned_to.clone(),
        }
    }
}

/// Index `train_end` (exclusive) separating the training and test partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: usize,
}

/// Splits `x` into its training prefix and test suffix.
pub fn split(x: &SeriesMatrix, spec: SplitSpec) -> Result<(SeriesMatrix, SeriesMatrix)> {
    let len = x.len();
    if spec.train_end == 0 || spec.train_end >= len {
        return Err(Error::SplitOutOfRange {
            train_end: spec.train_end,
            len,
        });
    }
    Ok((x.rows(0..spec.train_end)?, x.rows(spec.train_end..len)?))
}

/// Reads a header-plus-rows CSV file. When `label_column` is given, that
/// column is removed from the matrix and returned as 0/1 labels.
pub fn load_csv(
    path: impl AsRef<Path>,
    label_column: Option<&str>,
) -> Result<(SeriesMatrix, Option<LabelVector>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path.display().to_string();
    read_csv(file, label_column, &id)
}

/// Same as [`load_csv`] over any reader; `id` names the source for labels.
pub fn read_csv<R: Read>(
    reader: R,
    label_column: Option<&str>,
    id: &str,
) -> Result<(SeriesMatrix, Option<LabelVector>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateName(h.clone()));
        }
    }
    let label_idx = match label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_owned()))?,
        ),
        None => None,
    };
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // data rows are numbered from 1, the header being row 0
        let row = r + 1;
        let record = record.map_err(|e| Error::Csv(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Csv(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                let label = match cell {
                    "0" => 0,
                    "1" => 1,
                    _ => {
                        return Err(Error::BadLabel {
                            row,
                            column: headers[c].clone(),
                            value: cell.to_owned(),
                        })
                    }
                };
                labels.push(label);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].clone(),
                value: cell.to_owned(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: headers[c].clone(),
                    value: cell.to_owned(),
                });
            }
            values.push(v);
        }
    }
    if names.is_empty() {
        return Err(Error::Shape("no numeric columns".into()));
    }
    let len = values.len() / names.len();
    if len < 2 {
        return Err(Error::Shape(format!("need at least 2 rows, found {len}")));
    }
    let matrix = SeriesMatrix::new(names, values)?;
    let labels = label_idx
        .map(|_| LabelVector::new(labels, id))
        .transpose()?;
    Ok((matrix, labels))
}

/// Writes `x` (and optionally a label column) as a header-plus-rows CSV.
pub fn write_csv(
    path: impl AsRef<Path>,
    x: &SeriesMatrix,
    labels: Option<(&str, &LabelVector)>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header: Vec<&str> = x.names().iter().map(String::as_str).collect();
    if let Some((name, lv)) = labels {
        if lv.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: lv.len(),
            });
        }
        header.push(name);
    }
    w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
    let mut buf: Vec<String> = Vec::with_capacity(x.n_vars() + 1);
    for (t, obs) in x.observations().enumerate() {
        buf.clear();
        buf.extend(obs.iter().map(|v| format!("{v:?}")));
        if let Some((_, lv)) = labels {
            buf.push(lv.as_slice()[t].to_string());
        }
        w.write_record(&buf).map_err(|e| Error::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes a single-column 0/1 label CSV.
pub fn write_labels(path: impl AsRef<Path>, column: &str, labels: &LabelVector) -> Result<()> {
    let path = path.as_ref();
    let mut file =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut out = String::with_capacity(labels.len() * 2 + column.len() + 1);
    out.push_str(column);
    out.push('\n');
    for l in labels.as_slice() {
        out.push(if *l == 1 { '1' } else { '0' });
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads labels from the named column of a CSV file (the only column when
/// `column` is `None`).
pub fn load_labels(path: impl AsRef<Path>, column: Option<&str>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let idx = match column {
        Some(c) => headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| Error::UnknownColumn(c.to_owned()))?,
        None if headers.len() == 1 => 0,
        None => {
            return Err(Error::Csv(
                "label file has several columns; name the label column".into(),
            ))
        }
    };
    let mut labels = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = rec.get(idx).unwrap_or("");
        labels.push(match cell {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::BadLabel {
                    row: r + 1,
                    column: headers[idx].clone(),
                    value: cell.to_owned(),
                })
            }
        });
    }
    LabelVector::new(labels, path.display().to_string())
}

/// Server Machine Dataset adapter: header-less rows of numbers separated by
/// commas and/or whitespace. Delimiters are normalized to commas, a header
/// `1,2,...,n` (1-based variable numbers) is prepended and the result goes
/// through the regular CSV parser.
pub fn load_smd(path: impl AsRef<Path>) -> Result<SeriesMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let csv_text = smd_to_csv(&text)?;
    let (x, _) = read_csv(csv_text.as_bytes(), None, &path.display().to_string())?;
    Ok(x)
}

fn smd_to_csv(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len() + 256);
    let mut width = None;
    for line in text.lines() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.is_empty() {
            continue;
        }
        if width.is_none() {
            let header: Vec<String> = (1..=fields.len()).map(|i| i.to_string()).collect();
            out.push_str(&header.join(","));
            out.push('\n');
            width = Some(fields.len());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    if width.is_none() {
        return Err(Error::Empty("SMD file has no rows"));
    }
    Ok(out)
}

/// Reads an SMD label file: one `0`/`1` per line, no header.
pub fn load_smd_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (r, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(match line {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::BadLabel {
                    row: r + 1,
                    column: "label".into(),
                    value: line.to_owned(),
                })
            }
        });
    }
    LabelVector::new(labels, path.display().to_string())
}

/// One entry of an SMD interpretation-label file: `start-end:v1,v2,...`
/// with 1-based variable numbers and inclusive timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interpretation {
    pub start: usize,
    pub end: usize,
    pub causes: Vec<usize>,
}

pub fn load_smd_interpretation(path: impl AsRef<Path>) -> Result<Vec<Interpretation>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interpretation(&text)
}

pub fn parse_interpretation(text: &str) -> Result<Vec<Interpretation>> {
    let bad = |line: &str| Error::Csv(format!("bad interpretation line {line:?}"));
    let mut out = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (range, causes) = line.split_once(':').ok_or_else(|| bad(line))?;
        let (s, e) = range.split_once('-').ok_or_else(|| bad(line))?;
        let start = s.trim().parse().map_err(|_| bad(line))?;
        let end = e.trim().parse().map_err(|_| bad(line))?;
        let causes = causes
            .split(',')
            .filter(|c| !c.trim().is_empty())
            .map(|c| c.trim().parse().map_err(|_| bad(line)))
            .collect::<Result<Vec<usize>>>()?;
        out.push(Interpretation { start, end, causes });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, t: usize) -> SeriesMatrix {
        let names = (0..n).map(|i| format!("v{i}")).collect();
        SeriesMatrix::new(names, (0..n * t).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn csv_with_label_column() {
        let text = "a,b,label\n1,2,0\n3,4,1\n5,6,0\n7,8,0\n9,10,1\n";
        let (x, y) = read_csv(text.as_bytes(), Some("label"), "mem").unwrap();
        assert_eq!(x.n_vars(), 2);
        assert_eq!(x.len(), 5);
        assert_eq!(x.names(), ["a", "b"]);
        assert_eq!(x.observation(1), [3.0, 4.0]);
        let y = y.unwrap();
        assert_eq!(y.as_slice(), [0, 1, 0, 0, 1]);
        assert_eq!(y.aligned_to(), "mem");
    }

    #[test]
    fn csv_nan_names_row_and_column() {
        let text = "a,b\n1,2\n3,NaN\n";
        match read_csv(text.as_bytes(), None, "mem") {
            Err(Error::NonFinite { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "a,b\n1,2\n3,x\n";
        assert!(matches!(
            read_csv(text.as_bytes(), None, "mem"),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn csv_rejects_duplicates_and_bad_labels() {
        assert!(matches!(
            read_csv("a,a\n1,2\n3,4\n".as_bytes(), None, "m"),
            Err(Error::DuplicateName(_))
        ));
        assert!(matches!(
            read_csv("a,y\n1,2\n3,0\n".as_bytes(), Some("y"), "m"),
            Err(Error::BadLabel { row: 1, .. })
        ));
    }

    #[test]
    fn split_partitions() {
        let x = matrix(2, 10);
        let (a, b) = split(&x, SplitSpec { train_end: 6 }).unwrap();
        assert_eq!((a.len(), b.len()), (6, 4));
        assert_eq!(a.concat(&b).unwrap(), x);
        assert!(split(&x, SplitSpec { train_end: 0 }).is_err());
        assert!(split(&x, SplitSpec { train_end: 10 }).is_err());
    }

    #[test]
    fn split_case_study_sizes() {
        let x = matrix(1, 70_000);
        let (a, b) = split(&x, SplitSpec { train_end: 60_000 }).unwrap();
        assert_eq!((a.len(), b.len()), (60_000, 10_000));
    }

    #[test]
    fn smd_adapter_normalizes_delimiters() {
        let row: Vec<String> = (0..38).map(|i| format!("{}", i as f64 / 100.0)).collect();
        let mut text = String::new();
        text.push_str(&row.join(","));
        text.push('\n');
        text.push_str(&row.join(" "));
        text.push('\n');
        text.push_str(&row.join(", "));
        text.push('\n');
        let csv_text = smd_to_csv(&text).unwrap();
        let (x, _) = read_csv(csv_text.as_bytes(), None, "smd").unwrap();
        assert_eq!(x.n_vars(), 38);
        assert_eq!(x.len(), 3);
        assert_eq!(x.names()[0], "1");
        assert_eq!(x.observation(2), x.observation(0));
    }

    #[test]
    fn interpretation_lines() {
        let v = parse_interpretation("15849-16368:1,9,10\n16963-17517:2\n").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].start, 15849);
        assert_eq!(v[0].causes, [1, 9, 10]);
    }

    #[test]
    fn select_keeps_order() {
        let x = matrix(3, 2);
        let s = x.select(&[2, 0]).unwrap();
        assert_eq!(s.names(), ["v2", "v0"]);
        assert_eq!(s.observation(1), [5.0, 3.0]);
    }
}
