//! Sparse labelled datasets and the LIBSVM text format.
//!
//! Indices are 0-based in memory and 1-based on disk. Labels are stored as
//! `-1.0` / `+1.0`; the reader maps a `0` label to `-1`.

use std::io::{BufRead, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// A sparse row with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRow {
    pub fn new(indices: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Dataset(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dataset("indices must be strictly increasing".into()));
        }
        Ok(SparseRow { indices, values })
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let (indices, values) = dense
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .unzip();
        SparseRow { indices, values }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * x[i])
            .sum()
    }

    /// `out += scale * self`
    pub fn axpy(&self, scale: f64, out: &mut DVector<f64>) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += scale * v;
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> SparseRow {
        SparseRow {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Samples `a_i` with labels `b_i` in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_features: usize,
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(n_features: usize, rows: Vec<SparseRow>, labels: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dataset("dataset must contain at least one sample".into()));
        }
        if rows.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l != 1.0 && l != -1.0) {
            return Err(Error::Dataset(format!("label {l} is not -1 or +1")));
        }
        for (r, row) in rows.iter().enumerate() {
            if let Some(&last) = row.indices.last() {
                if last >= n_features {
                    return Err(Error::Dataset(format!(
                        "row {r} has index {last} >= n_features {n_features}"
                    )));
                }
            }
        }
        Ok(Dataset {
            n_features,
            rows,
            labels,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    /// Keeps only the samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.n_features,
            idx.iter().map(|&i| self.rows[i].clone()).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

fn map_label(token: &str, line: usize) -> Result<f64> {
    let parse_err = || Error::Parse {
        line,
        msg: format!("bad label '{token}'"),
    };
    let v: f64 = token.parse().map_err(|_| parse_err())?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        // 0/1 corpora: 0 is the negative class.
        Ok(-1.0)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("label '{token}' not in {{+1, -1, 0, 1}}"),
        })
    }
}

/// Reads LIBSVM text. `n_features` overrides the inferred `max index + 1`
/// and must be at least that large.
pub fn parse_libsvm<R: BufRead>(reader: R, n_features: Option<usize>) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label = map_label(tokens.next().unwrap(), lineno)?;

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("malformed token '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index in '{tok}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "indices are 1-based; found 0".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad value in '{tok}'"),
            })?;
            let idx = idx - 1;
            if let Some(&prev) = indices.last() {
                if idx <= prev {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("index {} not increasing", idx + 1),
                    });
                }
            }
            indices.push(idx);
            values.push(val);
        }
        if let Some(&last) = indices.last() {
            max_index = Some(max_index.map_or(last, |m| m.max(last)));
        }
        rows.push(SparseRow { indices, values });
        labels.push(label);
    }

    let inferred = max_index.map_or(0, |m| m + 1);
    let n_features = match n_features {
        Some(n) if n < inferred => {
            return Err(Error::Dataset(format!(
                "n_features override {n} smaller than max index {inferred}"
            )))
        }
        Some(n) => n,
        None => inferred,
    };
    Dataset::new(n_features, rows, labels)
}

/// Writes the canonical LIBSVM form: `+1`/`-1` labels, 1-based indices,
/// shortest round-trip float formatting.
pub fn write_libsvm<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for (row, &label) in dataset.rows.iter().zip(&dataset.labels) {
        write!(out, "{}", if label > 0.0 { "+1" } else { "-1" })?;
        for (&i, &v) in row.indices.iter().zip(&row.values) {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_libsvm(text.as_bytes(), None)
    }

    #[test]
    fn single_row() {
        let ds = parse("+1 1:0.5 3:-2.0\n").unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.row(0).indices(), &[0, 2]);
        assert_eq!(ds.row(0).values(), &[0.5, -2.0]);
        assert_eq!(ds.labels(), &[1.0]);
    }

    #[test]
    fn features_from_max_index() {
        let ds = parse("-1 2:1\n+1 1:1\n").unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels(), &[-1.0, 1.0]);
    }

    #[test]
    fn zero_label_is_negative() {
        let ds = parse("0 1:1").unwrap();
        assert_eq!(ds.labels(), &[-1.0]);
        let ds = parse("1 1:1").unwrap();
        assert_eq!(ds.labels(), &[1.0]);
    }

    #[test]
    fn blank_lines_and_comments_skipped() {
        let ds = parse("\n+1 1:1 # note\n\n-1 2:3\n").unwrap();
        assert_eq!(ds.n_samples(), 2);
    }

    #[test]
    fn malformed_token_reports_line() {
        match parse("+1 1:1\n-1 2-3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_increasing_indices_rejected() {
        assert!(matches!(parse("+1 3:1 2:1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("+1 2:1 2:1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_labels_rejected() {
        assert!(matches!(parse("2 1:1"), Err(Error::Parse { .. })));
        assert!(matches!(parse("x 1:1"), Err(Error::Parse { .. })));
        assert!(matches!(parse("+1 0:1"), Err(Error::Parse { .. })));
    }

    #[test]
    fn feature_override() {
        let ds = parse_libsvm("+1 2:1".as_bytes(), Some(10)).unwrap();
        assert_eq!(ds.n_features(), 10);
        assert!(parse_libsvm("+1 5:1".as_bytes(), Some(2)).is_err());
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(parse("\n\n"), Err(Error::Dataset(_))));
    }

    #[test]
    fn canonical_form_fixture() {
        let text = "1 1:0.50 3:-2\n0 2:1e-3\n-1\n";
        let ds = parse(text).unwrap();
        let mut out = Vec::new();
        write_libsvm(&ds, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "+1 1:0.5 3:-2\n-1 2:0.001\n-1\n"
        );
    }

    #[test]
    fn dataset_invariants() {
        let row = SparseRow::new(vec![0, 3], vec![1.0, 2.0]).unwrap();
        assert!(Dataset::new(3, vec![row.clone()], vec![1.0]).is_err());
        assert!(Dataset::new(4, vec![row.clone()], vec![0.5]).is_err());
        assert!(Dataset::new(4, vec![row], vec![1.0, -1.0]).is_err());
        assert!(SparseRow::new(vec![2, 1], vec![1.0, 1.0]).is_err());
    }
}
