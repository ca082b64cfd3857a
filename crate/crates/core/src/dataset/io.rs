//! Text formats for datasets.
//!
//! Sparse multi-label format, one instance per line after a `#n d l` header:
//!
//! ```text
//! #3 10 6
//! 2,5 1:0.5 7:1
//! 0 3:2.25
//! 1,4
//! ```
//!
//! A PML dataset (candidates differ from the ground truth) writes both label
//! lists in the leading block: `2,3,5|2,5 1:0.5 7:1`.
//!
//! Dense CSV format: `x1,...,xd;y1,...,yl` with binary `y`, and for PML data
//! a third block with the ground truth, `x1,...,xd;c1,...,cl;t1,...,tl`.
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save followed by a load reproduces every feature bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    SparseMultilabel,
    DenseCsv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" | "sparse-multilabel" => Ok(Format::SparseMultilabel),
            "dense" | "dense-csv" | "csv" => Ok(Format::DenseCsv),
            other => Err(Error::Config(format!("unknown dataset format `{other}`"))),
        }
    }
}

pub fn load(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse(&text, format)
}

pub fn save(ds: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    fs::write(path, render(ds, format))?;
    Ok(())
}

pub fn parse(text: &str, format: Format) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, d, l) = match lines.next() {
        Some((no, line)) => parse_header(no, line)?,
        None => return Err(Error::parse(1, "missing `#n d l` header")),
    };

    let mut x = DMatrix::<f64>::zeros(n, d);
    let mut cand = LabelMatrix::zeros(n, l);
    let mut truth = LabelMatrix::zeros(n, l);
    let mut count = 0;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if count == n {
            return Err(Error::parse(no, format!("more than the {n} instances declared")));
        }
        let row = match format {
            Format::SparseMultilabel => parse_sparse_line(no, line, d, l)?,
            Format::DenseCsv => parse_dense_line(no, line, d, l)?,
        };
        for (j, v) in row.features {
            x[(count, j)] = v;
        }
        for &j in &row.candidates {
            cand.set(count, j, true);
        }
        for &j in row.truth.as_ref().unwrap_or(&row.candidates) {
            truth.set(count, j, true);
        }
        count += 1;
    }
    if count != n {
        return Err(Error::parse(
            text.lines().count(),
            format!("header declares {n} instances, found {count}"),
        ));
    }
    Dataset::new(x, cand, Some(truth))
}

pub fn render(ds: &Dataset, format: Format) -> String {
    let (n, d, l) = (ds.n_instances(), ds.n_features(), ds.n_labels());
    let cand = ds.candidates();
    // The second label block is only written when it carries information.
    let truth = ds.truth().filter(|t| *t != cand);
    let mut out = format!("#{n} {d} {l}\n");
    let x = ds.features();
    for i in 0..n {
        match format {
            Format::SparseMultilabel => {
                out.push_str(&join_indices(&cand.row_indices(i)));
                if let Some(t) = truth {
                    out.push('|');
                    out.push_str(&join_indices(&t.row_indices(i)));
                }
                for j in 0..d {
                    let v = x[(i, j)];
                    // Skip only +0.0 so that -0.0 survives a round trip.
                    if v.to_bits() != 0 {
                        write!(out, " {j}:{v}").unwrap();
                    }
                }
            }
            Format::DenseCsv => {
                for j in 0..d {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{}", x[(i, j)]).unwrap();
                }
                out.push(';');
                out.push_str(&join_bits(cand.row(i)));
                if let Some(t) = truth {
                    out.push(';');
                    out.push_str(&join_bits(t.row(i)));
                }
            }
        }
        out.push('\n');
    }
    out
}

fn join_indices(idx: &[usize]) -> String {
    idx.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
}

fn join_bits(row: &[bool]) -> String {
    row.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(",")
}

/// Parses `#n d l` (also accepts `# n d l`).
pub(crate) fn parse_header(no: usize, line: &str) -> Result<(usize, usize, usize)> {
    let dims = parse_header_fields(no, line, 3)?;
    Ok((dims[0], dims[1], dims[2]))
}

pub(crate) fn parse_header_fields(no: usize, line: &str, expected: usize) -> Result<Vec<usize>> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::parse(no, "header must start with `#`"))?;
    let fields: Vec<usize> = body
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| Error::parse(no, format!("bad header field `{t}`"))))
        .collect::<Result<_>>()?;
    if fields.len() != expected {
        return Err(Error::parse(no, format!("header needs {expected} fields, got {}", fields.len())));
    }
    Ok(fields)
}

struct ParsedRow {
    features: Vec<(usize, f64)>,
    candidates: Vec<usize>,
    truth: Option<Vec<usize>>,
}

fn parse_label_list(no: usize, s: &str, l: usize) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for tok in s.split(',') {
        let j: usize =
            tok.trim().parse().map_err(|_| Error::parse(no, format!("bad label index `{tok}`")))?;
        if j >= l {
            return Err(Error::range(no, format!("label index {j} >= l = {l}")));
        }
        if out.contains(&j) {
            return Err(Error::parse(no, format!("duplicate label index {j}")));
        }
        out.push(j);
    }
    Ok(out)
}

fn parse_sparse_line(no: usize, line: &str, d: usize, l: usize) -> Result<ParsedRow> {
    let line = line.trim_end();
    let (label_block, rest) = line.split_once(' ').unwrap_or((line, ""));
    if label_block.contains(':') {
        return Err(Error::parse(no, "line must start with a label list"));
    }
    let (cand_str, truth_str) = match label_block.split_once('|') {
        Some((c, t)) => (c, Some(t)),
        None => (label_block, None),
    };
    let candidates = parse_label_list(no, cand_str, l)?;
    if candidates.is_empty() {
        return Err(Error::Validation(format!("line {no}: empty label set")));
    }
    let truth = truth_str.map(|t| parse_label_list(no, t, l)).transpose()?;

    let mut features: Vec<(usize, f64)> = Vec::new();
    for tok in rest.split_whitespace() {
        let (f, v) = tok
            .split_once(':')
            .ok_or_else(|| Error::parse(no, format!("expected `index:value`, got `{tok}`")))?;
        let f: usize =
            f.parse().map_err(|_| Error::parse(no, format!("bad feature index `{f}`")))?;
        let v: f64 = v.parse().map_err(|_| Error::parse(no, format!("bad feature value `{v}`")))?;
        if f >= d {
            return Err(Error::range(no, format!("feature index {f} >= d = {d}")));
        }
        if features.iter().any(|&(g, _)| g == f) {
            return Err(Error::parse(no, format!("duplicate feature index {f}")));
        }
        features.push((f, v));
    }
    Ok(ParsedRow { features, candidates, truth })
}

fn parse_bits(no: usize, s: &str, l: usize) -> Result<Vec<usize>> {
    let toks: Vec<&str> = s.split(',').map(str::trim).collect();
    if toks.len() != l {
        return Err(Error::parse(no, format!("expected {l} label columns, got {}", toks.len())));
    }
    let mut out = Vec::new();
    for (j, t) in toks.iter().enumerate() {
        match *t {
            "1" => out.push(j),
            "0" => {}
            other => return Err(Error::parse(no, format!("label value `{other}` is not 0/1"))),
        }
    }
    Ok(out)
}

fn parse_dense_line(no: usize, line: &str, d: usize, l: usize) -> Result<ParsedRow> {
    let blocks: Vec<&str> = line.trim_end().split(';').collect();
    if !(2..=3).contains(&blocks.len()) {
        return Err(Error::parse(no, "expected `features;labels[;truth]`"));
    }
    let vals: Vec<&str> = blocks[0].split(',').map(str::trim).collect();
    if vals.len() != d {
        return Err(Error::parse(no, format!("expected {d} feature columns, got {}", vals.len())));
    }
    let features = vals
        .iter()
        .enumerate()
        .map(|(j, v)| {
            v.parse::<f64>()
                .map(|v| (j, v))
                .map_err(|_| Error::parse(no, format!("bad feature value `{v}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let candidates = parse_bits(no, blocks[1], l)?;
    if candidates.is_empty() {
        return Err(Error::Validation(format!("line {no}: empty label set")));
    }
    let truth = blocks.get(2).map(|t| parse_bits(no, t, l)).transpose()?;
    Ok(ParsedRow { features, candidates, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_line_example() {
        let ds = parse("#1 10 6\n2,5 1:0.5 7:1.0\n", Format::SparseMultilabel).unwrap();
        assert_eq!(ds.candidates().row_indices(0), vec![2, 5]);
        assert_eq!(ds.truth().unwrap(), ds.candidates());
        assert_eq!(ds.features()[(0, 1)], 0.5);
        assert_eq!(ds.features()[(0, 7)], 1.0);
        assert_eq!(ds.features().iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn dense_line_example() {
        let ds = parse("#1 2 2\n0.1,0.2;1,0\n", Format::DenseCsv).unwrap();
        assert_eq!(ds.features().row(0).iter().copied().collect::<Vec<_>>(), vec![0.1, 0.2]);
        assert_eq!(ds.candidates().row(0), &[true, false]);
    }

    #[test]
    fn pml_blocks_are_read() {
        let ds = parse("#1 3 4\n0,1,3|1 0:2\n", Format::SparseMultilabel).unwrap();
        assert_eq!(ds.candidates().row_indices(0), vec![0, 1, 3]);
        assert_eq!(ds.truth().unwrap().row_indices(0), vec![1]);
        let dense = parse("#1 1 3\n2;1,1,0;0,1,0\n", Format::DenseCsv).unwrap();
        assert_eq!(dense.truth().unwrap().row_indices(0), vec![1]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("#2 4 3\n0 1:1\n1 2:x\n", Format::SparseMultilabel).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
        let err = parse("#1 4 3\n0 4:1\n", Format::SparseMultilabel).unwrap_err();
        assert!(matches!(err, Error::Range { line: 2, .. }), "{err:?}");
        let err = parse("#1 4 3\n3 1:1\n", Format::SparseMultilabel).unwrap_err();
        assert!(matches!(err, Error::Range { line: 2, .. }), "{err:?}");
        let err = parse("#1 4 3\n 1:1\n", Format::SparseMultilabel).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
        let err = parse("#1 2 2\n0.1,0.2;0,0\n", Format::DenseCsv).unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err:?}");
        let err = parse("#2 2 2\n0.1,0.2;1,0\n", Format::DenseCsv).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
        assert!(parse("2 2 2\n", Format::DenseCsv).is_err());
    }
}
