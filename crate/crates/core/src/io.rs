//! File formats: labeled datasets (UCR-style and delimited), the parameter
//! table, alignment reports, and run manifests.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly. The decimal separator is always `.`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::congeal::AlignmentReport;
use crate::curves::{warp_function, Curve, CurveSet, TransformParams, WEIGHT_NAMES};
use crate::error::{Error, ParseError, Result};

pub const PARAMS_HEADER: &str = "curve_index,alpha,beta,phi_half,omega_half,phi_one,omega_one";

pub const ALIGNED_FILE: &str = "aligned.csv";
pub const PARAMS_FILE: &str = "params.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const WARPS_FILE: &str = "warps.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// One series per line: integer class label, then samples; comma or
    /// whitespace separated.
    Ucr,
    /// Comma separated, optional header row, optional `label` column.
    Csv,
}

/// Raw rows of a dataset file before curve validation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub labels: Option<Vec<i64>>,
    pub rows: Vec<Vec<f64>>,
}

impl DatasetFile {
    pub fn into_curve_set(self) -> Result<CurveSet> {
        let curves = self
            .rows
            .into_iter()
            .map(Curve::new)
            .collect::<Result<Vec<_>>>()?;
        match self.labels {
            Some(labels) => CurveSet::labeled(curves, labels),
            None => CurveSet::new(curves),
        }
    }

    pub fn from_curves(curves: &[Curve], labels: Option<&[i64]>) -> Self {
        DatasetFile {
            labels: labels.map(<[i64]>::to_vec),
            rows: curves.iter().map(|c| c.samples().to_vec()).collect(),
        }
    }
}

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(token: &str, line: usize) -> Result<f64, ParseError> {
    let v: f64 = token.parse().map_err(|_| ParseError::NonNumeric {
        line,
        token: token.to_string(),
    })?;
    if !v.is_finite() {
        return Err(ParseError::NonFinite {
            line,
            token: token.to_string(),
        });
    }
    Ok(v)
}

/// Integer labels, also accepting integral reals such as `1.0000000e+00`.
fn parse_label(token: &str, line: usize) -> Result<i64, ParseError> {
    if let Ok(v) = token.parse::<i64>() {
        return Ok(v);
    }
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(ParseError::BadLabel {
            line,
            token: token.to_string(),
        }),
    }
}

fn check_width(expected: &mut Option<usize>, found: usize, line: usize) -> Result<(), ParseError> {
    match *expected {
        None => {
            *expected = Some(found);
            Ok(())
        }
        Some(e) if e == found => Ok(()),
        Some(e) => Err(ParseError::Ragged {
            line,
            expected: e,
            found,
        }),
    }
}

/// Parses UCR-style text. Blank lines are skipped.
pub fn parse_ucr(text: &str) -> Result<DatasetFile, ParseError> {
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut tokens = raw
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty());
        let Some(first) = tokens.next() else {
            continue;
        };
        let label = parse_label(first, line)?;
        let samples = tokens
            .map(|t| parse_real(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if samples.is_empty() {
            return Err(ParseError::NoSamples { line });
        }
        check_width(&mut width, samples.len(), line)?;
        labels.push(label);
        rows.push(samples);
    }
    if rows.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(DatasetFile {
        labels: Some(labels),
        rows,
    })
}

/// Parses comma-separated text. A first row with any non-numeric field is a
/// header; a header column named `label` (any case) holds class labels.
pub fn parse_csv(text: &str) -> Result<DatasetFile, ParseError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut label_col = None;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    let mut width: Option<usize> = None;
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| ParseError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if first {
            first = false;
            let is_header = record.iter().any(|f| f.parse::<f64>().is_err());
            if is_header {
                let cols: Vec<String> = record.iter().map(str::to_ascii_lowercase).collect();
                label_col = cols.iter().position(|c| c == "label");
                if cols.iter().filter(|c| *c == "label").count() > 1 {
                    return Err(ParseError::Malformed {
                        line,
                        message: "more than one label column".into(),
                    });
                }
                let samples = record.len() - usize::from(label_col.is_some());
                if samples == 0 {
                    return Err(ParseError::NoSamples { line });
                }
                width = Some(record.len());
                continue;
            }
        }
        check_width(&mut width, record.len(), line)?;
        let mut samples = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            if Some(col) == label_col {
                labels.push(parse_label(field, line)?);
            } else {
                samples.push(parse_real(field, line)?);
            }
        }
        if samples.is_empty() {
            return Err(ParseError::NoSamples { line });
        }
        rows.push(samples);
    }
    if rows.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(DatasetFile {
        labels: label_col.map(|_| labels),
        rows,
    })
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<DatasetFile, ParseError> {
    match format {
        DatasetFormat::Ucr => parse_ucr(text),
        DatasetFormat::Csv => parse_csv(text),
    }
}

pub fn read_dataset_file(path: &Path, format: DatasetFormat) -> Result<DatasetFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_dataset(&text, format).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_dataset(path: &Path, format: DatasetFormat) -> Result<CurveSet> {
    read_dataset_file(path, format)?
        .into_curve_set()
        .map_err(|e| e.in_file(path))
}

pub fn render_dataset(data: &DatasetFile, format: DatasetFormat) -> Result<String> {
    let width = data.rows.first().map_or(0, Vec::len);
    let mut out = String::new();
    match format {
        DatasetFormat::Ucr => {
            let labels = data
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("the UCR format requires class labels".into()))?;
            for (label, row) in labels.iter().zip(&data.rows) {
                out.push_str(&label.to_string());
                for v in row {
                    out.push(',');
                    out.push_str(&format_real(*v));
                }
                out.push('\n');
            }
        }
        DatasetFormat::Csv => {
            let mut header: Vec<String> = Vec::with_capacity(width + 1);
            if data.labels.is_some() {
                header.push("label".into());
            }
            header.extend((0..width).map(|i| format!("s{i}")));
            out.push_str(&header.join(","));
            out.push('\n');
            for (i, row) in data.rows.iter().enumerate() {
                let mut fields: Vec<String> = Vec::with_capacity(row.len() + 1);
                if let Some(labels) = &data.labels {
                    fields.push(labels[i].to_string());
                }
                fields.extend(row.iter().map(|v| format_real(*v)));
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Writes the curves of `set` (as stored) with their labels.
pub fn write_dataset(set: &CurveSet, path: &Path, format: DatasetFormat) -> Result<()> {
    let text = render_dataset(
        &DatasetFile::from_curves(set.curves(), set.labels()),
        format,
    )?;
    write_file(path, &text)
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::from(e).in_file(path))
}

pub fn render_params_table(params: &[TransformParams]) -> String {
    let mut out = String::from(PARAMS_HEADER);
    out.push('\n');
    for (i, p) in params.iter().enumerate() {
        let _ = write!(out, "{i},{},{}", format_real(p.alpha), format_real(p.beta));
        for w in p.weights() {
            out.push(',');
            out.push_str(&format_real(w));
        }
        out.push('\n');
    }
    out
}

/// Parses a parameter table. Rows must be in `curve_index` order starting
/// at 0 and `alpha` must be positive.
pub fn parse_params_table(text: &str) -> Result<Vec<TransformParams>, ParseError> {
    let expected: Vec<&str> = PARAMS_HEADER.split(',').collect();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((hline, header)) = lines.next() else {
        return Err(ParseError::Empty);
    };
    let found: Vec<&str> = header.split(',').map(str::trim).collect();
    if found != expected {
        return Err(ParseError::Malformed {
            line: hline,
            message: format!("expected header {PARAMS_HEADER:?}"),
        });
    }
    let mut out = Vec::new();
    for (line, raw) in lines {
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != expected.len() {
            return Err(ParseError::Ragged {
                line,
                expected: expected.len(),
                found: fields.len(),
            });
        }
        let index: usize = fields[0].parse().map_err(|_| ParseError::NonNumeric {
            line,
            token: fields[0].to_string(),
        })?;
        if index != out.len() {
            return Err(ParseError::Malformed {
                line,
                message: format!("curve_index {index} out of order (expected {})", out.len()),
            });
        }
        let values = fields[1..]
            .iter()
            .map(|t| parse_real(t, line))
            .collect::<Result<Vec<_>, _>>()?;
        if values[0] <= 0.0 {
            return Err(ParseError::Malformed {
                line,
                message: format!("alpha must be positive, got {}", values[0]),
            });
        }
        let mut p = TransformParams {
            alpha: values[0],
            beta: values[1],
            ..TransformParams::IDENTITY
        };
        for (idx, v) in values[2..].iter().enumerate() {
            p.set_weight(idx, *v);
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(out)
}

pub fn write_params_table(params: &[TransformParams], path: &Path) -> Result<()> {
    write_file(path, &render_params_table(params))
}

pub fn read_params_table(path: &Path) -> Result<Vec<TransformParams>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_params_table(&text).map_err(|e| Error::from(e).in_file(path))
}

/// SHA-256 of an input file, recorded in manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
        Ok(Self::of_bytes(&path.display().to_string(), &bytes))
    }

    pub fn of_bytes(name: &str, bytes: &[u8]) -> Self {
        InputDigest {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

/// Everything needed to rerun a command bit for bit. Wall-clock
/// timestamps are only present when requested, since they make otherwise
/// identical runs differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub rng_seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at_unix: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, rng_seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            rng_seed,
            config,
            inputs: Vec::new(),
            started_at_unix: None,
            finished_at_unix: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numerical(format!("manifest serialization: {e}")))?;
        text.push('\n');
        write_file(&dir.join(MANIFEST_FILE), &text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::from(ParseError::Malformed {
                line: e.line(),
                message: e.to_string(),
            })
            .in_file(&path)
        })
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))
}

/// Paths written by [`write_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub aligned: PathBuf,
    pub params: PathBuf,
    pub trace: PathBuf,
    pub warps: PathBuf,
    pub manifest: PathBuf,
}

/// Writes aligned curves, final parameters, the objective trace, per-curve
/// warp tables and the manifest into `out_dir`.
///
/// `trace.csv` holds `(iteration, total)` with iterations counted from 1;
/// `warps.csv` is long-form `(curve_index, t, h)`.
pub fn write_report(
    report: &AlignmentReport,
    out_dir: &Path,
    manifest: &RunManifest,
) -> Result<ReportFiles> {
    ensure_dir(out_dir)?;
    let files = ReportFiles {
        aligned: out_dir.join(ALIGNED_FILE),
        params: out_dir.join(PARAMS_FILE),
        trace: out_dir.join(TRACE_FILE),
        warps: out_dir.join(WARPS_FILE),
        manifest: out_dir.join(MANIFEST_FILE),
    };
    write_dataset(&report.final_set, &files.aligned, DatasetFormat::Csv)?;
    write_params_table(report.params(), &files.params)?;

    let mut trace = String::from("iteration,total\n");
    for (i, v) in report.objective_trace.iter().enumerate() {
        let _ = writeln!(trace, "{},{}", i + 1, format_real(*v));
    }
    write_file(&files.trace, &trace)?;

    let m = report.final_set.curve_len();
    let mut warps = String::from("curve_index,t,h\n");
    for (k, p) in report.params().iter().enumerate() {
        let table = warp_function(p, m)?;
        for (i, h) in table.h_values().iter().enumerate() {
            let t = i as f64 / (m - 1) as f64;
            let _ = writeln!(warps, "{k},{},{}", format_real(t), format_real(*h));
        }
    }
    write_file(&files.warps, &warps)?;
    manifest.write(out_dir)?;
    Ok(files)
}

/// Column names of the parameter table after `curve_index`.
pub fn params_columns() -> Vec<&'static str> {
    let mut cols = vec!["alpha", "beta"];
    cols.extend(WEIGHT_NAMES);
    cols
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ucr_line() {
        let d = parse_ucr("1,0.0,0.5,1.0\n").unwrap();
        assert_eq!(d.labels, Some(vec![1]));
        assert_eq!(d.rows, vec![vec![0.0, 0.5, 1.0]]);
        let d = parse_ucr("  2.0000000e+00  1.5  -2e-1\n\n3 4 5\n").unwrap();
        assert_eq!(d.labels, Some(vec![2, 3]));
        assert_eq!(d.rows[0], vec![1.5, -0.2]);
    }

    #[test]
    fn ucr_errors() {
        assert_eq!(
            parse_ucr("1,0,1,2\n1,0,1\n"),
            Err(ParseError::Ragged {
                line: 2,
                expected: 3,
                found: 2
            })
        );
        assert!(matches!(
            parse_ucr("1,0,x,2\n"),
            Err(ParseError::NonNumeric { line: 1, .. })
        ));
        assert!(matches!(
            parse_ucr("a,0,1\n"),
            Err(ParseError::BadLabel { line: 1, .. })
        ));
        assert!(matches!(
            parse_ucr("1.5,0,1\n"),
            Err(ParseError::BadLabel { .. })
        ));
        assert!(matches!(
            parse_ucr("1,0,NaN\n"),
            Err(ParseError::NonFinite { .. })
        ));
        assert!(matches!(
            parse_ucr("1\n"),
            Err(ParseError::NoSamples { line: 1 })
        ));
        assert_eq!(parse_ucr(""), Err(ParseError::Empty));
        assert_eq!(parse_ucr("\n  \n"), Err(ParseError::Empty));
    }

    #[test]
    fn csv_with_and_without_header() {
        let d = parse_csv("s0,label,s1\n0.5,3,1.5\n1,4,2\n").unwrap();
        assert_eq!(d.labels, Some(vec![3, 4]));
        assert_eq!(d.rows, vec![vec![0.5, 1.5], vec![1.0, 2.0]]);
        let d = parse_csv("0.5,1.5\n1,2\n").unwrap();
        assert_eq!(d.labels, None);
        assert_eq!(d.rows.len(), 2);
        let d = parse_csv("a,b\n1,2\n").unwrap();
        assert_eq!(d.labels, None);
        assert_eq!(d.rows, vec![vec![1.0, 2.0]]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("1,2,3\n1,2\n"),
            Err(ParseError::Ragged { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("label,a\n1,2\nx,3\n"),
            Err(ParseError::BadLabel { line: 3, .. })
        ));
        assert!(matches!(
            parse_csv("a,b\n1,zz\n"),
            Err(ParseError::NonNumeric { line: 2, .. })
        ));
        assert_eq!(parse_csv("a,b\n"), Err(ParseError::Empty));
        assert!(matches!(
            parse_csv("label\n1\n"),
            Err(ParseError::NoSamples { .. })
        ));
    }

    #[test]
    fn params_identity_rows() {
        let text = render_params_table(&[TransformParams::IDENTITY; 3]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(PARAMS_HEADER));
        for (i, line) in lines.enumerate() {
            let values: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(values, vec![i as f64, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert_eq!(
            params_columns().join(","),
            PARAMS_HEADER.trim_start_matches("curve_index,")
        );
    }

    #[test]
    fn params_table_errors() {
        assert_eq!(parse_params_table(""), Err(ParseError::Empty));
        assert!(parse_params_table("a,b\n").is_err());
        let bad_order = format!("{PARAMS_HEADER}\n1,1,0,0,0,0,0\n");
        assert!(matches!(
            parse_params_table(&bad_order),
            Err(ParseError::Malformed { line: 2, .. })
        ));
        let bad_alpha = format!("{PARAMS_HEADER}\n0,-1,0,0,0,0,0\n");
        assert!(parse_params_table(&bad_alpha).is_err());
        let short = format!("{PARAMS_HEADER}\n0,1,0,0\n");
        assert!(matches!(
            parse_params_table(&short),
            Err(ParseError::Ragged { .. })
        ));
    }

    #[test]
    fn ucr_requires_labels_to_write() {
        let data = DatasetFile {
            labels: None,
            rows: vec![vec![0.0; 4]; 2],
        };
        assert!(render_dataset(&data, DatasetFormat::Ucr).is_err());
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6f64..1e6,
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
        ]
    }

    proptest! {
        #[test]
        fn dataset_round_trip(
            rows in (4usize..12, 2usize..8).prop_flat_map(|(m, n)| {
                prop::collection::vec(prop::collection::vec(finite(), m), n)
            }),
            labeled in any::<bool>(),
            seed in any::<i64>(),
        ) {
            let n = rows.len();
            let labels = labeled.then(|| (0..n as i64).map(|i| seed.wrapping_add(i) % 1000).collect::<Vec<_>>());
            let data = DatasetFile { labels: labels.clone(), rows };
            for format in [DatasetFormat::Csv, DatasetFormat::Ucr] {
                if format == DatasetFormat::Ucr && labels.is_none() {
                    continue;
                }
                let text = render_dataset(&data, format).unwrap();
                let back = parse_dataset(&text, format).unwrap();
                prop_assert_eq!(&back, &data);
            }
        }

        #[test]
        fn params_round_trip(values in prop::collection::vec((0.01f64..100.0, finite(), prop::array::uniform4(finite())), 1..10)) {
            let params: Vec<TransformParams> = values
                .into_iter()
                .map(|(alpha, beta, w)| TransformParams {
                    alpha,
                    beta,
                    sin_weights: [w[0], w[2]],
                    cos_weights: [w[1], w[3]],
                })
                .collect();
            let back = parse_params_table(&render_params_table(&params)).unwrap();
            prop_assert_eq!(back, params);
        }
    }
}
