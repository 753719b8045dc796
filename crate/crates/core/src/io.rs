//! File formats: snapshot CSV/binary, spectrum, modes, pseudospectrum and loss CSVs.

use std::fs;
use std::path::Path;

use faer::{c64, Mat, MatRef};

use crate::dynamics::SnapshotPairs;
use crate::edmd::Spectrum;
use crate::error::{KoopmanError, Result};
use crate::residual::PseudospectrumGrid;

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"KSNP1";

pub const SPECTRUM_HEADER: &str = "re_lambda,im_lambda,abs_lambda,residual";
pub const PSEUDOSPECTRUM_HEADER: &str = "re_z,im_z,tau,accepted";
pub const LOSS_HEADER: &str = "epoch,loss";

/// Shortest round-trip text for a float; scientific notation outside a
/// readable range.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn format_err(path: &str, line: usize, message: impl Into<String>) -> KoopmanError {
    KoopmanError::Format {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_field(path: &str, line: usize, field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| format_err(path, line, format!("not a number: {:?}", field.trim())))
}

fn read_text(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// Data lines with their 1-based line numbers, skipping blanks and `#` comments.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn check_header(path: &str, lines: &mut dyn Iterator<Item = (usize, &str)>, expected: &str) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l.trim() == expected => Ok(()),
        Some((n, l)) => Err(format_err(path, n, format!("expected header {expected:?}, found {l:?}"))),
        None => Err(format_err(path, 1, format!("missing header {expected:?}"))),
    }
}

// ---- snapshots ----

pub fn format_snapshots_csv(data: &SnapshotPairs) -> String {
    let (m, d) = (data.m(), data.d());
    let mut out = format!("# d={d},m={m}\n");
    for i in 0..m {
        let row: Vec<String> = (0..d)
            .map(|j| fmt_f64(data.x()[(i, j)]))
            .chain((0..d).map(|j| fmt_f64(data.y()[(i, j)])))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_snapshots_csv(text: &str, path: &str) -> Result<SnapshotPairs> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (d, m) = match lines.next() {
        Some((_, first)) => parse_snapshot_header(first).ok_or_else(|| {
            format_err(path, 1, format!("expected header \"# d=<dim>,m=<count>\", found {first:?}"))
        })?,
        None => return Err(format_err(path, 1, "empty snapshot file")),
    };
    let mut xs = Vec::with_capacity(m * d);
    let mut ys = Vec::with_capacity(m * d);
    let mut rows = 0;
    let mut last_line = 1;
    for (n, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        last_line = n;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 * d {
            return Err(format_err(path, n, format!("expected {} fields, found {}", 2 * d, fields.len())));
        }
        for (k, f) in fields.iter().enumerate() {
            let v = parse_field(path, n, f)?;
            if k < d {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
        rows += 1;
    }
    if rows != m {
        return Err(format_err(path, last_line, format!("header declares m={m} rows, found {rows}")));
    }
    SnapshotPairs::new(
        crate::linalg::from_row_major(&xs, m, d),
        crate::linalg::from_row_major(&ys, m, d),
    )
    .map_err(|e| format_err(path, 1, e.to_string()))
}

fn parse_snapshot_header(line: &str) -> Option<(usize, usize)> {
    let body = line.trim().strip_prefix('#')?.trim();
    let mut d = None;
    let mut m = None;
    for part in body.split(',') {
        let (key, value) = part.split_once('=')?;
        match key.trim() {
            "d" => d = value.trim().parse().ok(),
            "m" => m = value.trim().parse().ok(),
            _ => return None,
        }
    }
    Some((d?, m?))
}

pub fn encode_snapshots_binary(data: &SnapshotPairs) -> Vec<u8> {
    let (m, d) = (data.m(), data.d());
    let mut out = Vec::with_capacity(21 + 16 * m * d);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for mat in [data.x(), data.y()] {
        for i in 0..m {
            for j in 0..d {
                out.extend_from_slice(&mat[(i, j)].to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_snapshots_binary(bytes: &[u8], path: &str) -> Result<SnapshotPairs> {
    let bad = |msg: &str| format_err(path, 0, msg.to_string());
    if bytes.len() < 21 || &bytes[..5] != SNAPSHOT_MAGIC {
        return Err(bad("missing KSNP1 magic"));
    }
    let m = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(bytes[13..21].try_into().unwrap()) as usize;
    let expected = m
        .checked_mul(d)
        .and_then(|n| n.checked_mul(16))
        .and_then(|n| n.checked_add(21))
        .ok_or_else(|| bad("declared size overflows"))?;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes for m={m}, d={d}, found {}", bytes.len())));
    }
    let values: Vec<f64> = bytes[21..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (xs, ys) = values.split_at(m * d);
    SnapshotPairs::new(
        crate::linalg::from_row_major(xs, m, d),
        crate::linalg::from_row_major(ys, m, d),
    )
    .map_err(|e| bad(&e.to_string()))
}

pub fn write_snapshots(path: &Path, data: &SnapshotPairs, binary: bool) -> Result<()> {
    if binary {
        fs::write(path, encode_snapshots_binary(data))?;
    } else {
        fs::write(path, format_snapshots_csv(data))?;
    }
    Ok(())
}

/// Reads either snapshot format, detected by the magic bytes.
pub fn read_snapshots(path: &Path) -> Result<SnapshotPairs> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(SNAPSHOT_MAGIC) {
        decode_snapshots_binary(&bytes, &label(path))
    } else {
        let text = String::from_utf8(bytes).map_err(|_| format_err(&label(path), 0, "not UTF-8 text"))?;
        parse_snapshots_csv(&text, &label(path))
    }
}

// ---- spectrum ----

/// One row of a spectrum CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumRow {
    pub lambda: c64,
    pub residual: Option<f64>,
}

/// Spectrum CSV; `comments` become leading `#` lines.
pub fn format_spectrum_csv(spectrum: &Spectrum, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for p in &spectrum.pairs {
        let res = p.residual.map(fmt_f64).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(p.lambda.re),
            fmt_f64(p.lambda.im),
            fmt_f64(p.lambda.norm()),
            res
        ));
    }
    out
}

pub fn parse_spectrum_csv(text: &str, path: &str) -> Result<Vec<SpectrumRow>> {
    let mut lines = data_lines(text);
    check_header(path, &mut lines, SPECTRUM_HEADER)?;
    lines
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format_err(path, n, format!("expected 4 fields, found {}", f.len())));
            }
            let residual = if f[3].trim().is_empty() {
                None
            } else {
                Some(parse_field(path, n, f[3])?)
            };
            Ok(SpectrumRow {
                lambda: c64::new(parse_field(path, n, f[0])?, parse_field(path, n, f[1])?),
                residual,
            })
        })
        .collect()
}

pub fn write_spectrum(path: &Path, spectrum: &Spectrum, comments: &[String]) -> Result<()> {
    Ok(fs::write(path, format_spectrum_csv(spectrum, comments))?)
}

pub fn read_spectrum(path: &Path) -> Result<Vec<SpectrumRow>> {
    parse_spectrum_csv(&read_text(path)?, &label(path))
}

// ---- modes ----

pub fn format_modes_csv(modes: MatRef<'_, c64>) -> String {
    let d = modes.ncols();
    let header: Vec<String> = (1..=d).flat_map(|j| [format!("re_m_{j}"), format!("im_m_{j}")]).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..modes.nrows() {
        let row: Vec<String> = (0..d)
            .flat_map(|j| [fmt_f64(modes[(i, j)].re), fmt_f64(modes[(i, j)].im)])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_modes_csv(text: &str, path: &str) -> Result<Mat<c64>> {
    let mut lines = data_lines(text);
    let (hn, header) = lines.next().ok_or_else(|| format_err(path, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len() / 2;
    let valid = cols.len().is_multiple_of(2)
        && d > 0
        && (0..d).all(|j| cols[2 * j] == format!("re_m_{}", j + 1) && cols[2 * j + 1] == format!("im_m_{}", j + 1));
    if !valid {
        return Err(format_err(path, hn, format!("malformed modes header {header:?}")));
    }
    let mut rows: Vec<Vec<c64>> = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 * d {
            return Err(format_err(path, n, format!("expected {} fields, found {}", 2 * d, f.len())));
        }
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            row.push(c64::new(parse_field(path, n, f[2 * j])?, parse_field(path, n, f[2 * j + 1])?));
        }
        rows.push(row);
    }
    Ok(Mat::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub fn write_modes(path: &Path, modes: MatRef<'_, c64>) -> Result<()> {
    Ok(fs::write(path, format_modes_csv(modes))?)
}

pub fn read_modes(path: &Path) -> Result<Mat<c64>> {
    parse_modes_csv(&read_text(path)?, &label(path))
}

// ---- pseudospectrum ----

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudospectrumRow {
    pub z: c64,
    pub tau: f64,
    pub accepted: bool,
}

pub fn format_pseudospectrum_csv(grid: &PseudospectrumGrid) -> String {
    let mut out = format!("# epsilon={}\n{PSEUDOSPECTRUM_HEADER}\n", fmt_f64(grid.epsilon));
    for ((z, tau), acc) in grid.points.iter().zip(&grid.tau).zip(&grid.accepted) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(z.re),
            fmt_f64(z.im),
            fmt_f64(*tau),
            u8::from(*acc)
        ));
    }
    out
}

pub fn parse_pseudospectrum_csv(text: &str, path: &str) -> Result<Vec<PseudospectrumRow>> {
    let mut lines = data_lines(text);
    check_header(path, &mut lines, PSEUDOSPECTRUM_HEADER)?;
    lines
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(format_err(path, n, format!("expected 4 fields, found {}", f.len())));
            }
            let accepted = match f[3].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(format_err(path, n, format!("accepted must be 0 or 1, found {other:?}"))),
            };
            Ok(PseudospectrumRow {
                z: c64::new(parse_field(path, n, f[0])?, parse_field(path, n, f[1])?),
                tau: parse_field(path, n, f[2])?,
                accepted,
            })
        })
        .collect()
}

pub fn write_pseudospectrum(path: &Path, grid: &PseudospectrumGrid) -> Result<()> {
    Ok(fs::write(path, format_pseudospectrum_csv(grid))?)
}

pub fn read_pseudospectrum(path: &Path) -> Result<Vec<PseudospectrumRow>> {
    parse_pseudospectrum_csv(&read_text(path)?, &label(path))
}

// ---- loss history ----

pub fn format_loss_csv(history: &[(usize, f64)]) -> String {
    let mut out = format!("{LOSS_HEADER}\n");
    for (epoch, loss) in history {
        out.push_str(&format!("{epoch},{}\n", fmt_f64(*loss)));
    }
    out
}

pub fn write_loss(path: &Path, history: &[(usize, f64)]) -> Result<()> {
    Ok(fs::write(path, format_loss_csv(history))?)
}

// ---- generic numeric tables ----

/// A numeric CSV table with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: Mat<f64>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.as_ref()?.iter().position(|h| h == name)
    }
}

/// Parses a rectangular numeric CSV. A first data line that does not parse
/// as numbers is taken as the header.
pub fn parse_table_csv(text: &str, path: &str) -> Result<Table> {
    let mut lines = data_lines(text).peekable();
    let mut header = None;
    if let Some(&(_, first)) = lines.peek() {
        if first.split(',').any(|f| f.trim().parse::<f64>().is_err()) {
            header = Some(first.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>());
            lines.next();
        }
    }
    let mut width = header.as_ref().map(Vec::len);
    let mut values = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        match width {
            Some(w) if w != fields.len() => {
                return Err(format_err(path, n, format!("expected {w} fields, found {}", fields.len())))
            }
            None => width = Some(fields.len()),
            _ => {}
        }
        for f in fields {
            values.push(parse_field(path, n, f)?);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    Ok(Table {
        header,
        data: crate::linalg::from_row_major(&values, rows, cols),
    })
}

pub fn read_table(path: &Path) -> Result<Table> {
    parse_table_csv(&read_text(path)?, &label(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edmd::EigenPair;
    use proptest::prelude::*;

    fn pairs() -> SnapshotPairs {
        let x = crate::linalg::from_row_major(&[0.1, -2.5, 1e-20, 3.0], 2, 2);
        let y = crate::linalg::from_row_major(&[1.0 / 3.0, 7e300, -0.0, 42.0], 2, 2);
        SnapshotPairs::new(x, y).unwrap()
    }

    #[test]
    fn snapshot_csv_round_trip() {
        let text = format_snapshots_csv(&pairs());
        assert!(text.starts_with("# d=2,m=2\n"));
        assert!(!text.contains('\r'));
        let back = parse_snapshots_csv(&text, "mem").unwrap();
        assert_eq!(back.x(), pairs().x());
        assert_eq!(back.y(), pairs().y());
    }

    #[test]
    fn snapshot_binary_layout() {
        let bytes = encode_snapshots_binary(&pairs());
        assert_eq!(&bytes[..5], b"KSNP1");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[21..29].try_into().unwrap()), 0.1);
        // X row-major: second value is X[0,1]
        assert_eq!(f64::from_le_bytes(bytes[29..37].try_into().unwrap()), -2.5);
        assert_eq!(f64::from_le_bytes(bytes[53..61].try_into().unwrap()), 1.0 / 3.0);
        let back = decode_snapshots_binary(&bytes, "mem").unwrap();
        assert_eq!(back.y(), pairs().y());
        assert!(decode_snapshots_binary(&bytes[..40], "mem").is_err());
    }

    #[test]
    fn snapshot_errors_carry_line() {
        let err = parse_snapshots_csv("# d=1,m=2\n1,2\n3,x\n", "data.csv").unwrap_err();
        match err {
            KoopmanError::Format { path, line, .. } => {
                assert_eq!(path, "data.csv");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_snapshots_csv("d=1,m=1\n1,2\n", "f").is_err());
        assert!(parse_snapshots_csv("# d=1,m=2\n1,2\n", "f").is_err());
        assert!(parse_snapshots_csv("# d=2,m=1\n1,2,3\n", "f").is_err());
    }

    #[test]
    fn spectrum_round_trip() {
        let spec = Spectrum {
            pairs: vec![
                EigenPair {
                    lambda: c64::new(0.9, 0.1),
                    vector: vec![],
                    residual: Some(1e-9),
                },
                EigenPair {
                    lambda: c64::new(0.5, 0.0),
                    vector: vec![],
                    residual: None,
                },
            ],
            n_k: 0,
        };
        let text = format_spectrum_csv(&spec, &["delay=3".to_string()]);
        assert!(text.starts_with("# delay=3\nre_lambda,im_lambda,abs_lambda,residual\n"));
        let rows = parse_spectrum_csv(&text, "s").unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].lambda, c64::new(0.9, 0.1));
        assert_eq!(rows[0].residual, Some(1e-9));
        assert_eq!(rows[1].residual, None);
        assert!(parse_spectrum_csv("re,im\n", "s").is_err());
    }

    #[test]
    fn modes_round_trip() {
        let m = Mat::from_fn(3, 2, |i, j| c64::new(i as f64 - 0.5, j as f64 * 0.25));
        let text = format_modes_csv(m.as_ref());
        assert!(text.starts_with("re_m_1,im_m_1,re_m_2,im_m_2\n"));
        assert_eq!(parse_modes_csv(&text, "m").unwrap(), m);
        assert!(parse_modes_csv("re_m_1,im_m_2\n", "m").is_err());
    }

    #[test]
    fn pseudospectrum_round_trip() {
        let grid = PseudospectrumGrid {
            points: vec![c64::new(0.9, 0.0), c64::new(2.0, -1.0)],
            tau: vec![1e-12, 1.5],
            epsilon: 0.1,
            accepted: vec![true, false],
        };
        let rows = parse_pseudospectrum_csv(&format_pseudospectrum_csv(&grid), "p").unwrap();
        assert_eq!(rows[0].z, c64::new(0.9, 0.0));
        assert!(rows[0].accepted && !rows[1].accepted);
        assert_eq!(rows[1].tau, 1.5);
        let err = parse_pseudospectrum_csv("re_z,im_z,tau,accepted\n1,2,3,maybe\n", "p").unwrap_err();
        assert!(err.to_string().starts_with("p:2:"));
    }

    #[test]
    fn tables_with_and_without_header() {
        let t = parse_table_csv("# note\na,b,label\n1,2,0\n3,4,1\n", "t").unwrap();
        assert_eq!(t.header.as_ref().unwrap().len(), 3);
        assert_eq!(t.column_index("label"), Some(2));
        assert_eq!(t.data.nrows(), 2);
        let t = parse_table_csv("1,2\n3,4\n", "t").unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.data[(1, 0)], 3.0);
        assert!(parse_table_csv("1,2\n3\n", "t").is_err());
    }

    #[test]
    fn loss_csv_layout() {
        assert_eq!(format_loss_csv(&[(0, 1.0), (1, 0.5)]), "epoch,loss\n0,1\n1,0.5\n");
    }

    proptest! {
        #[test]
        fn float_text_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
