//! On-disk formats.
//!
//! A stack is a directory with three files:
//!
//! - `header.json`: `width`, `height`, `T`, `nd`, `ny`, `scale`,
//!   `fill_value`, `value_dtype` (`"f32le"`), `mask_dtype` (`"u8"`), `pad`;
//! - `values.bin`: `T·height·width` little-endian `f32`, `(t, row, col)`
//!   order with `t` slowest; physical value = stored × `scale`;
//! - `mask.bin`: one reliability byte per sample in the same order.
//!
//! `T` counts the stored steps. When it is not a multiple of `nd` the
//! loader appends NODATA steps to complete the last year and `pad` records
//! how many; the writer drops them again.
//!
//! A single series is a CSV file with header `t,value,ri`; the value may be
//! empty where `ri` marks the sample invalid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Reliability, Stack};

pub const HEADER_FILE: &str = "header.json";
pub const VALUES_FILE: &str = "values.bin";
pub const MASK_FILE: &str = "mask.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackHeader {
    pub width: usize,
    pub height: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub nd: usize,
    pub ny: usize,
    #[serde(default = "unit_scale")]
    pub scale: f64,
    pub fill_value: f64,
    pub value_dtype: String,
    pub mask_dtype: String,
    #[serde(default)]
    pub pad: usize,
}

fn unit_scale() -> f64 {
    1.0
}

impl StackHeader {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.t == 0 || self.nd == 0 {
            return Err(Error::param("header dimensions must be positive"));
        }
        if self.value_dtype != "f32le" || self.mask_dtype != "u8" {
            return Err(Error::param(format!(
                "unsupported dtypes {:?}/{:?} (expected \"f32le\"/\"u8\")",
                self.value_dtype, self.mask_dtype
            )));
        }
        if !(self.scale.is_finite() && self.scale != 0.0) {
            return Err(Error::param(format!("scale must be finite and non-zero, got {}", self.scale)));
        }
        let pad = (self.nd - self.t % self.nd) % self.nd;
        let ny = (self.t + pad) / self.nd;
        if self.ny != ny || (self.pad != 0 && self.pad != pad) {
            return Err(Error::shape(format!(
                "header T={} nd={} implies ny={ny} pad={pad}, found ny={} pad={}",
                self.t, self.nd, self.ny, self.pad
            )));
        }
        Ok(())
    }
}

fn check_len(path: &Path, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Corrupt {
            file: path.to_path_buf(),
            expected: expected as u64,
            actual: actual as u64,
        });
    }
    Ok(())
}

pub fn read_header(dir: &Path) -> Result<StackHeader> {
    let header: StackHeader = serde_json::from_slice(&fs::read(dir.join(HEADER_FILE))?)?;
    header.validate()?;
    Ok(header)
}

pub fn read_stack(dir: &Path) -> Result<Stack> {
    let header = read_header(dir)?;
    let n = header.t * header.height * header.width;

    let values_path = dir.join(VALUES_FILE);
    let raw = fs::read(&values_path)?;
    check_len(&values_path, 4 * n, raw.len())?;
    let values: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if header.scale == 1.0 { v } else { (v as f64 * header.scale) as f32 }
        })
        .collect();

    let mask_path = dir.join(MASK_FILE);
    let mask = fs::read(&mask_path)?;
    check_len(&mask_path, n, mask.len())?;
    let codes = mask
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            Reliability::try_from(b).map_err(|code| Error::InvalidCode {
                code,
                location: format!("{} byte offset {o}", mask_path.display()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Stack::new(header.height, header.width, header.nd, values, codes, header.fill_value as f32)
}

/// Writes `stack` without its padding, values divided by `scale`.
pub fn write_stack_scaled(stack: &Stack, dir: &Path, scale: f64) -> Result<()> {
    if !(scale.is_finite() && scale != 0.0) {
        return Err(Error::param(format!("scale must be finite and non-zero, got {scale}")));
    }
    fs::create_dir_all(dir)?;
    let header = StackHeader {
        width: stack.width(),
        height: stack.height(),
        t: stack.data_len(),
        nd: stack.nd(),
        ny: stack.ny(),
        scale,
        fill_value: stack.fill_value as f64,
        value_dtype: "f32le".into(),
        mask_dtype: "u8".into(),
        pad: stack.pad(),
    };
    let n = stack.data_len() * stack.pixels();
    let mut values = Vec::with_capacity(4 * n);
    for &v in &stack.values[..n] {
        let stored = if scale == 1.0 { v } else { (v as f64 / scale) as f32 };
        values.extend_from_slice(&stored.to_le_bytes());
    }
    let mask: Vec<u8> = stack.reliability[..n].iter().map(|c| c.code()).collect();
    fs::write(dir.join(VALUES_FILE), values)?;
    fs::write(dir.join(MASK_FILE), mask)?;
    fs::write(dir.join(HEADER_FILE), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn write_stack(stack: &Stack, dir: &Path) -> Result<()> {
    write_stack_scaled(stack, dir, 1.0)
}

/// A series as read from CSV: `None` marks a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRecord {
    pub t: Vec<i64>,
    pub values: Vec<Option<f64>>,
    pub reliability: Vec<Reliability>,
}

impl SeriesRecord {
    pub fn valid(&self) -> Vec<bool> {
        self.reliability.iter().map(|c| c.is_valid()).collect()
    }
}

#[derive(Deserialize)]
struct SeriesRow {
    t: i64,
    value: Option<f64>,
    ri: i64,
}

/// Reads a `t,value,ri` series. `ri` uses the same codes as the mask file,
/// with `-1` accepted for NODATA.
pub fn read_series_csv(path: &Path) -> Result<SeriesRecord> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "value", "ri"] {
        return Err(parse_err(1, format!("expected header t,value,ri, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = SeriesRecord { t: Vec::new(), values: Vec::new(), reliability: Vec::new() };
    for row in reader.deserialize::<SeriesRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = out.t.len() as u64 + 2;
        let code = match row.ri {
            -1 => Reliability::NoData,
            c @ 0..=255 => Reliability::try_from(c as u8)
                .map_err(|code| Error::InvalidCode { code, location: format!("{}:{line}", path.display()) })?,
            c => return Err(parse_err(line, format!("reliability code {c} out of range"))),
        };
        if let Some(&prev) = out.t.last() {
            if row.t <= prev {
                return Err(parse_err(line, format!("t={} does not follow t={prev}", row.t)));
            }
        }
        match row.value {
            Some(v) if !v.is_finite() => return Err(parse_err(line, format!("non-finite value {v}"))),
            None if code.is_valid() => {
                return Err(parse_err(line, format!("missing value for valid code {}", code.code())))
            }
            _ => {}
        }
        out.t.push(row.t);
        out.values.push(row.value);
        out.reliability.push(code);
    }
    if out.t.is_empty() {
        return Err(parse_err(2, "no samples".into()));
    }
    Ok(out)
}

/// Writes `t,value,ri` rows.
pub fn write_series_csv(path: &Path, t: &[i64], values: &[f64], reliability: &[Reliability]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "value", "ri"])?;
    for ((t, v), c) in t.iter().zip(values).zip(reliability) {
        w.write_record([t.to_string(), v.to_string(), c.code().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
