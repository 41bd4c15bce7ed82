//! CSV and JSON readers and writers.
//!
//! CSV files carry a header row and a fixed column order; floats are written
//! in scientific notation with 17 significant digits so they round-trip
//! exactly.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{Read, Write};

use crate::diffusion::DepthBroadeningPoint;
use crate::error::{Error, Result};
use crate::spectral::{Spectrum, TimeSeries};

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    if e.is_io_error() {
        Error::Io(e.to_string())
    } else {
        Error::Parse(e.to_string())
    }
}

fn parse_field(raw: &str, line: u64, column: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| {
            Error::Parse(format!(
                "line {line}: column {column}: not a finite number: {raw:?}"
            ))
        })
}

/// Writes equal-length columns under a header row.
pub fn write_columns<W: Write>(out: W, headers: &[&str], columns: &[&[f64]]) -> Result<()> {
    let n = columns.first().map_or(0, |c| c.len());
    if headers.len() != columns.len() || columns.iter().any(|c| c.len() != n) {
        return Err(Error::Domain(
            "CSV columns must match headers and share a length".into(),
        ));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers).map_err(csv_error)?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| fmt_f64(c[i])))
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a header row plus numeric rows; returns the header and the columns.
pub fn read_columns<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse("missing CSV header row".into()));
    }
    let mut columns = vec![Vec::new(); headers.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, got {}",
                headers.len(),
                rec.len()
            )));
        }
        for (col, (raw, name)) in columns.iter_mut().zip(rec.iter().zip(&headers)) {
            col.push(parse_field(raw, line, name)?);
        }
    }
    Ok((headers, columns))
}

/// Time series CSV: `t_us` followed by one value column of any name.
pub fn read_timeseries_csv<R: Read>(input: R) -> Result<TimeSeries> {
    let (headers, mut cols) = read_columns(input)?;
    if headers.len() != 2 || headers[0] != "t_us" {
        return Err(Error::Parse(format!(
            "time series needs columns t_us,<value>; got {}",
            headers.join(",")
        )));
    }
    let values = cols.pop().unwrap();
    let t = cols.pop().unwrap();
    TimeSeries::new(t, values).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_timeseries_csv<W: Write>(out: W, ts: &TimeSeries, value_column: &str) -> Result<()> {
    write_columns(out, &["t_us", value_column], &[&ts.t_us, &ts.values])
}

pub fn write_spectrum_csv<W: Write>(out: W, spec: &Spectrum) -> Result<()> {
    write_columns(out, &["f_hz", "power"], &[&spec.f_hz, &spec.power])
}

pub fn read_spectrum_csv<R: Read>(input: R) -> Result<Spectrum> {
    let (headers, mut cols) = read_columns(input)?;
    if headers != ["f_hz", "power"] {
        return Err(Error::Parse(format!(
            "spectrum needs columns f_hz,power; got {}",
            headers.join(",")
        )));
    }
    let power = cols.pop().unwrap();
    let f = cols.pop().unwrap();
    Spectrum::new(f, power).map_err(|e| Error::Parse(e.to_string()))
}

/// Depth series CSV: `depth_nm,broadening_hz[,broadening_err_hz]`. An empty
/// error cell means no error bar for that row.
pub fn read_depth_csv<R: Read>(input: R) -> Result<Vec<DepthBroadeningPoint>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(String::from)
        .collect();
    let with_err = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["depth_nm", "broadening_hz"] => false,
        ["depth_nm", "broadening_hz", "broadening_err_hz"] => true,
        _ => {
            return Err(Error::Parse(format!(
                "depth series needs columns depth_nm,broadening_hz[,broadening_err_hz]; got {}",
                headers.join(",")
            )))
        }
    };
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} fields, got {}",
                headers.len(),
                rec.len()
            )));
        }
        let depth_nm = parse_field(&rec[0], line, "depth_nm")?;
        let broadening_hz = parse_field(&rec[1], line, "broadening_hz")?;
        let broadening_err_hz = match with_err {
            true if !rec[2].is_empty() => Some(parse_field(&rec[2], line, "broadening_err_hz")?),
            _ => None,
        };
        points.push(DepthBroadeningPoint {
            depth_nm,
            broadening_hz,
            broadening_err_hz,
        });
    }
    if points.is_empty() {
        return Err(Error::Parse("depth series has no rows".into()));
    }
    Ok(points)
}

pub fn write_depth_csv<W: Write>(out: W, points: &[DepthBroadeningPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["depth_nm", "broadening_hz", "broadening_err_hz"])
        .map_err(csv_error)?;
    for p in points {
        let err = p.broadening_err_hz.map(fmt_f64).unwrap_or_default();
        w.write_record([fmt_f64(p.depth_nm), fmt_f64(p.broadening_hz), err])
            .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Deserializes any config type from JSON bytes.
pub fn from_json<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}
