//! Versioned CSV and JSON artifacts. Floats use shortest round-trip
//! formatting so repeated runs produce byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::CliError;

pub const PROFILE_SCHEMA: &str = "# fwdim-profile v1";
pub const SURFACE_SCHEMA: &str = "# fwdim-surface v1";
pub const COMPARISON_SCHEMA: &str = "# fwdim-comparison v1";
pub const TRAINING_SCHEMA: &str = "# fwdim-training-log v1";

pub const PROFILE_HEADER: [&str; 3] = ["time", "im_mean", "im_stderr"];
pub const SURFACE_HEADER: [&str; 3] = ["path", "time", "im"];
pub const COMPARISON_HEADER: [&str; 4] = ["time", "im_oracle", "im_approx", "rel_err"];
pub const TRAINING_HEADER: [&str; 2] = ["epoch", "mse"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// One row of a profile CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub time: f64,
    pub im_mean: f64,
    pub im_stderr: f64,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `schema` as a comment line, then the header and rows.
pub fn write_csv(path: &Path, schema: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(schema.as_bytes());
    buf.push(b'\n');
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

/// Reads a CSV written by [`write_csv`], checking schema line and header.
pub fn read_csv(path: &Path, schema: &str, header: &[&str]) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    if first != schema {
        return Err(io_err(path, format!("expected schema line {schema:?}, found {first:?}")));
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    let got = r.headers().map_err(|e| io_err(path, e))?;
    if got.iter().ne(header.iter().copied()) {
        return Err(io_err(path, format!("expected columns {header:?}, found {got:?}")));
    }
    r.records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()).map_err(|e| io_err(path, e)))
        .collect()
}

fn parse_f64(path: &Path, s: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| io_err(path, format!("not a number: {s:?}")))
}

pub fn write_profile(path: &Path, rows: &[ProfileRow]) -> Result<(), CliError> {
    let rows: Vec<_> =
        rows.iter().map(|r| vec![fmt_f64(r.time), fmt_f64(r.im_mean), fmt_f64(r.im_stderr)]).collect();
    write_csv(path, PROFILE_SCHEMA, &PROFILE_HEADER, &rows)
}

pub fn read_profile(path: &Path) -> Result<Vec<ProfileRow>, CliError> {
    read_csv(path, PROFILE_SCHEMA, &PROFILE_HEADER)?
        .iter()
        .map(|r| {
            Ok(ProfileRow {
                time: parse_f64(path, &r[0])?,
                im_mean: parse_f64(path, &r[1])?,
                im_stderr: parse_f64(path, &r[2])?,
            })
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        let rows = vec![
            ProfileRow { time: 0.0, im_mean: 1.0 / 3.0, im_stderr: 0.0 },
            ProfileRow { time: 0.25, im_mean: 1e-300, im_stderr: 12345.678 },
        ];
        write_profile(&p, &rows).unwrap();
        assert_eq!(read_profile(&p).unwrap(), rows);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# fwdim-profile v1\ntime,im_mean,im_stderr\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn wrong_schema_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        write_csv(&p, SURFACE_SCHEMA, &SURFACE_HEADER, &[]).unwrap();
        assert_eq!(read_profile(&p).unwrap_err().exit_code(), 3);
    }
}
