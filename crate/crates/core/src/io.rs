//! On-disk formats: the echogram bundle, numeric CSV matrices and text manifests.
//!
//! CSV dialect everywhere: comma separator, `.` decimal point, LF line
//! endings, no header on matrices. Numbers are written with 17 significant
//! digits so they parse back to the identical `f64`. A missing value is an
//! empty field.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::echogram::{Axes, EchogramCube, Layout};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta";

/// 17 significant digits, scientific notation.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a matrix; `NaN` entries become empty fields.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 24);
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(',');
            }
            let v = m[(r, c)];
            if !v.is_nan() {
                out.push_str(&format_f64(v));
            }
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a matrix. Empty fields become `NaN` when `allow_missing`, and are
/// an error otherwise.
pub fn read_matrix_csv(path: &Path, allow_missing: bool) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        let row = record
            .iter()
            .map(|field| {
                let field = field.trim();
                if field.is_empty() {
                    if allow_missing {
                        Ok(f64::NAN)
                    } else {
                        Err(Error::format(path, format!("empty field on line {}", line + 1)))
                    }
                } else {
                    field.parse::<f64>().map_err(|_| {
                        Error::format(path, format!("bad number `{field}` on line {}", line + 1))
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Writes a table with a header row.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Column vector written as a one-column CSV without header.
pub fn write_vector_csv(path: &Path, values: &[f64]) -> Result<()> {
    write_matrix_csv(path, &DMatrix::from_column_slice(values.len(), 1, values))
}

/// Frequency label used in file names: `38`, `120`, `37.5`.
pub fn freq_label(khz: f64) -> String {
    format!("{khz}")
}

pub fn day_file_name(khz: f64, day: NaiveDate) -> String {
    format!("f{}_d{}.csv", freq_label(khz), day.format("%Y-%m-%d"))
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(",")
}

/// Writes a cube as a bundle directory: `meta` plus one CSV per (frequency, day).
pub fn write_bundle(dir: &Path, cube: &EchogramCube) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut meta = String::new();
    let _ = writeln!(meta, "# echogram bundle");
    let _ = writeln!(meta, "depth_bin_m={}", cube.depth_bin_m());
    let _ = writeln!(meta, "time_bin_s={}", cube.time_bin_s());
    let _ = writeln!(meta, "n_depth={}", cube.n_depth());
    let _ = writeln!(meta, "n_ping={}", cube.n_ping());
    let _ = writeln!(meta, "n_freq={}", cube.n_freq());
    let _ = writeln!(meta, "n_day={}", cube.n_day());
    let _ = writeln!(meta, "freq_khz={}", join(cube.freq_axis(), |f| freq_label(*f)));
    let _ = writeln!(meta, "days={}", join(cube.day_axis(), |d| d.format("%Y-%m-%d").to_string()));
    let _ = writeln!(meta, "depth_axis={}", join(cube.depth_axis(), |v| format!("{v}")));
    let _ = writeln!(meta, "time_axis={}", join(cube.time_axis(), |v| format!("{v}")));
    write_text(&dir.join(META_FILE), &meta)?;

    for (day, date) in cube.day_axis().iter().enumerate() {
        for (f, khz) in cube.freq_axis().iter().enumerate() {
            let img = DMatrix::from_fn(cube.n_depth(), cube.n_ping(), |d, p| {
                cube.get(d, p, f, day).unwrap_or(f64::NAN)
            });
            write_matrix_csv(&dir.join(day_file_name(*khz, *date)), &img)?;
        }
    }
    Ok(())
}

/// Parsed `meta` file of a bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleMeta {
    pub axes: Axes,
}

impl BundleMeta {
    pub fn layout(&self) -> Layout {
        self.axes.layout()
    }
}

pub fn read_bundle_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut fields = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(&path, format!("expected key=value, got `{line}`")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |key: &str| {
        fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(&path, format!("missing key `{key}`")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .map_err(|_| Error::format(&path, format!("`{key}` is not a number")))
    };
    let count = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|_| Error::format(&path, format!("`{key}` is not a count")))
    };
    let list = |key: &str| -> Result<Vec<f64>> {
        let v = get(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format(&path, format!("bad entry `{s}` in `{key}`")))
            })
            .collect()
    };

    let depth_bin_m = num("depth_bin_m")?;
    let time_bin_s = num("time_bin_s")?;
    let freq_axis = list("freq_khz")?;
    let day_axis = get("days")?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|_| Error::format(&path, format!("bad date `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (n_depth, n_ping) = (count("n_depth")?, count("n_ping")?);
    // axes may be omitted; fall back to bin centers / bin starts from zero
    let depth_axis = match fields.get("depth_axis") {
        Some(_) => list("depth_axis")?,
        None => (0..n_depth).map(|i| (i as f64 + 0.5) * depth_bin_m).collect(),
    };
    let time_axis = match fields.get("time_axis") {
        Some(_) => list("time_axis")?,
        None => (0..n_ping).map(|i| i as f64 * time_bin_s).collect(),
    };

    let checks = [
        ("n_depth", n_depth, depth_axis.len()),
        ("n_ping", n_ping, time_axis.len()),
        ("n_freq", count("n_freq")?, freq_axis.len()),
        ("n_day", count("n_day")?, day_axis.len()),
    ];
    for (key, declared, actual) in checks {
        if declared != actual {
            return Err(Error::format(
                &path,
                format!("`{key}` = {declared} but the axis has {actual} entries"),
            ));
        }
    }
    Ok(BundleMeta {
        axes: Axes {
            depth_axis,
            depth_bin_m,
            time_axis,
            time_bin_s,
            freq_axis,
            day_axis,
        },
    })
}

pub fn read_bundle(dir: &Path) -> Result<EchogramCube> {
    let meta = read_bundle_meta(dir)?;
    let axes = meta.axes;
    let layout = axes.layout();
    let mut values = vec![f64::NAN; layout.len() * axes.day_axis.len()];
    for (day, date) in axes.day_axis.iter().enumerate() {
        for (f, khz) in axes.freq_axis.iter().enumerate() {
            let path = dir.join(day_file_name(*khz, *date));
            let img = read_matrix_csv(&path, true)?;
            if img.shape() != (layout.n_depth, layout.n_ping) {
                return Err(Error::format(
                    &path,
                    format!(
                        "image is {:?}, expected ({}, {})",
                        img.shape(),
                        layout.n_depth,
                        layout.n_ping
                    ),
                ));
            }
            for p in 0..layout.n_ping {
                for d in 0..layout.n_depth {
                    values[day * layout.len() + layout.index(d, p, f)] = img[(d, p)];
                }
            }
        }
    }
    EchogramCube::from_values(axes, values)
}

/// Ordered `key=value` text record of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.0, -0.0, 1.0 / 3.0, -72.59637310505756, 1e-300, 6.02e23, f64::MAX] {
            let s = format_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(format_f64(-3.0), "-3.0000000000000000e0");
    }

    #[test]
    fn matrix_csv_round_trip_with_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.5, f64::NAN, -2.0, 0.1, 0.2, 1e-17]);
        write_matrix_csv(&path, &m).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().next().unwrap().split(',').nth(1), Some(""));
        let back = read_matrix_csv(&path, true).unwrap();
        assert!(back[(0, 1)].is_nan());
        for (a, b) in m.iter().zip(back.iter()) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        assert!(read_matrix_csv(&path, false).is_err());
    }

    #[test]
    fn file_names() {
        let d = NaiveDate::from_ymd_opt(2015, 8, 17).unwrap();
        assert_eq!(day_file_name(38.0, d), "f38_d2015-08-17.csv");
        assert_eq!(day_file_name(37.5, d), "f37.5_d2015-08-17.csv");
    }

    #[test]
    fn manifest_overwrites_keys_in_place() {
        let mut m = Manifest::new();
        m.set("a", 1).set("b", "x").set("a", 2);
        assert_eq!(m.render(), "a=2\nb=x\n");
        assert_eq!(m.get("b"), Some("x"));
    }
}
