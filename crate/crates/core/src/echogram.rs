//! Binned multi-frequency echograms and their restructuring into a data matrix.
//!
//! A cube holds one `n_depth × n_ping` image per (frequency, day). Flattening
//! turns each day into one column of length `n_depth · n_ping · n_freq`, with
//! depth varying fastest, then ping, then frequency (see [`Layout::index`]).

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;
const SPACING_TOL: f64 = 1e-9;

/// Feature ordering of one flattened day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Layout {
    pub n_depth: usize,
    pub n_ping: usize,
    pub n_freq: usize,
}

impl Layout {
    pub fn new(n_depth: usize, n_ping: usize, n_freq: usize) -> Self {
        Layout {
            n_depth,
            n_ping,
            n_freq,
        }
    }

    /// Number of features `D` in a flattened column.
    pub fn len(&self) -> usize {
        self.n_depth * self.n_ping * self.n_freq
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row of the data matrix holding `(depth, ping, freq)`.
    #[inline]
    pub fn index(&self, depth: usize, ping: usize, freq: usize) -> usize {
        (freq * self.n_ping + ping) * self.n_depth + depth
    }
}

/// Binned backscatter, `depth × within-day time × frequency × day`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchogramCube {
    values: Vec<f64>,
    missing: Vec<bool>,
    depth_axis: Vec<f64>,
    depth_bin_m: f64,
    time_axis: Vec<f64>,
    time_bin_s: f64,
    freq_axis: Vec<f64>,
    day_axis: Vec<NaiveDate>,
}

/// Axis metadata of a cube, without the cell values.
#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub depth_axis: Vec<f64>,
    pub depth_bin_m: f64,
    pub time_axis: Vec<f64>,
    pub time_bin_s: f64,
    pub freq_axis: Vec<f64>,
    pub day_axis: Vec<NaiveDate>,
}

impl Axes {
    pub fn layout(&self) -> Layout {
        Layout::new(
            self.depth_axis.len(),
            self.time_axis.len(),
            self.freq_axis.len(),
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.depth_bin_m > 0.0) || !(self.time_bin_s > 0.0) {
            return Err(Error::Parameter("bin sizes must be positive".into()));
        }
        for w in self.depth_axis.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Coordinate("depth axis not strictly increasing".into()));
            }
            if ((w[1] - w[0]) - self.depth_bin_m).abs() > SPACING_TOL * self.depth_bin_m.max(1.0)
            {
                return Err(Error::Coordinate(format!(
                    "depth spacing {} differs from bin size {}",
                    w[1] - w[0],
                    self.depth_bin_m
                )));
            }
        }
        for w in self.time_axis.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Coordinate("time axis not strictly increasing".into()));
            }
        }
        for w in self.day_axis.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Coordinate("day axis not strictly increasing".into()));
            }
        }
        Ok(())
    }
}

impl EchogramCube {
    /// Builds a cube from values in storage order (see [`EchogramCube::offset`]).
    /// Missing cells are given by `NaN` in `values`.
    pub fn from_values(axes: Axes, values: Vec<f64>) -> Result<Self> {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Self::new(axes, values, missing)
    }

    pub fn new(axes: Axes, mut values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        axes.validate()?;
        let expected = axes.layout().len() * axes.day_axis.len();
        if values.len() != expected || missing.len() != expected {
            return Err(Error::Layout(format!(
                "expected {expected} cells, got {} values and {} flags",
                values.len(),
                missing.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::Domain("non-missing cell is not finite".into()));
            }
        }
        Ok(EchogramCube {
            values,
            missing,
            depth_axis: axes.depth_axis,
            depth_bin_m: axes.depth_bin_m,
            time_axis: axes.time_axis,
            time_bin_s: axes.time_bin_s,
            freq_axis: axes.freq_axis,
            day_axis: axes.day_axis,
        })
    }

    pub fn axes(&self) -> Axes {
        Axes {
            depth_axis: self.depth_axis.clone(),
            depth_bin_m: self.depth_bin_m,
            time_axis: self.time_axis.clone(),
            time_bin_s: self.time_bin_s,
            freq_axis: self.freq_axis.clone(),
            day_axis: self.day_axis.clone(),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.n_depth(), self.n_ping(), self.n_freq())
    }

    pub fn n_depth(&self) -> usize {
        self.depth_axis.len()
    }
    pub fn n_ping(&self) -> usize {
        self.time_axis.len()
    }
    pub fn n_freq(&self) -> usize {
        self.freq_axis.len()
    }
    pub fn n_day(&self) -> usize {
        self.day_axis.len()
    }
    pub fn depth_axis(&self) -> &[f64] {
        &self.depth_axis
    }
    pub fn depth_bin_m(&self) -> f64 {
        self.depth_bin_m
    }
    pub fn time_axis(&self) -> &[f64] {
        &self.time_axis
    }
    pub fn time_bin_s(&self) -> f64 {
        self.time_bin_s
    }
    pub fn freq_axis(&self) -> &[f64] {
        &self.freq_axis
    }
    pub fn day_axis(&self) -> &[NaiveDate] {
        &self.day_axis
    }

    /// Storage offset of a cell. Days are contiguous blocks laid out exactly
    /// like a flattened column.
    #[inline]
    pub fn offset(&self, depth: usize, ping: usize, freq: usize, day: usize) -> usize {
        day * self.layout().len() + self.layout().index(depth, ping, freq)
    }

    /// Value of a cell, `None` when missing.
    pub fn get(&self, depth: usize, ping: usize, freq: usize, day: usize) -> Option<f64> {
        let i = self.offset(depth, ping, freq, day);
        (!self.missing[i]).then(|| self.values[i])
    }

    pub fn is_missing(&self, depth: usize, ping: usize, freq: usize, day: usize) -> bool {
        self.missing[self.offset(depth, ping, freq, day)]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    /// Raw cell values in storage order; missing cells read as `NaN`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    /// The block of one day, in flattened-column order.
    pub fn day_values(&self, day: usize) -> &[f64] {
        let d = self.layout().len();
        &self.values[day * d..(day + 1) * d]
    }
}

/// Calibrated per-sample volume backscattering strength, in dB.
///
/// `sv_db` is indexed `(freq * n_ping + ping) * n_range + range`. Non-finite
/// samples are treated as absent.
#[derive(Debug, Clone)]
pub struct SvGrid {
    pub freq_khz: Vec<f64>,
    pub range_m: Vec<f64>,
    pub ping_time: Vec<NaiveDateTime>,
    pub sv_db: Vec<f64>,
}

/// Averages `Sv` samples over non-overlapping depth × time bins.
///
/// Averaging happens in the linear domain, and the result is converted back
/// to dB. Time bins are anchored at midnight UTC; a time bin that holds no
/// sample on any day, depth or frequency is dropped from the time axis, so a
/// duty-cycled sounder yields only its active bins. Cells of the remaining
/// grid with no samples are flagged missing.
pub fn bin_mvbs(samples: &SvGrid, depth_bin_m: f64, time_bin_s: f64) -> Result<EchogramCube> {
    if !(depth_bin_m > 0.0) || !(time_bin_s > 0.0) {
        return Err(Error::Parameter("bin sizes must be positive".into()));
    }
    let n_range = samples.range_m.len();
    let n_ping = samples.ping_time.len();
    let n_freq = samples.freq_khz.len();
    if n_range == 0 || n_ping == 0 || n_freq == 0 {
        return Err(Error::Parameter("empty sample grid".into()));
    }
    if samples.sv_db.len() != n_range * n_ping * n_freq {
        return Err(Error::Layout(format!(
            "sv grid has {} samples, expected {}",
            samples.sv_db.len(),
            n_range * n_ping * n_freq
        )));
    }
    if samples.range_m.iter().any(|r| !r.is_finite())
        || samples.range_m.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(Error::Coordinate("sample ranges not strictly increasing".into()));
    }
    if samples.ping_time.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Coordinate("ping times not strictly increasing".into()));
    }

    let origin = (samples.range_m[0] / depth_bin_m).floor() * depth_bin_m;
    let depth_bin_of = |r: f64| ((r - origin) / depth_bin_m).floor() as usize;
    let n_depth = depth_bin_of(samples.range_m[n_range - 1]) + 1;
    let bins_per_day = (SECONDS_PER_DAY / time_bin_s).ceil() as usize;

    let first_day = samples.ping_time[0].date();
    let last_day = samples.ping_time[n_ping - 1].date();
    let n_day = (last_day - first_day).num_days() as usize + 1;
    let day_axis: Vec<NaiveDate> = first_day.iter_days().take(n_day).collect();

    // cell -> collected linear samples; summed after sorting so the result
    // does not depend on sample order
    let full = Layout::new(n_depth, bins_per_day, n_freq);
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); full.len() * n_day];
    for (p, t) in samples.ping_time.iter().enumerate() {
        let day = (t.date() - first_day).num_days() as usize;
        let secs = t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9;
        let tbin = ((secs / time_bin_s).floor() as usize).min(bins_per_day - 1);
        for f in 0..n_freq {
            for (r, &range) in samples.range_m.iter().enumerate() {
                let sv = samples.sv_db[(f * n_ping + p) * n_range + r];
                if !sv.is_finite() {
                    continue;
                }
                let cell = day * full.len() + full.index(depth_bin_of(range), tbin, f);
                cells[cell].push(10f64.powf(sv / 10.0));
            }
        }
    }

    let occupied: Vec<usize> = (0..bins_per_day)
        .filter(|&tb| {
            (0..n_day).any(|day| {
                (0..n_freq).any(|f| {
                    (0..n_depth).any(|d| !cells[day * full.len() + full.index(d, tb, f)].is_empty())
                })
            })
        })
        .collect();

    let layout = Layout::new(n_depth, occupied.len(), n_freq);
    let mut values = vec![f64::NAN; layout.len() * n_day];
    let mut missing = vec![true; layout.len() * n_day];
    for day in 0..n_day {
        for f in 0..n_freq {
            for (p, &tb) in occupied.iter().enumerate() {
                for d in 0..n_depth {
                    let cell = &mut cells[day * full.len() + full.index(d, tb, f)];
                    if cell.is_empty() {
                        continue;
                    }
                    cell.sort_by(f64::total_cmp);
                    let mean = cell.iter().sum::<f64>() / cell.len() as f64;
                    let out = day * layout.len() + layout.index(d, p, f);
                    values[out] = 10.0 * mean.log10();
                    missing[out] = false;
                }
            }
        }
    }

    let axes = Axes {
        depth_axis: (0..n_depth)
            .map(|i| origin + (i as f64 + 0.5) * depth_bin_m)
            .collect(),
        depth_bin_m,
        time_axis: occupied.iter().map(|&tb| tb as f64 * time_bin_s).collect(),
        time_bin_s,
        freq_axis: samples.freq_khz.clone(),
        day_axis,
    };
    EchogramCube::new(axes, values, missing)
}

/// How [`fill_missing`] treats missing cells.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FillPolicy {
    /// Refuse to proceed if anything is missing.
    #[default]
    Fail,
    /// Mean of the same pixel over the days where it is present.
    ColumnMean,
    Constant(f64),
}

impl std::str::FromStr for FillPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fail" => Ok(FillPolicy::Fail),
            "column-mean" => Ok(FillPolicy::ColumnMean),
            _ => s
                .strip_prefix("constant(")
                .and_then(|r| r.strip_suffix(')'))
                .or_else(|| s.strip_prefix("constant:"))
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .map(FillPolicy::Constant)
                .ok_or_else(|| Error::Parameter(format!("unknown fill policy `{s}`"))),
        }
    }
}

impl TryFrom<String> for FillPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FillPolicy> for String {
    fn from(p: FillPolicy) -> String {
        p.to_string()
    }
}

impl std::fmt::Display for FillPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FillPolicy::Fail => write!(f, "fail"),
            FillPolicy::ColumnMean => write!(f, "column-mean"),
            FillPolicy::Constant(v) => write!(f, "constant({v:?})"),
        }
    }
}

pub fn fill_missing(cube: &EchogramCube, policy: FillPolicy) -> Result<EchogramCube> {
    let n_missing = cube.missing_count();
    if n_missing == 0 {
        return Ok(cube.clone());
    }
    let d = cube.layout().len();
    let mut values = cube.values.clone();
    match policy {
        FillPolicy::Fail => {
            return Err(Error::IncompleteData(format!("{n_missing} missing cells")));
        }
        FillPolicy::Constant(v) => {
            for (x, &m) in values.iter_mut().zip(&cube.missing) {
                if m {
                    *x = v;
                }
            }
        }
        FillPolicy::ColumnMean => {
            for pixel in 0..d {
                let present: Vec<f64> = (0..cube.n_day())
                    .filter(|&day| !cube.missing[day * d + pixel])
                    .map(|day| cube.values[day * d + pixel])
                    .collect();
                if present.len() == cube.n_day() {
                    continue;
                }
                if present.is_empty() {
                    return Err(Error::Unfillable(format!(
                        "pixel {pixel} is missing on every day"
                    )));
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                for day in 0..cube.n_day() {
                    if cube.missing[day * d + pixel] {
                        values[day * d + pixel] = mean;
                    }
                }
            }
        }
    }
    EchogramCube::new(cube.axes(), values, vec![false; cube.values.len()])
}

/// `D × T` matrix of flattened days.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub values: DMatrix<f64>,
    pub layout: Layout,
    pub day_axis: Vec<NaiveDate>,
    /// Amount subtracted by [`shift_nonnegative`]; add back to reconstruct.
    pub offset: f64,
    /// Original values for the entries where `value + offset` rounds away
    /// from the input, so [`DataMatrix::restored`] is exact.
    exact: Vec<(usize, f64)>,
}

impl DataMatrix {
    /// Wraps a bare matrix as a single-frequency, single-ping layout.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let layout = Layout::new(values.nrows(), 1, 1);
        DataMatrix {
            values,
            layout,
            day_axis: Vec::new(),
            offset: 0.0,
            exact: Vec::new(),
        }
    }

    /// Same layout, days and offset around new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Self {
        DataMatrix {
            values,
            layout: self.layout,
            day_axis: self.day_axis.clone(),
            offset: self.offset,
            exact: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Values in the original units, i.e. with the offset added back.
    pub fn restored(&self) -> DMatrix<f64> {
        let mut out = self.values.add_scalar(self.offset);
        for &(i, v) in &self.exact {
            out[i] = v;
        }
        out
    }
}

pub fn flatten(cube: &EchogramCube) -> Result<DataMatrix> {
    let n_missing = cube.missing_count();
    if n_missing > 0 {
        return Err(Error::IncompleteData(format!(
            "{n_missing} missing cells; apply a fill policy first"
        )));
    }
    let layout = cube.layout();
    Ok(DataMatrix {
        values: DMatrix::from_column_slice(layout.len(), cube.n_day(), &cube.values),
        layout,
        day_axis: cube.day_axis.clone(),
        offset: 0.0,
        exact: Vec::new(),
    })
}

/// One flattened column reshaped back into per-frequency `n_depth × n_ping` images.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyImages {
    pub layout: Layout,
    data: Vec<f64>,
}

impl DailyImages {
    pub fn get(&self, depth: usize, ping: usize, freq: usize) -> f64 {
        self.data[self.layout.index(depth, ping, freq)]
    }

    /// Image of one frequency, rows = depth, columns = ping.
    pub fn frequency_image(&self, freq: usize) -> DMatrix<f64> {
        let n = self.layout.n_depth * self.layout.n_ping;
        DMatrix::from_column_slice(
            self.layout.n_depth,
            self.layout.n_ping,
            &self.data[freq * n..(freq + 1) * n],
        )
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn unflatten(column: &[f64], layout: Layout) -> Result<DailyImages> {
    if column.len() != layout.len() {
        return Err(Error::Layout(format!(
            "column has {} entries, layout {:?} needs {}",
            column.len(),
            layout,
            layout.len()
        )));
    }
    Ok(DailyImages {
        layout,
        data: column.to_vec(),
    })
}

/// Subtracts the global minimum so every entry is nonnegative.
pub fn shift_nonnegative(m: &DataMatrix) -> Result<DataMatrix> {
    if m.values.is_empty() {
        return Err(Error::Parameter("cannot shift an empty matrix".into()));
    }
    if m.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let min = m.values.min();
    let values = m.values.map(|v| v - min);
    let offset = m.offset + min;
    // (x − c) + c need not round back to x; remember the few that do not
    let exact = m
        .restored()
        .iter()
        .zip(values.iter())
        .enumerate()
        .filter(|(_, (orig, v))| (*v + offset).to_bits() != orig.to_bits())
        .map(|(i, (orig, _))| (i, *orig))
        .collect();
    Ok(DataMatrix {
        values,
        layout: m.layout,
        day_axis: m.day_axis.clone(),
        offset,
        exact,
    })
}
