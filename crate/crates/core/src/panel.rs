//! Panel data, CSV ingestion and the local projection design arrays.
//!
//! Rows are time and columns are variables. A series may carry `pad`
//! pre-sample rows ahead of the first in-sample observation so that lags of
//! the earliest observations are available (simulated data carries `p - 1`
//! such rows; data read from CSV carries none).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{HdlpError, Result};

/// An observed or simulated `N`-variable panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSeries {
    values: DMatrix<f64>,
    pad: usize,
    labels: Option<Vec<String>>,
}

impl PanelSeries {
    pub fn new(values: DMatrix<f64>, pad: usize, labels: Option<Vec<String>>) -> Result<Self> {
        if values.ncols() == 0 {
            return Err(HdlpError::InvalidArgument("panel needs at least one variable".into()));
        }
        if values.nrows() < pad + 2 {
            return Err(HdlpError::InsufficientSample(format!(
                "panel needs at least 2 in-sample rows, got {} rows with {} pre-sample rows",
                values.nrows(),
                pad
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos % values.nrows(), pos / values.nrows());
            return Err(HdlpError::InvalidArgument(format!(
                "non-finite value at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != values.ncols() {
                return Err(HdlpError::DimensionMismatch(format!(
                    "{} labels for {} variables",
                    labels.len(),
                    values.ncols()
                )));
            }
        }
        Ok(Self { values, pad, labels })
    }

    /// All rows, pre-sample rows first.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// In-sample length `T` (excludes the pre-sample rows).
    pub fn n_obs(&self) -> usize {
        self.values.nrows() - self.pad
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    pub fn total_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Label of variable `j`, falling back to `x{j+1}`.
    pub fn label(&self, j: usize) -> String {
        match &self.labels {
            Some(l) => l[j].clone(),
            None => format!("x{}", j + 1),
        }
    }

    /// Writes every row (pre-sample rows included) with a header line and
    /// 17 significant digits per value, which reloads bit-for-bit.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let header: Vec<String> = (0..self.n_vars()).map(|j| self.label(j)).collect();
        w.write_record(&header).map_err(csv_io)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| format_f64(*v))).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Fixed 17-significant-digit scientific format used for all numeric output.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_io(e: csv::Error) -> HdlpError {
    HdlpError::Io(std::io::Error::other(e))
}

/// Header handling for [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Treat the first row as a header when any of its cells is non-numeric.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub header: HeaderMode,
    /// Skip the first column (e.g. a date stamp).
    pub skip_first_column: bool,
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<PanelSeries> {
    let mut text = String::new();
    File::open(path.as_ref())?.read_to_string(&mut text)?;
    parse_csv(&text, options)
}

/// Parses CSV text into a panel with no pre-sample rows.
pub fn parse_csv(text: &str, options: &CsvOptions) -> Result<PanelSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let skip = usize::from(options.skip_first_column);
    let mut labels: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HdlpError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(idx + 1),
            column: None,
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(HdlpError::Parse {
                    line,
                    column: None,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        if record.len() <= skip {
            return Err(HdlpError::Parse {
                line,
                column: None,
                message: "no data columns".into(),
            });
        }
        let cells: Vec<&str> = record.iter().skip(skip).collect();

        let is_first = rows.is_empty() && labels.is_none();
        if is_first {
            let header = match options.header {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => cells.iter().any(|c| c.parse::<f64>().is_err()),
            };
            if header {
                labels = Some(cells.iter().map(|s| s.to_string()).collect());
                continue;
            }
        }

        let mut row = Vec::with_capacity(cells.len());
        for (j, cell) in cells.iter().enumerate() {
            let column = j + skip + 1;
            let v: f64 = cell.parse().map_err(|_| HdlpError::Parse {
                line,
                column: Some(column),
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(HdlpError::Parse {
                    line,
                    column: Some(column),
                    message: format!("missing or non-finite value `{cell}`"),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(HdlpError::EmptyInput("no numeric rows in CSV input".into()));
    }
    let n = rows[0].len();
    let t = rows.len();
    let values = DMatrix::from_fn(t, n, |i, j| rows[i][j]);
    PanelSeries::new(values, 0, labels)
}

/// Rescales every column to sample mean 0 and sample variance 1 (divisor
/// `n - 1`), using all rows including pre-sample ones.
pub fn standardize(series: &PanelSeries) -> Result<PanelSeries> {
    let values = series.values();
    let n = values.nrows() as f64;
    let mut out = values.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let (min, max) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if min == max || !(var > 0.0) {
            return Err(HdlpError::DegenerateColumn(series.label(j)));
        }
        let sd = var.sqrt();
        col.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    PanelSeries::new(out, series.pad(), series.labels().map(<[String]>::to_vec))
}

/// Regression arrays for one horizon: row `t` of `x` holds
/// `(x_t', x_{t-1}', ..., x_{t-p+1}')` and row `t` of `y` holds `x_{t+h}'`.
#[derive(Debug)]
pub struct LpDesign {
    horizon: usize,
    lags: usize,
    n_vars: usize,
    first_row: usize,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    gram: OnceLock<DMatrix<f64>>,
}

impl Clone for LpDesign {
    fn clone(&self) -> Self {
        Self {
            horizon: self.horizon,
            lags: self.lags,
            n_vars: self.n_vars,
            first_row: self.first_row,
            x: self.x.clone(),
            y: self.y.clone(),
            gram: self.gram.clone(),
        }
    }
}

impl LpDesign {
    /// Builds a design from raw arrays. `x` must have `n_vars * lags` columns.
    pub fn from_arrays(horizon: usize, lags: usize, x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if horizon == 0 || lags == 0 {
            return Err(HdlpError::InvalidArgument("horizon and lags must be >= 1".into()));
        }
        let n_vars = y.ncols();
        if x.nrows() != y.nrows() || x.ncols() != n_vars * lags {
            return Err(HdlpError::DimensionMismatch(format!(
                "X is {}x{}, Y is {}x{}, lags {}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols(),
                lags
            )));
        }
        if x.nrows() < 2 {
            return Err(HdlpError::InsufficientSample("design needs at least 2 rows".into()));
        }
        Ok(Self {
            horizon,
            lags,
            n_vars,
            first_row: 0,
            x,
            y,
            gram: OnceLock::new(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Number of regressors `Np`.
    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn effective_obs(&self) -> usize {
        self.x.nrows()
    }

    /// Row of the source panel holding the newest lag of the first design row.
    pub fn first_row(&self) -> usize {
        self.first_row
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn response(&self, i: usize) -> DVector<f64> {
        self.y.column(i).into_owned()
    }

    /// `X'X / n`, computed once and cached.
    pub fn gram(&self) -> &DMatrix<f64> {
        self.gram.get_or_init(|| {
            let n = self.effective_obs() as f64;
            self.x.tr_mul(&self.x) / n
        })
    }

    /// `X'y_i / n` for every response column, as an `Np x N` matrix.
    pub fn cross(&self) -> DMatrix<f64> {
        self.x.tr_mul(&self.y) / self.effective_obs() as f64
    }
}

/// Builds the horizon-`h` design with `p` lags. Lags of the earliest
/// observations come from pre-sample rows when the series has them; otherwise
/// the first `p - 1` in-sample rows are consumed as lags.
pub fn build_design(series: &PanelSeries, p: usize, h: usize) -> Result<LpDesign> {
    build_design_aligned(series, p, h, p)
}

/// Like [`build_design`] but starts the sample where `max_lag` lags would be
/// available, so that designs with different `p <= max_lag` share one sample.
pub fn build_design_aligned(series: &PanelSeries, p: usize, h: usize, max_lag: usize) -> Result<LpDesign> {
    if p == 0 || h == 0 {
        return Err(HdlpError::InvalidArgument(format!(
            "lags p={p} and horizon h={h} must be >= 1"
        )));
    }
    if max_lag < p {
        return Err(HdlpError::InvalidArgument(format!(
            "alignment lag {max_lag} below p={p}"
        )));
    }
    if h >= series.n_obs() {
        return Err(HdlpError::InsufficientSample(format!(
            "horizon {h} must be below the sample length {}",
            series.n_obs()
        )));
    }
    let start = series.pad().max(max_lag - 1);
    let total = series.total_rows();
    let n_eff = total.saturating_sub(start + h);
    if n_eff < 2 {
        return Err(HdlpError::InsufficientSample(format!(
            "{n_eff} usable rows for p={max_lag}, h={h} with T={}",
            series.n_obs()
        )));
    }
    let n = series.n_vars();
    let v = series.values();
    let x = DMatrix::from_fn(n_eff, n * p, |r, c| {
        let (lag, var) = (c / n, c % n);
        v[(start + r - lag, var)]
    });
    let y = DMatrix::from_fn(n_eff, n, |r, var| v[(start + r + h, var)]);
    Ok(LpDesign {
        horizon: h,
        lags: p,
        n_vars: n,
        first_row: start,
        x,
        y,
        gram: OnceLock::new(),
    })
}
