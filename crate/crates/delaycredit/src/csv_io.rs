//! Firm CSV ingestion and CSV exports.
//!
//! Every exported file starts with one `#` line holding the resolved run
//! configuration. Floats are written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use delaycredit_core::market_data::{FirmSeries, YearRow};
use delaycredit_core::monte_carlo::Ensemble;
use delaycredit_core::pde::DiscreteOperator;
use delaycredit_core::pricing::PricingSurface;

use crate::error::{CliError, Result};

pub const FIRM_HEADER: [&str; 8] = ["year", "r", "sigma", "n_obs", "B", "V", "C", "C_y"];

/// Load and validate a firm CSV. The firm id is the file stem.
pub fn load_firm_csv(path: &Path) -> Result<FirmSeries> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_firm_csv(&text, &id, path)
}

/// Parse firm CSV text; `origin` names the source in diagnostics.
pub fn parse_firm_csv(text: &str, id: &str, origin: &Path) -> Result<FirmSeries> {
    let path = origin.to_path_buf();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?
        .clone();
    for (k, want) in FIRM_HEADER.iter().enumerate() {
        if header.get(k) != Some(want) {
            return Err(CliError::MissingColumn {
                path,
                column: want.to_string(),
            });
        }
    }
    if header.len() != FIRM_HEADER.len() {
        return Err(CliError::MissingColumn {
            path,
            column: header.get(FIRM_HEADER.len()).unwrap_or_default().to_string(),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| CliError::Csv {
            path: path.clone(),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<f64> {
            let raw = record.get(k).unwrap_or("");
            raw.parse::<f64>().map_err(|_| CliError::Parse {
                path: path.clone(),
                line,
                column: FIRM_HEADER[k].to_string(),
                value: raw.to_string(),
            })
        };
        let n_obs_raw = record.get(3).unwrap_or("");
        let n_obs = n_obs_raw.parse::<u32>().map_err(|_| CliError::Parse {
            path: path.clone(),
            line,
            column: "n_obs".into(),
            value: n_obs_raw.to_string(),
        })?;
        rows.push(YearRow {
            year: field(0)?,
            rate: field(1)?,
            sigma: field(2)?,
            n_obs,
            book_debt: field(4)?,
            firm_value: field(5)?,
            payout: field(6)?,
            debt_payout: field(7)?,
        });
    }
    Ok(FirmSeries::new(id, rows)?)
}

/// 17 significant digits, round-trip exact.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file being written: the stamp line, then records.
pub struct CsvOut {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, stamp: &str) -> Result<Self> {
        let write_err = |source| CliError::Write {
            path: path.to_path_buf(),
            source,
        };
        let mut file = BufWriter::new(File::create(path).map_err(write_err)?);
        writeln!(file, "# {stamp}").map_err(write_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: csv::Writer::from_writer(file),
        })
    }

    pub fn record<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).map_err(|source| CliError::Csv {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|source| CliError::Write {
            path: self.path.clone(),
            source,
        })
    }
}

/// One path as `t,V`.
pub fn write_path(path: &Path, stamp: &str, times: &[f64], values: &[f64]) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    out.record(["t", "V"])?;
    for (t, v) in times.iter().zip(values) {
        out.record([fmt(*t), fmt(*v)])?;
    }
    out.finish()
}

/// All paths side by side, `t,V_1..V_n`; paths that failed are left blank.
pub fn write_paths(path: &Path, stamp: &str, ensemble: &Ensemble) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    let header = std::iter::once("t".to_string()).chain((1..=ensemble.n_paths()).map(|k| format!("V_{k}")));
    out.record(header)?;
    for (n, t) in ensemble.times.iter().enumerate() {
        let row = std::iter::once(fmt(*t)).chain(
            ensemble
                .paths
                .iter()
                .map(|p| p.as_ref().map(|v| fmt(v[n])).unwrap_or_default()),
        );
        out.record(row)?;
    }
    out.finish()
}

/// `t,mean,stddev,lower,upper,n_included` with a two-sided band at `level`.
pub fn write_summary(path: &Path, stamp: &str, ensemble: &Ensemble, level: f64) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    out.record(["t", "mean", "stddev", "lower", "upper", "n_included"])?;
    let mean = ensemble.mean_path();
    let sd = ensemble.stddev_path();
    let (lo, hi) = ensemble.confidence_band(level);
    let n = ensemble.n_included().to_string();
    for (k, t) in ensemble.times.iter().enumerate() {
        out.record([fmt(*t), fmt(mean[k]), fmt(sd[k]), fmt(lo[k]), fmt(hi[k]), n.clone()])?;
    }
    out.finish()
}

/// Observed firm values as `year,t,V` with `t` the model time.
pub fn write_observed(path: &Path, stamp: &str, series: &FirmSeries, origin: f64, from: f64, to: f64) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    out.record(["year", "t", "V"])?;
    for row in series.rows_in(from, to) {
        out.record([fmt(row.year), fmt(row.year - origin), fmt(row.firm_value)])?;
    }
    out.finish()
}

/// `tau,v_1..v_N`, the header carrying the grid centres.
pub fn write_surface(path: &Path, stamp: &str, surface: &PricingSurface) -> Result<()> {
    write_grid_table(path, stamp, surface, &surface.values)
}

/// Same layout as [`write_surface`] for any table on the surface lattice.
pub fn write_grid_table(path: &Path, stamp: &str, surface: &PricingSurface, values: &[Vec<f64>]) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    let header = std::iter::once("tau".to_string()).chain(surface.grid.centers().iter().map(|v| fmt(*v)));
    out.record(header)?;
    for (tau, row) in surface.taus.iter().zip(values) {
        out.record(std::iter::once(fmt(*tau)).chain(row.iter().map(|x| fmt(*x))))?;
    }
    out.finish()
}

/// One slice point in calendar time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicePoint {
    pub year: f64,
    pub model: f64,
    pub real: Option<f64>,
}

/// `year,model_value[,real_value]`.
pub fn write_slice(path: &Path, stamp: &str, points: &[SlicePoint]) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    let with_real = points.iter().any(|p| p.real.is_some());
    if with_real {
        out.record(["year", "model_value", "real_value"])?;
    } else {
        out.record(["year", "model_value"])?;
    }
    for p in points {
        let mut row = vec![fmt(p.year), fmt(p.model)];
        if with_real {
            row.push(p.real.map(fmt).unwrap_or_default());
        }
        out.record(row)?;
    }
    out.finish()
}

/// Debug dump of `A` and `b`: `i,sub,diag,super,b` with 1-based `i`.
pub fn write_operator(path: &Path, stamp: &str, op: &DiscreteOperator) -> Result<()> {
    let mut out = CsvOut::create(path, stamp)?;
    out.record(["i", "sub", "diag", "super", "b"])?;
    for i in 0..op.len() {
        out.record([
            (i + 1).to_string(),
            fmt(op.sub[i]),
            fmt(op.diag[i]),
            fmt(op.sup[i]),
            fmt(op.source[i]),
        ])?;
    }
    out.finish()
}
