use std::fmt;
use std::path::PathBuf;

use delaycredit_core::market_data::VolKind;
use delaycredit_core::pde::UpwindRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    PriceEquity,
    PriceDebt,
    Compare,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::PriceEquity => "price-equity",
            Command::PriceDebt => "price-debt",
            Command::Compare => "compare",
            Command::Verify => "verify",
        }
    }
}

/// Volatility fit names as used on the command line.
pub fn vol_fit_name(kind: VolKind) -> &'static str {
    match kind {
        VolKind::TimeInterpLinear => "linear",
        VolKind::TimeInterpQuadratic => "quadratic",
        VolKind::TimeInterpSpline => "spline",
        VolKind::ValueFitQuadratic => "value-quadratic",
        VolKind::ConstantMean => "mean",
    }
}

pub fn upwind_name(rule: UpwindRule) -> &'static str {
    match rule {
        UpwindRule::Paper => "paper",
        UpwindRule::Standard => "standard",
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub firm_csv: PathBuf,
    pub origin: f64,
    pub delay: f64,
    pub horizon: f64,
    pub theta: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub grid: usize,
    pub dtau: f64,
    pub vol_fit: VolKind,
    pub vmax_multiple: f64,
    /// Payoff smoothing width; `None` means one cell width.
    pub epsilon: Option<f64>,
    pub upwind: UpwindRule,
    pub out: PathBuf,
    /// Promised payment; `None` reads the book debt at maturity.
    pub promised: Option<f64>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            firm_csv: PathBuf::new(),
            origin: 2000.5,
            delay: 9.5,
            horizon: 9.5,
            theta: 1.0,
            n_paths: 400,
            seed: 0,
            grid: 400,
            dtau: 1.0 / 365.0,
            vol_fit: VolKind::TimeInterpQuadratic,
            vmax_multiple: 4.0,
            epsilon: None,
            upwind: UpwindRule::Paper,
            out: PathBuf::from("delaycredit"),
            promised: None,
        }
    }

    /// Output file `<out>_<suffix>`.
    pub fn output(&self, suffix: &str) -> PathBuf {
        let mut name = self.out.clone().into_os_string();
        name.push("_");
        name.push(suffix);
        PathBuf::from(name)
    }

    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.origin, self.delay, self.horizon, self.theta, self.dtau, self.vmax_multiple];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err("numeric parameters must be finite".into());
        }
        if !(self.delay > 0.0) || !(self.horizon > 0.0) {
            return Err("--L and --T must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err("--theta must lie in [0, 1]".into());
        }
        if self.n_paths == 0 {
            return Err("--paths must be at least 1".into());
        }
        if self.grid < 3 {
            return Err("--grid must be at least 3".into());
        }
        if !(self.dtau > 0.0 && self.dtau <= 1.0) {
            return Err("--dtau must lie in (0, 1]".into());
        }
        if !(3.0..=4.0).contains(&self.vmax_multiple) {
            return Err("--vmax-mult must lie in [3, 4]".into());
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err("--epsilon must be positive".into());
            }
        }
        if let Some(b) = self.promised {
            if !(b > 0.0 && b.is_finite()) {
                return Err("promised payment must be positive".into());
            }
        }
        Ok(())
    }
}

/// The reproducibility stamp written at the top of every output file.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "delaycredit {} firm={} origin={} L={} T={} theta={} paths={} seed={} grid={} dtau={} vol-fit={} vmax-mult={} epsilon={} upwind={} out={}",
            self.command.name(),
            self.firm_csv.display(),
            self.origin,
            self.delay,
            self.horizon,
            self.theta,
            self.n_paths,
            self.seed,
            self.grid,
            self.dtau,
            vol_fit_name(self.vol_fit),
            self.vmax_multiple,
            self.epsilon.map_or("h".to_string(), |e| e.to_string()),
            upwind_name(self.upwind),
            self.out.display(),
        )?;
        if let Some(b) = self.promised {
            write!(f, " promised={b}")?;
        }
        Ok(())
    }
}
