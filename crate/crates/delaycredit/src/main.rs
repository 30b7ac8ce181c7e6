use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use delaycredit::commands;
use delaycredit::config::{Command, RunConfig};
use delaycredit::error::{EXIT_OK, EXIT_VERIFY_FAILED};
use delaycredit::parallel::worker_count;
use delaycredit::verify::{self, VerifyOptions};
use delaycredit_core::market_data::VolKind;
use delaycredit_core::pde::{ClaimKind, UpwindRule};

#[derive(Parser)]
#[command(name = "delaycredit", version, about = "Delayed firm-value simulation and debt/equity pricing")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate firm-value paths and their ensemble summary.
    Simulate(RunArgs),
    /// Price the equity surface.
    PriceEquity(RunArgs),
    /// Price the debt surface.
    PriceDebt(RunArgs),
    /// Delayed model, Merton baseline and observed equity side by side.
    Compare(RunArgs),
    /// Run the acceptance checks.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum VolFit {
    Linear,
    Quadratic,
    Spline,
    ValueQuadratic,
    Mean,
}

impl From<VolFit> for VolKind {
    fn from(v: VolFit) -> Self {
        match v {
            VolFit::Linear => VolKind::TimeInterpLinear,
            VolFit::Quadratic => VolKind::TimeInterpQuadratic,
            VolFit::Spline => VolKind::TimeInterpSpline,
            VolFit::ValueQuadratic => VolKind::ValueFitQuadratic,
            VolFit::Mean => VolKind::ConstantMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Upwind {
    Paper,
    Standard,
}

#[derive(Args)]
struct RunArgs {
    /// Firm CSV with header year,r,sigma,n_obs,B,V,C,C_y.
    #[arg(long, value_name = "CSV")]
    firm: PathBuf,
    /// Model time zero as a calendar year.
    #[arg(long, value_name = "Y", default_value_t = 2000.5)]
    origin: f64,
    /// Delay in years.
    #[arg(long = "L", value_name = "Y", default_value_t = 9.5)]
    delay: f64,
    /// Horizon (maturity) in years after the origin.
    #[arg(long = "T", value_name = "Y", default_value_t = 9.5)]
    horizon: f64,
    #[arg(long, value_name = "X", default_value_t = 1.0)]
    theta: f64,
    #[arg(long, value_name = "N", default_value_t = 400)]
    paths: usize,
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,
    /// Number of grid cells.
    #[arg(long, value_name = "N", default_value_t = 400)]
    grid: usize,
    /// Pricing time step in years.
    #[arg(long, value_name = "X", default_value_t = 1.0 / 365.0)]
    dtau: f64,
    #[arg(long, value_enum, default_value = "quadratic")]
    vol_fit: VolFit,
    /// V_max as a multiple of the promised payment.
    #[arg(long, value_name = "X", default_value_t = 4.0)]
    vmax_mult: f64,
    /// Payoff smoothing width; one cell width when omitted.
    #[arg(long, value_name = "X")]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value = "paper")]
    upwind: Upwind,
    /// Output path prefix.
    #[arg(long, value_name = "PREFIX", default_value = "delaycredit")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Print per-check timing.
    #[arg(long, short)]
    verbose: bool,
    #[arg(long, hide = true)]
    tamper_phi: bool,
}

impl RunArgs {
    fn config(self, command: Command) -> RunConfig {
        let mut c = RunConfig::new(command);
        c.firm_csv = self.firm;
        c.origin = self.origin;
        c.delay = self.delay;
        c.horizon = self.horizon;
        c.theta = self.theta;
        c.n_paths = self.paths;
        c.seed = self.seed;
        c.grid = self.grid;
        c.dtau = self.dtau;
        c.vol_fit = self.vol_fit.into();
        c.vmax_multiple = self.vmax_mult;
        c.epsilon = self.epsilon;
        c.upwind = match self.upwind {
            Upwind::Paper => UpwindRule::Paper,
            Upwind::Standard => UpwindRule::Standard,
        };
        c.out = self.out;
        c
    }
}

fn run_verify(args: VerifyArgs, workers: usize) -> i32 {
    let opts = VerifyOptions {
        tamper_phi: args.tamper_phi,
        verbose: args.verbose,
        workers,
    };
    let start = Instant::now();
    let mut failed = 0;
    for (id, ..) in verify::CHECKS {
        let outcome = verify::run_check(id, &opts);
        println!("{}", outcome.line());
        if opts.verbose {
            println!("       {:.3} s (budget {} s)", outcome.elapsed.as_secs_f64(), outcome.budget.as_secs());
        }
        failed += usize::from(!outcome.passed);
    }
    println!("{} of {} checks passed", verify::CHECKS.len() - failed, verify::CHECKS.len());
    if opts.verbose {
        println!("total {:.3} s", start.elapsed().as_secs_f64());
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VERIFY_FAILED
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = worker_count();
    let result = match cli.command {
        Cmd::Verify(args) => return ExitCode::from(run_verify(args, workers) as u8),
        Cmd::Simulate(a) => commands::cmd_simulate(&a.config(Command::Simulate), workers).map(|r| {
            if r.n_included < r.n_paths {
                eprintln!("{} of {} paths excluded", r.n_paths - r.n_included, r.n_paths);
            }
            r.files
        }),
        Cmd::PriceEquity(a) => report(commands::cmd_price(&a.config(Command::PriceEquity), ClaimKind::Equity, workers)),
        Cmd::PriceDebt(a) => report(commands::cmd_price(&a.config(Command::PriceDebt), ClaimKind::Debt, workers)),
        Cmd::Compare(a) => report(commands::cmd_compare(&a.config(Command::Compare), workers)),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn report(r: delaycredit::Result<commands::PriceReport>) -> delaycredit::Result<Vec<PathBuf>> {
    r.map(|r| {
        if r.skipped > 0 {
            eprintln!("{} samples skipped", r.skipped);
        }
        if r.clamp_fraction > 0.0 {
            eprintln!("volatility clamped in {:.2}% of evaluations", 100.0 * r.clamp_fraction);
        }
        r.files
    })
}
