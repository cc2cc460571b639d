//! Command-line grammar.

use std::fmt;
use std::path::PathBuf;

use blockcorr::blocks::{MeanMode, TestFunction};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "blockcorr",
    version,
    about = "Spectral independence tests for grouped high-dimensional data",
    after_help = "Set BLOCKCORR_THREADS to cap the number of simulation worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Test group independence on CSV data (rows = observations).
    Test(TestArgs),
    /// Print null CLT parameters for a layout, without data.
    Params(ParamsArgs),
    /// Tabulate the limiting spectral density for a ratio vector.
    Density(DensityArgs),
    /// Run a Monte Carlo experiment described by a JSON config file.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// CSV file with N observation rows and p variable columns; a header
    /// row is detected by non-numeric fields and skipped.
    pub csv_path: PathBuf,
    /// Comma-separated group sizes, e.g. 8,8,8,8; must sum to the number
    /// of data columns.
    #[arg(long, required = true, value_delimiter = ',')]
    pub blocks: Vec<usize>,
    /// Statistic: schott, wilks, or poly:c0,c1,... (ascending coefficients).
    #[arg(long, value_parser = parse_stat)]
    pub stat: Stat,
    /// Whether the population mean is known to be zero or estimated.
    #[arg(long, value_enum, default_value = "unknown")]
    pub mean: MeanArg,
    /// Parameter route; defaults to closed for schott/wilks and contour
    /// for polynomials.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    /// Comma-separated group sizes, e.g. 16,16.
    #[arg(long, required = true, value_delimiter = ',')]
    pub blocks: Vec<usize>,
    /// Sample count.
    #[arg(long)]
    pub n: usize,
    /// Statistic: schott, wilks, or poly:c0,c1,... (ascending coefficients).
    #[arg(long, value_parser = parse_stat)]
    pub stat: Stat,
    /// Whether the population mean is known to be zero or estimated.
    #[arg(long, value_enum, default_value = "unknown")]
    pub mean: MeanArg,
    /// Parameter route; defaults to closed for schott/wilks and contour
    /// for polynomials.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
}

#[derive(Args, Debug)]
pub struct DensityArgs {
    /// Comma-separated dimension ratios y_t in (0,1), e.g. 0.2,0.3,0.1.
    #[arg(long, required = true, value_delimiter = ',')]
    pub y: Vec<f64>,
    /// Left end of the table; defaults a little below the support.
    #[arg(long)]
    pub xmin: Option<f64>,
    /// Right end of the table; defaults a little above the support.
    #[arg(long)]
    pub xmax: Option<f64>,
    /// Number of grid points.
    #[arg(long, default_value_t = 400)]
    pub points: usize,
    /// Height above the real axis for the Stieltjes inversion.
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// JSON experiment description; field names match the report's
    /// embedded config.
    #[arg(long)]
    pub config: PathBuf,
    /// Write the report here; the histogram table then goes to standard
    /// output. Without --out the report itself goes to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Test statistic selector.
#[derive(Clone, Debug, PartialEq)]
pub enum Stat {
    Schott,
    Wilks,
    Poly(Vec<f64>),
}

impl Stat {
    pub fn test_function(&self) -> TestFunction {
        match self {
            Stat::Schott => TestFunction::Square,
            Stat::Wilks => TestFunction::Log,
            Stat::Poly(coeffs) => TestFunction::Polynomial(coeffs.clone()),
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stat::Schott => f.write_str("schott"),
            Stat::Wilks => f.write_str("wilks"),
            Stat::Poly(coeffs) => {
                write!(f, "poly:")?;
                for (i, c) in coeffs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{c}")?;
                }
                Ok(())
            }
        }
    }
}

pub fn parse_stat(raw: &str) -> Result<Stat, String> {
    match raw {
        "schott" => Ok(Stat::Schott),
        "wilks" => Ok(Stat::Wilks),
        _ => {
            let Some(list) = raw.strip_prefix("poly:") else {
                return Err(format!(
                    "expected schott, wilks, or poly:c0,c1,..., got `{raw}`"
                ));
            };
            let coeffs: Vec<f64> = list
                .split(',')
                .map(|piece| {
                    piece
                        .trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|c| c.is_finite())
                        .ok_or_else(|| format!("bad polynomial coefficient `{piece}`"))
                })
                .collect::<Result<_, _>>()?;
            if coeffs.is_empty() {
                return Err("poly: needs at least one coefficient".into());
            }
            Ok(Stat::Poly(coeffs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Known,
    Unknown,
}

impl From<MeanArg> for MeanMode {
    fn from(arg: MeanArg) -> Self {
        match arg {
            MeanArg::Known => MeanMode::Known,
            MeanArg::Unknown => MeanMode::Unknown,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Closed-form parameters; schott and wilks only.
    Closed,
    /// Contour integration against the exact limit measure.
    Contour,
    /// Contour integration against the Marchenko-Pastur approximation.
    Mp,
}
