use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geoscale_core::kernel::{DEFAULT_GAMMA, DEFAULT_GRID_COUNT};
use geoscale_core::{DistortionOptions, MetricKind, NormKind};

use crate::error::{CliError, CliResult};
use crate::output::Format;

/// Heat-kernel bandwidth selection for graph Laplacians.
#[derive(Debug, Parser)]
#[command(name = "geoscale", version)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic surface and write clean and noisy clouds.
    Generate(GenerateArgs),
    /// Select ε̂ for a point cloud by minimizing the metric distortion.
    Estimate(EstimateArgs),
    /// Run GC, GC⁻¹, reconstruction error and CLMR on the same cloud.
    Compare(CompareArgs),
    /// Measure how well each ε denoises a cloud with known clean version.
    Smoothing(SmoothingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    Hourglass,
    Dome,
    Plane,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Hourglass => "hourglass",
            Generator::Dome => "dome",
            Generator::Plane => "plane",
        }
    }

    pub fn intrinsic_ambient_dim(self) -> usize {
        match self {
            Generator::Plane => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Dual,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Norm {
    Squared,
    Plain,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "hourglass")]
    pub generator: Generator,
    /// Number of points.
    #[arg(long)]
    pub n: usize,
    /// Standard deviation of the Gaussian noise added in every coordinate.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Dimension the clean surface is zero-padded to before adding noise.
    #[arg(long, default_value_t = 13)]
    pub ambient_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Override the lower end of the ε grid.
    #[arg(long)]
    pub eps_min: Option<f64>,
    /// Override the upper end of the ε grid.
    #[arg(long)]
    pub eps_max: Option<f64>,
    /// Number of log-spaced grid values.
    #[arg(long, default_value_t = DEFAULT_GRID_COUNT)]
    pub count: usize,
    /// Off-diagonal kernel mass that defines the automatic ε_min.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Working tangent dimension d′.
    #[arg(long, default_value_t = 1)]
    pub d_prime: usize,
    /// Size of the evaluation subsample.
    #[arg(long, default_value_t = 200)]
    pub n_prime: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "squared")]
    pub norm: Norm,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV point cloud, one point per row.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub select: SelectArgs,
    /// Compare the dual metric H (GC) or its inverse (GC⁻¹) with the identity.
    #[arg(long, value_enum, default_value = "dual")]
    pub metric: Metric,
    /// Repeat with seeds seed..seed+R−1 and report mean and spread of ε̂.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub select: SelectArgs,
    /// Upper bound K on the intrinsic dimension for the CLMR range.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SmoothingArgs {
    /// Clean cloud X*.
    #[arg(long)]
    pub clean: PathBuf,
    /// Noisy cloud X, row i being the noisy version of row i of X*.
    #[arg(long)]
    pub noisy: PathBuf,
    /// Grid built from the noisy cloud, shared by both embeddings.
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_enum, default_value = "dual")]
    pub metric: Metric,
    /// Embedding dimension.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "--{name} must be finite and > 0, got {v}"
        )))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> CliResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "--{name} must be at least {min}, got {v}"
        )))
    }
}

impl GenerateArgs {
    pub fn validate(&self) -> CliResult<()> {
        at_least("n", self.n, 10)?;
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(CliError::config(format!(
                "--sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        at_least(
            "ambient-dim",
            self.ambient_dim,
            self.generator.intrinsic_ambient_dim(),
        )
    }
}

impl GridArgs {
    pub fn validate(&self) -> CliResult<()> {
        at_least("count", self.count, 2)?;
        positive("gamma", self.gamma)?;
        if let Some(v) = self.eps_min {
            positive("eps-min", v)?;
        }
        if let Some(v) = self.eps_max {
            positive("eps-max", v)?;
        }
        if let (Some(lo), Some(hi)) = (self.eps_min, self.eps_max) {
            if lo >= hi {
                return Err(CliError::config(format!(
                    "--eps-min ({lo}) must be below --eps-max ({hi})"
                )));
            }
        }
        Ok(())
    }
}

impl SelectArgs {
    pub fn validate(&self) -> CliResult<()> {
        at_least("d-prime", self.d_prime, 1)?;
        at_least("n-prime", self.n_prime, 1)
    }

    /// Checks that depend on the loaded cloud.
    pub fn validate_for(&self, n: usize, r: usize) -> CliResult<()> {
        if self.n_prime > n {
            return Err(CliError::config(format!(
                "--n-prime ({}) exceeds the number of points ({n})",
                self.n_prime
            )));
        }
        if self.d_prime > r.min(n - 1) {
            return Err(CliError::config(format!(
                "--d-prime ({}) exceeds what {n} points in dimension {r} support",
                self.d_prime
            )));
        }
        Ok(())
    }

    pub fn options(&self, metric: Metric) -> DistortionOptions {
        DistortionOptions {
            d_prime: self.d_prime,
            metric: match metric {
                Metric::Dual => MetricKind::Dual,
                Metric::Inverse => MetricKind::Inverse,
            },
            norm: match self.norm {
                Norm::Squared => NormKind::Squared,
                Norm::Plain => NormKind::Plain,
            },
        }
    }
}

impl EstimateArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.grid.validate()?;
        self.select.validate()?;
        at_least("replicates", self.replicates, 1)?;
        self.select
            .seed
            .checked_add(self.replicates as u64 - 1)
            .ok_or_else(|| CliError::config("--seed + --replicates overflows"))?;
        Ok(())
    }
}

impl CompareArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.grid.validate()?;
        self.select.validate()?;
        at_least("k", self.k, 1)
    }
}

impl SmoothingArgs {
    pub fn validate(&self) -> CliResult<()> {
        self.grid.validate()?;
        self.select.validate()?;
        at_least("m", self.m, 1)
    }
}

/// Reads `GEOSCALE_THREADS`: `None` when unset, an error when malformed.
pub fn thread_cap(value: Option<&str>) -> CliResult<Option<usize>> {
    match value {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::config(format!(
                "GEOSCALE_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults_match_documentation() {
        let cli = Cli::try_parse_from(["geoscale", "estimate", "--input", "x.csv", "--out", "o"])
            .unwrap();
        let Command::Estimate(args) = cli.command else {
            panic!("wrong subcommand")
        };
        assert_eq!(args.select.d_prime, 1);
        assert_eq!(args.select.n_prime, 200);
        assert_eq!(args.grid.count, 20);
        assert_eq!(args.metric, Metric::Dual);
        assert_eq!(args.output.format, Format::Csv);
        assert_eq!(args.replicates, 1);
        args.validate().unwrap();
    }

    #[test]
    fn bad_values_are_config_errors() {
        let cli = Cli::try_parse_from([
            "geoscale",
            "estimate",
            "--input",
            "x",
            "--out",
            "o",
            "--eps-min",
            "2",
            "--eps-max",
            "1",
        ])
        .unwrap();
        let Command::Estimate(args) = cli.command else {
            panic!()
        };
        assert_eq!(args.validate().unwrap_err().exit_code(), 2);

        let cli = Cli::try_parse_from([
            "geoscale",
            "generate",
            "--n",
            "100",
            "--sigma=-1",
            "--out",
            "o",
        ])
        .unwrap();
        let Command::Generate(args) = cli.command else {
            panic!()
        };
        assert!(args.validate().is_err());
    }

    #[test]
    fn thread_cap_parsing() {
        assert_eq!(thread_cap(None).unwrap(), None);
        assert_eq!(thread_cap(Some("3")).unwrap(), Some(3));
        assert!(thread_cap(Some("0")).is_err());
        assert!(thread_cap(Some("many")).is_err());
    }

    #[test]
    fn data_dependent_checks() {
        let s = SelectArgs {
            d_prime: 3,
            n_prime: 50,
            seed: 0,
            norm: Norm::Squared,
        };
        assert!(s.validate_for(40, 13).is_err());
        assert!(s.validate_for(100, 2).is_err());
        s.validate_for(100, 3).unwrap();
    }
}
