//! Command-line surface. Parsing stays here; resolution of defaults that
//! depend on the data (lambda from n, covariate list from the header) happens
//! in the command drivers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use expaft::{ErrorDist, InterceptMode, KmConvention, LambdaRule, Method, SeMethod};

#[derive(Debug, Parser)]
#[command(
    name = "expaft",
    version,
    about = "Censored expectile regression for accelerated failure time models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a censored expectile regression to a CSV dataset.
    Fit(FitArgs),
    /// Run a Monte Carlo study on synthetic data.
    Simulate(SimulateArgs),
    /// Export the Kaplan-Meier curve used for the weights.
    Km(KmArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KmConventionArg {
    /// Survival of the censoring time (weights drop at censored rows).
    Censoring,
    /// Survival of the event time (sensitivity alternative).
    Event,
}

impl From<KmConventionArg> for KmConvention {
    fn from(v: KmConventionArg) -> Self {
        match v {
            KmConventionArg::Censoring => KmConvention::CensoringSurvival,
            KmConventionArg::Event => KmConvention::EventSurvival,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SeArg {
    Plugin,
    Bootstrap,
}

impl From<SeArg> for SeMethod {
    fn from(v: SeArg) -> Self {
        match v {
            SeArg::Plugin => SeMethod::Plugin,
            SeArg::Bootstrap => SeMethod::Bootstrap,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ErrorArg {
    Gumbel,
    ShiftedUniform,
}

impl From<ErrorArg> for ErrorDist {
    fn from(v: ErrorArg) -> Self {
        match v {
            ErrorArg::Gumbel => ErrorDist::Gumbel,
            ErrorArg::ShiftedUniform => ErrorDist::ShiftedUniform,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterceptModeArg {
    Without,
    With,
}

impl From<InterceptModeArg> for InterceptMode {
    fn from(v: InterceptModeArg) -> Self {
        match v {
            InterceptModeArg::Without => InterceptMode::Without,
            InterceptModeArg::With => InterceptMode::With,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    /// Expectile index matching the error law's centering condition.
    Expectile,
    /// Least squares, run through the same pipeline at index 1/2.
    Ls,
}

impl From<MethodArg> for Method {
    fn from(v: MethodArg) -> Self {
        match v {
            MethodArg::Expectile => Method::Expectile,
            MethodArg::Ls => Method::LeastSquares,
        }
    }
}

/// `sqrt-n`, `n-0.4`, or `fixed:<value>`.
pub fn parse_lambda_rule(s: &str) -> std::result::Result<LambdaRule, String> {
    match s {
        "sqrt-n" => Ok(LambdaRule::SqrtN),
        "n-0.4" => Ok(LambdaRule::NPow04),
        other => match other.strip_prefix("fixed:") {
            Some(v) => {
                let v: f64 = v
                    .parse()
                    .map_err(|_| format!("bad fixed lambda value '{v}'"))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!(
                        "fixed lambda must be finite and nonnegative, got {v}"
                    ));
                }
                Ok(LambdaRule::Fixed(v))
            }
            None => Err(format!(
                "unknown lambda rule '{other}' (expected sqrt-n, n-0.4, or fixed:<value>)"
            )),
        },
    }
}

/// Dataset location and column selection, shared by `fit` and `km`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV file with a header row.
    pub data: PathBuf,
    /// Column holding the observed (possibly censored) time.
    #[arg(long)]
    pub time_column: String,
    /// Column holding the status: 1 = event, 0 = censored.
    #[arg(long)]
    pub status_column: String,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated covariate columns; default: every other column,
    /// in header order.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Standardize covariates to mean 0, sample SD 1 (the default).
    #[arg(long, overrides_with = "no_standardize")]
    pub standardize: bool,
    #[arg(long)]
    pub no_standardize: bool,
    /// Expectile index in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Penalty level; default n^0.4.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Adaptive weight exponent.
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Run the selection stage (the default).
    #[arg(long, overrides_with = "no_penalize")]
    pub penalize: bool,
    #[arg(long)]
    pub no_penalize: bool,
    /// Include an unpenalized intercept (the default).
    #[arg(long, overrides_with = "no_intercept")]
    pub intercept: bool,
    #[arg(long)]
    pub no_intercept: bool,
    /// Standard error method.
    #[arg(long, value_enum, default_value_t = SeArg::Plugin)]
    pub se: SeArg,
    /// Bootstrap replicates when --se bootstrap.
    #[arg(long, default_value_t = 200)]
    pub boot_reps: usize,
    /// Seed for the bootstrap resampler.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KmConventionArg::Censoring)]
    pub km_convention: KmConventionArg,
    /// Lower bound applied to the weight denominator.
    #[arg(long, default_value_t = 0.01)]
    pub g_floor: f64,
    /// Confidence level for the intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for the bootstrap; 0 = library default.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl FitArgs {
    pub fn standardize(&self) -> bool {
        !self.no_standardize
    }
    pub fn penalize(&self) -> bool {
        !self.no_penalize
    }
    pub fn intercept(&self) -> bool {
        !self.no_intercept
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Sample size per replication.
    #[arg(long)]
    pub n: usize,
    /// Number of covariates (the first five slopes are nonzero).
    #[arg(long)]
    pub p: usize,
    #[arg(long, value_enum, default_value_t = ErrorArg::Gumbel)]
    pub error: ErrorArg,
    /// Target censoring rate in (0, 1).
    #[arg(long, default_value_t = 0.25)]
    pub censoring_rate: f64,
    /// sqrt-n, n-0.4, or fixed:<value>.
    #[arg(long, value_parser = parse_lambda_rule, default_value = "n-0.4")]
    pub lambda_rule: LambdaRule,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Comma-separated list of methods to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "expectile")]
    pub methods: Vec<MethodArg>,
    #[arg(long, value_enum, default_value_t = InterceptModeArg::Without)]
    pub intercept_mode: InterceptModeArg,
    /// Run the selection stage (the default).
    #[arg(long, overrides_with = "no_penalize")]
    pub penalize: bool,
    #[arg(long)]
    pub no_penalize: bool,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = KmConventionArg::Censoring)]
    pub km_convention: KmConventionArg,
    #[arg(long, default_value_t = 0.01)]
    pub g_floor: f64,
    /// Output basename; writes <out>.csv and <out>.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 = library default.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl SimulateArgs {
    pub fn penalize(&self) -> bool {
        !self.no_penalize
    }
}

#[derive(Debug, Args)]
pub struct KmArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = KmConventionArg::Censoring)]
    pub km_convention: KmConventionArg,
    /// Write the curve CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
