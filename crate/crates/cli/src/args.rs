use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use netlab::generators::{GeneratorConfig, Mechanism};
use netlab::netpanel::{TieClass, TraitKind};
use netlab::permnet::DEFAULT_COUNT_THRESHOLD;
use serde::{Deserialize, Serialize};

fn gen_defaults() -> GeneratorConfig {
    GeneratorConfig::default()
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    Mechanism::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Mechanism::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown mechanism `{s}` (expected one of {})", names.join(", "))
    })
}

fn parse_trait_kind(s: &str) -> Result<TraitKind, String> {
    match s {
        "binary" => Ok(TraitKind::Binary),
        "count" | "count0to7" => Ok(TraitKind::Count0to7),
        _ => Err(format!("unknown trait kind `{s}` (expected binary or count)")),
    }
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("level {v} must lie in [0, 1)"))
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "netlab",
    version,
    about = "Simulate, fit and audit tie-level contagion models"
)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run the configuration in a `run_config.json`; --seed and --out still override.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic cohort panel.
    Simulate(SimulateArgs),
    /// Nearest-neighbour distances in a ball: mutual versus one-way namings.
    Nnball(NnballArgs),
    /// Fit the tie-level model per tie class.
    Fit(FitArgs),
    /// Degree-of-separation association against trait-shuffled networks.
    Permtest(PermtestArgs),
    /// Run the consistency oracles on a parameter vector.
    CheckModel(CheckModelArgs),
    /// Audit published or user-supplied estimates.
    Audit(AuditArgs),
    /// Design matrix utilities.
    Design {
        #[command(subcommand)]
        action: DesignCommand,
    },
    /// Homophily simulation, per-class fits and their audit, end to end.
    Repro(ReproArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Nnball(_) => "nnball",
            Command::Fit(_) => "fit",
            Command::Permtest(_) => "permtest",
            Command::CheckModel(_) => "check-model",
            Command::Audit(_) => "audit",
            Command::Design { .. } => "design",
            Command::Repro(_) => "repro",
        }
    }
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignCommand {
    /// Write the stacked design matrix as CSV.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_mechanism, default_value = "null")]
    pub mechanism: Mechanism,
    #[arg(long, default_value_t = gen_defaults().n_persons)]
    pub n_persons: usize,
    #[arg(long, default_value_t = gen_defaults().n_waves)]
    pub n_waves: u8,
    #[arg(long, default_value_t = gen_defaults().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = gen_defaults().fp_fraction)]
    pub fp_fraction: f64,
    #[arg(long, default_value_t = gen_defaults().naming_rate)]
    pub naming_rate: f64,
    #[arg(long, default_value_t = gen_defaults().observability)]
    pub observability: f64,
    #[arg(long, default_value_t = gen_defaults().second_name_rate)]
    pub second_name_rate: f64,
    #[arg(long, default_value_t = gen_defaults().trait_base_rate)]
    pub base_rate: f64,
    #[arg(long, default_value_t = gen_defaults().persistence, allow_hyphen_values = true)]
    pub persistence: f64,
    #[arg(long, default_value_t = gen_defaults().mechanism_strength, allow_hyphen_values = true)]
    pub strength: f64,
    #[arg(long, value_parser = parse_trait_kind, default_value = "binary")]
    pub trait_kind: TraitKind,
}

impl SimulateArgs {
    pub fn generator_config(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            mechanism: self.mechanism,
            n_persons: self.n_persons,
            n_waves: self.n_waves,
            dim: self.dim,
            fp_fraction: self.fp_fraction,
            naming_rate: self.naming_rate,
            observability: self.observability,
            second_name_rate: self.second_name_rate,
            trait_base_rate: self.base_rate,
            persistence: self.persistence,
            mechanism_strength: self.strength,
            trait_kind: self.trait_kind,
            seed,
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnballArgs {
    /// Points per replicate.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 500)]
    pub replicates: usize,
    /// CDF grid points.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long, default_value_t = 999)]
    pub n_perms: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelArgs {
    /// Directory holding persons.csv, exams.csv and ties.csv.
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, value_parser = parse_trait_kind, default_value = "binary")]
    pub trait_kind: TraitKind,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassChoice {
    All,
    Mutual,
    FpNamesLp,
    LpNamesFp,
}

impl ClassChoice {
    /// `None` for `all`.
    pub fn class(self) -> Option<TieClass> {
        match self {
            ClassChoice::All => None,
            ClassChoice::Mutual => Some(TieClass::Mutual),
            ClassChoice::FpNamesLp => Some(TieClass::FpNamesLp),
            ClassChoice::LpNamesFp => Some(TieClass::LpNamesFp),
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorArgs {
    /// Include every tie kind, not only friends.
    #[arg(long)]
    pub any_kind: bool,
    /// Do not require the tie to hold in the same direction at the previous wave.
    #[arg(long)]
    pub transient: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// `all` fits each class separately.
    #[arg(long, value_enum, default_value = "all")]
    pub tie_class: ClassChoice,
    #[command(flatten)]
    pub selector: SelectorArgs,
    #[arg(long, value_parser = parse_level, default_value = "0.95")]
    pub level: f64,
    /// Scale the sandwich by g/(g-1) for g clusters.
    #[arg(long)]
    pub cluster_correction: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermtestArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// Defaults to the last wave.
    #[arg(long)]
    pub wave: Option<u8>,
    #[arg(long, default_value_t = 3)]
    pub max_degree: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_perms: usize,
    /// Follow namings from source to target only.
    #[arg(long)]
    pub directed: bool,
    /// Count traits at or above this value are treated as present.
    #[arg(long, default_value_t = DEFAULT_COUNT_THRESHOLD)]
    pub threshold: u8,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckModelArgs {
    /// Fit JSON written by `fit`; defaults to <out>/fit_mutual.json.
    #[arg(long, conflicts_with = "params")]
    pub fit: Option<PathBuf>,
    /// JSON object with alpha, beta1, beta2, beta3, gamma[5], delta1..delta3.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Panel for the multi-naming check.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long, value_parser = parse_trait_kind, default_value = "binary")]
    pub trait_kind: TraitKind,
    /// Resolution of the joint-distribution search grid.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Wave whose dummy enters the oracle contexts.
    #[arg(long, default_value_t = 4)]
    pub wave: u8,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    Table1,
    Table2,
    Table3,
}

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::Table1 => "table1",
            Fixture::Table2 => "table2",
            Fixture::Table3 => "table3",
        }
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditArgs {
    #[arg(long, value_enum, required_unless_present = "records", conflicts_with = "records")]
    pub fixtures: Option<Fixture>,
    /// CSV with label plus coef,se or percent,lo,hi (optional group, claimed_null).
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, value_parser = parse_level, default_value = "0.95")]
    pub level: f64,
    /// A lower bound within this fraction of the estimate counts as close to 0.
    #[arg(long, default_value_t = netlab::audit::DEFAULT_NEAR_ZERO_FRACTION)]
    pub near_zero: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportArgs {
    #[command(flatten)]
    pub panel: PanelArgs,
    /// `all` stacks every class.
    #[arg(long, value_enum, default_value = "all")]
    pub tie_class: ClassChoice,
    #[command(flatten)]
    pub selector: SelectorArgs,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproArgs {
    #[arg(long, default_value_t = 2000)]
    pub n_persons: usize,
    #[arg(long, default_value_t = 4)]
    pub n_waves: u8,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    #[arg(long, default_value_t = 10.0)]
    pub strength: f64,
    #[arg(long, default_value_t = 1.5)]
    pub persistence: f64,
    #[arg(long, value_parser = parse_level, default_value = "0.95")]
    pub level: f64,
}
