//! Command-line grammar.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "fusion", version, about = "Semiparametric calculus for fused-data models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that the source laws of a model file align with its ideal law.
    Validate {
        model: PathBuf,
        /// Also report the strong-alignment constants.
        #[arg(long)]
        strong: bool,
        /// Largest conditional discrepancy accepted.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Dump the score operator, its adjoint, the information operator or a tangent basis.
    Operator {
        model: PathBuf,
        #[arg(long, value_enum)]
        dump: Dump,
        /// CSV output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observed-data influence function of an ideal influence function.
    Influence {
        model: PathBuf,
        /// JSON array (or `{"values": [...]}`) with the ideal influence function.
        #[arg(long)]
        psi: PathBuf,
        /// Project onto the tangent space.
        #[arg(long)]
        eif: bool,
        /// Also emit up to N free directions of the influence-function family.
        #[arg(long, value_name = "N")]
        family: Option<usize>,
        /// CSV output path; the JSON report goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Efficient influence function by solving the information equation.
    Eif {
        model: PathBuf,
        #[arg(long)]
        psi: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run DECOMPOSE on an ideal influence function.
    Decompose {
        model: PathBuf,
        #[arg(long)]
        psi: PathBuf,
        /// CSV of the components on the ideal cells.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identification functional and influence functions of a worked framework.
    Framework {
        #[arg(value_parser = parse_kind)]
        kind: fusion_core::frameworks::FrameworkKind,
        model: PathBuf,
        #[arg(long, value_enum)]
        compute: Compute,
        /// Anchor level (comma-separated labels).
        #[arg(long, value_delimiter = ',')]
        anchor: Option<Vec<String>>,
        /// Target cell of the (U, B) frameworks (comma-separated labels).
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<String>>,
        /// CSV output path for influence functions.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo study of the one-step estimator.
    Simulate {
        /// Model file with the sampling law (omit with --dgp).
        model: Option<PathBuf>,
        #[arg(long, value_parser = parse_kind)]
        framework: fusion_core::frameworks::FrameworkKind,
        /// Built-in sampling law instead of a model file.
        #[arg(long, value_enum)]
        dgp: Option<Dgp>,
        /// P(S=1) of the built-in law.
        #[arg(long, default_value_t = 0.5)]
        p_s1: f64,
        /// Sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "500,2000,8000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Seed (overridden by the FUSION_SEED environment variable).
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Project the empirical law into the model before estimating.
        #[arg(long)]
        obedient: bool,
        /// Anchor level (comma-separated labels).
        #[arg(long, value_delimiter = ',')]
        anchor: Option<Vec<String>>,
        /// CSV output path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Efficiency curves of a built-in law.
    Figure {
        #[arg(long, value_enum)]
        dgp: Dgp,
        /// Grid of P(S=1) values (default 0.05, 0.10, ..., 0.95).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dump {
    #[value(name = "A")]
    A,
    #[value(name = "Astar")]
    Astar,
    #[value(name = "info")]
    Info,
    #[value(name = "tangent")]
    Tangent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Compute {
    Phi,
    If,
    Eif,
    Demo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dgp {
    AppendixC,
}

fn parse_kind(s: &str) -> Result<fusion_core::frameworks::FrameworkKind, String> {
    s.parse().map_err(|e: fusion_core::Error| e.to_string())
}
