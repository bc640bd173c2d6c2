//! Command-line front end: argument parsing, manifests and reports.

mod commands;
pub mod format;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::execute;
pub use manifest::{
    Command, ModelParams, NumericMode, OracleParams, OutputFormat, RunManifest, SpecDocument,
    SweepGrid,
};

/// A failed run: message for stderr plus process exit code
/// (1 usage/validation, 2 no CVT up to the maximum level, 3 invariant violation).
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Parser, Debug)]
#[command(
    name = "cantor-cvt",
    version,
    about = "Centroidal Voronoi tessellations of Cantor measures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Verb,
}

#[derive(Subcommand, Debug)]
pub enum Verb {
    /// List every CVT with n generators at a fixed level m.
    Cvt {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u32,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Raise the level until a CVT exists and report the best one.
    Optimal {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m_start: u32,
        #[arg(long, default_value_t = 14)]
        m_max: u32,
        /// Keep going to m-max and record the best CVT of every level.
        #[arg(long)]
        per_level: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Symmetric family r1 = r2 = r, p1 = 1/2 over a grid of r; one CSV row per CVT.
    Sweep {
        #[arg(long, default_value = "0.30")]
        r_min: String,
        #[arg(long, default_value = "0.50")]
        r_max: String,
        #[arg(long, default_value = "0.005")]
        step: String,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 12)]
        m: u32,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Independent cross-checks.
    Oracle {
        #[command(subcommand)]
        which: OracleVerb,
    },
    /// Level-dependent measures described by a spec file.
    Generalized {
        #[command(subcommand)]
        which: GeneralizedVerb,
    },
    /// Re-run the manifest embedded in a report (or a bare manifest file).
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum OracleVerb {
    /// Lloyd iteration on the level-m atoms against the best CVT at level m.
    Lloyd {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u32,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Exact optimum over contiguous block partitions against the best CVT.
    Dp {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u32,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Truncated-sum moments against the closed forms.
    Moments {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        m: u32,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Subcommand, Debug)]
pub enum GeneralizedVerb {
    Cvt {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: u32,
        #[command(flatten)]
        search: SearchArgs,
    },
    Optimal {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        m_start: u32,
        #[arg(long, default_value_t = 14)]
        m_max: u32,
        #[arg(long)]
        per_level: bool,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Symmetric ratio: sets r1 = r2 = r.
    #[arg(long, conflicts_with_all = ["r1", "r2"])]
    pub r: Option<String>,
    #[arg(long, requires = "r2")]
    pub r1: Option<String>,
    #[arg(long, requires = "r1")]
    pub r2: Option<String>,
    #[arg(long, default_value = "1/2")]
    pub p1: String,
}

impl ModelArgs {
    fn params(&self) -> Result<ModelParams, CliError> {
        match (&self.r, &self.r1, &self.r2) {
            (Some(r), _, _) => Ok(ModelParams {
                r1: r.clone(),
                r2: r.clone(),
                p1: self.p1.clone(),
            }),
            (None, Some(r1), Some(r2)) => Ok(ModelParams {
                r1: r1.clone(),
                r2: r2.clone(),
                p1: self.p1.clone(),
            }),
            _ => Err(CliError::usage("give either --r or both --r1 and --r2")),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SearchArgs {
    /// Slack on the gap inequalities (default 1e-12, or 0 with --rational).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Exact rational arithmetic.
    #[arg(long)]
    pub rational: bool,
    #[arg(long)]
    pub symmetry_pruning: bool,
    /// Accept r1 + r2 = 1.
    #[arg(long)]
    pub allow_degenerate_gaps: bool,
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

impl SearchArgs {
    fn apply(&self, manifest: &mut RunManifest) {
        manifest.numeric = if self.rational {
            NumericMode::Rational
        } else {
            NumericMode::Float
        };
        manifest.tolerance = self
            .tolerance
            .unwrap_or(if self.rational { 0.0 } else { 1e-12 });
        manifest.symmetry_pruning = self.symmetry_pruning;
        manifest.allow_degenerate_gaps = self.allow_degenerate_gaps;
        manifest.parallel = self.parallel;
        if let Some(format) = self.format {
            manifest.format = format;
        }
        manifest.out = self.out.as_ref().map(|p| p.display().to_string());
    }
}

/// Turns parsed arguments into a manifest.
pub fn manifest_from_args(verb: &Verb) -> Result<RunManifest, CliError> {
    let manifest = match verb {
        Verb::Cvt {
            model,
            n,
            m,
            search,
        } => {
            let mut manifest = RunManifest::new(Command::Cvt, *n);
            manifest.model = Some(model.params()?);
            manifest.m = Some(*m);
            search.apply(&mut manifest);
            manifest
        }
        Verb::Optimal {
            model,
            n,
            m_start,
            m_max,
            per_level,
            search,
        } => {
            let mut manifest = RunManifest::new(Command::Optimal, *n);
            manifest.model = Some(model.params()?);
            manifest.m_start = Some(*m_start);
            manifest.m_max = Some(*m_max);
            manifest.per_level = *per_level;
            search.apply(&mut manifest);
            manifest
        }
        Verb::Sweep {
            r_min,
            r_max,
            step,
            n,
            m,
            search,
        } => {
            let mut manifest = RunManifest::new(Command::Sweep, *n);
            manifest.m = Some(*m);
            manifest.sweep = Some(SweepGrid {
                r_min: r_min.clone(),
                r_max: r_max.clone(),
                step: step.clone(),
            });
            search.apply(&mut manifest);
            manifest
        }
        Verb::Oracle { which } => match which {
            OracleVerb::Lloyd {
                model,
                n,
                m,
                restarts,
                seed,
                max_iter,
                search,
            } => {
                let mut manifest = RunManifest::new(Command::OracleLloyd, *n);
                manifest.model = Some(model.params()?);
                manifest.m = Some(*m);
                manifest.oracle = Some(OracleParams {
                    restarts: *restarts,
                    seed: *seed,
                    max_iter: *max_iter,
                    ..OracleParams::default()
                });
                search.apply(&mut manifest);
                manifest
            }
            OracleVerb::Dp {
                model,
                n,
                m,
                search,
            } => {
                let mut manifest = RunManifest::new(Command::OracleDp, *n);
                manifest.model = Some(model.params()?);
                manifest.m = Some(*m);
                search.apply(&mut manifest);
                manifest
            }
            OracleVerb::Moments { model, m, search } => {
                let mut manifest = RunManifest::new(Command::OracleMoments, 1);
                manifest.model = Some(model.params()?);
                manifest.m = Some(*m);
                search.apply(&mut manifest);
                manifest
            }
        },
        Verb::Generalized { which } => match which {
            GeneralizedVerb::Cvt { spec, n, m, search } => {
                let mut manifest = RunManifest::new(Command::GeneralizedCvt, *n);
                manifest.spec = Some(SpecDocument::load(spec)?);
                manifest.m = Some(*m);
                search.apply(&mut manifest);
                manifest
            }
            GeneralizedVerb::Optimal {
                spec,
                n,
                m_start,
                m_max,
                per_level,
                search,
            } => {
                let mut manifest = RunManifest::new(Command::GeneralizedOptimal, *n);
                manifest.spec = Some(SpecDocument::load(spec)?);
                manifest.m_start = Some(*m_start);
                manifest.m_max = Some(*m_max);
                manifest.per_level = *per_level;
                search.apply(&mut manifest);
                manifest
            }
        },
        Verb::Replay { manifest, out } => {
            let text = std::fs::read_to_string(manifest)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", manifest.display())))?;
            let mut parsed = manifest_from_json(&text)?;
            parsed.out = out.as_ref().map(|p| p.display().to_string());
            parsed
        }
    };
    Ok(manifest)
}

/// Accepts either a bare manifest or a report with a `manifest` field.
pub fn manifest_from_json(text: &str) -> Result<RunManifest, CliError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::usage(format!("not a JSON document: {e}")))?;
    let inner = value.get("manifest").cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| CliError::usage(format!("invalid manifest: {e}")))
}

/// Parses `args`, runs the command and writes the report. Returns the exit
/// code.
pub fn run<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match manifest_from_args(&cli.command).and_then(|m| {
        let body = execute(&m)?;
        write_output(m.out.as_deref(), &body)
    }) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

fn write_output(out: Option<&str>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| CliError::usage(format!("cannot write {path}: {e}"))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}
