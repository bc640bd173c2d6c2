//! Serializable description of a run. Every report embeds the manifest it
//! was produced from, and [`super::execute`] reproduces the report from the
//! manifest alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CvtError;
use crate::generalized::GeneralizedIfsSpec;
use crate::ifs_model::{ContractionMap, IfsModel};
use crate::scalar::{parse_ratio, Scalar};

use super::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Cvt,
    Optimal,
    Sweep,
    OracleLloyd,
    OracleDp,
    OracleMoments,
    GeneralizedCvt,
    GeneralizedOptimal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    #[default]
    Float,
    Rational,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Model parameters kept as the text the user gave (`"1/3"`, `"0.4375"`),
/// so rational runs stay exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r1: String,
    pub r2: String,
    pub p1: String,
}

impl ModelParams {
    pub fn symmetric(r: &str) -> Self {
        Self {
            r1: r.to_string(),
            r2: r.to_string(),
            p1: "1/2".to_string(),
        }
    }

    pub fn build<T: Scalar>(&self, allow_degenerate_gaps: bool) -> Result<IfsModel<T>, CliError> {
        let r1 = parse_number::<T>("r1", &self.r1)?;
        let r2 = parse_number::<T>("r2", &self.r2)?;
        let p1 = parse_number::<T>("p1", &self.p1)?;
        IfsModel::new(r1, r2, p1, allow_degenerate_gaps).map_err(CliError::from)
    }
}

pub(crate) fn parse_number<T: Scalar>(name: &str, text: &str) -> Result<T, CliError> {
    parse_ratio(text)
        .map(|r| T::from_ratio(&r))
        .ok_or_else(|| CliError::usage(format!("cannot parse {name} = {text:?} as a number")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub r_min: String,
    pub r_max: String,
    pub step: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub lloyd_tolerance: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iter: 10_000,
            lloyd_tolerance: 1e-13,
        }
    }
}

/// A number in a spec document: either text (`"1/3"`) or a plain number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumberText {
    Int(i64),
    Float(f64),
    Text(String),
}

impl NumberText {
    fn parse<T: Scalar>(&self, what: &str) -> Result<T, CliError> {
        match self {
            NumberText::Int(i) => Ok(T::from_int(*i)),
            // shortest round-trip text, so 0.2 is read as 1/5
            NumberText::Float(f) => parse_number(what, &f.to_string()),
            NumberText::Text(s) => parse_number(what, s),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEntry {
    pub scale: NumberText,
    pub offset: NumberText,
    pub prob: NumberText,
}

/// Generalized spec document: `preamble` and `period` are lists of levels,
/// each level a list of `{scale, offset, prob}` maps in spatial order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecDocument {
    #[serde(default)]
    pub preamble: Vec<Vec<MapEntry>>,
    pub period: Vec<Vec<MapEntry>>,
}

impl SpecDocument {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        let is_toml = path.extension().is_some_and(|ext| ext == "toml");
        if is_toml {
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
        } else {
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<GeneralizedIfsSpec<T>, CliError> {
        let levels = |levels: &[Vec<MapEntry>]| -> Result<Vec<Vec<ContractionMap<T>>>, CliError> {
            levels
                .iter()
                .map(|level| {
                    level
                        .iter()
                        .map(|m| {
                            Ok(ContractionMap::new(
                                m.scale.parse("scale")?,
                                m.offset.parse("offset")?,
                                m.prob.parse("prob")?,
                            ))
                        })
                        .collect()
                })
                .collect()
        };
        GeneralizedIfsSpec::new(levels(&self.preamble)?, levels(&self.period)?)
            .map_err(CliError::from)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecDocument>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_start: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<u32>,
    #[serde(default)]
    pub numeric: NumericMode,
    pub tolerance: f64,
    #[serde(default)]
    pub symmetry_pruning: bool,
    #[serde(default)]
    pub allow_degenerate_gaps: bool,
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub per_level: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleParams>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl RunManifest {
    pub fn new(command: Command, n: usize) -> Self {
        Self {
            command,
            model: None,
            spec: None,
            n,
            m: None,
            m_start: None,
            m_max: None,
            numeric: NumericMode::Float,
            tolerance: 1e-12,
            symmetry_pruning: false,
            allow_degenerate_gaps: false,
            parallel: false,
            per_level: false,
            sweep: None,
            oracle: None,
            format: if command == Command::Sweep {
                OutputFormat::Csv
            } else {
                OutputFormat::Json
            },
            out: None,
        }
    }

    pub fn model_params(&self) -> Result<&ModelParams, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::usage("model parameters (--r or --r1/--r2/--p1) are required"))
    }

    pub fn spec_document(&self) -> Result<&SpecDocument, CliError> {
        self.spec
            .as_ref()
            .ok_or_else(|| CliError::usage("--spec is required"))
    }

    pub fn level(&self) -> Result<u32, CliError> {
        self.m.ok_or_else(|| CliError::usage("--m is required"))
    }
}

impl From<CvtError> for CliError {
    fn from(error: CvtError) -> Self {
        let code = match error {
            CvtError::NoCvtFoundUpToMMax { .. } => 2,
            _ => 1,
        };
        CliError {
            code,
            message: error.to_string(),
        }
    }
}
