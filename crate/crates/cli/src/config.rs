use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surface_algebroid::hypersurface::PresetSpec;

use crate::output::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "surfalg",
    version,
    about = "Killing-field algebroids of hypersurfaces and surface reconstruction from (g, II)"
)]
pub struct Cli {
    /// Worker threads for sampling and grid sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the algebroid identities, the reconstruction conditions and the
    /// induced fundamental forms of a preset.
    Analyze(AnalyzeArgs),
    /// Integrate the frame equations over the chart grid and export the surface.
    Reconstruct(ReconstructArgs),
    /// Integrate around a rectangle in the first two chart axes and report how
    /// far the frame fails to close.
    Holonomy(HolonomyArgs),
    /// List the built-in presets with their parameters.
    Presets(PresetsArgs),
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Built-in immersion: plane, sphere, cylinder, graph or torus.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// Preset parameter, repeatable (e.g. --param R=2).
    #[arg(long = "param", value_name = "KEY=VALUE")]
    pub params: Vec<String>,

    /// Chart dimension of the preset.
    #[arg(long, default_value_t = 2)]
    pub n: usize,

    /// Grid samples per axis for a preset chart.
    #[arg(long, value_name = "N")]
    pub grid: Option<usize>,

    /// Gridded (g, II) data as JSON, instead of a preset.
    #[arg(long, value_name = "PATH")]
    pub fields: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Override a pass/fail threshold, repeatable (e.g. --tolerance jacobi=1e-5).
    #[arg(long = "tolerance", value_name = "KEY=VALUE")]
    pub tolerances: Vec<String>,

    /// Where to write the JSON report (default: $SURFALG_OUT_DIR/<command>.json,
    /// else stdout).
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub common: CommonArgs,

    /// Random sample points per residual.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Use central differences even though the preset has exact jets.
    #[arg(long)]
    pub finite_difference: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormsSource {
    /// Classical first and second fundamental forms of the immersion.
    Classical,
    /// Forms rebuilt from the algebroid inclusion and its normal.
    Omega,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub common: CommonArgs,

    /// RK4 steps per unit of chart length.
    #[arg(long, default_value_t = 512.0)]
    pub steps: f64,

    /// Base point, comma separated (default: chart centre).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_name = "U")]
    pub x0: Option<Vec<f64>>,

    /// Which forms of a preset drive the integration.
    #[arg(long, value_enum, default_value_t = FormsSource::Classical)]
    pub forms: FormsSource,

    /// Nodes re-integrated along the reversed axis order.
    #[arg(long, default_value_t = 64)]
    pub check_nodes: usize,

    /// Mesh output: .obj (n = 2) or .csv (default: $SURFALG_OUT_DIR/mesh.obj or
    /// positions.csv, else not written).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Also write the forms of a preset sampled on its grid (JSON, or CSV by
    /// extension).
    #[arg(long, value_name = "PATH")]
    pub dump_fields: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HolonomyArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub common: CommonArgs,

    #[arg(long, default_value_t = 512.0)]
    pub steps: f64,

    /// Lower corner of the loop in the first two axes (default: centre - 0.5).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_name = "U")]
    pub lower: Option<Vec<f64>>,

    /// Upper corner of the loop in the first two axes (default: centre + 0.5).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, value_name = "U")]
    pub upper: Option<Vec<f64>>,

    /// Add a Gaussian bump of this amplitude to II, breaking Codazzi.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub bump: f64,

    #[arg(long, default_value_t = 0.5)]
    pub bump_width: f64,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

/// Where the tensor data come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Preset(PresetSpec),
    Fields(PathBuf),
}

impl SourceArgs {
    pub fn resolve(&self) -> Result<DataSource, CliError> {
        match (&self.preset, &self.fields) {
            (Some(_), Some(_)) => Err(CliError::config("give either --preset or --fields, not both")),
            (None, None) => Err(CliError::config("no data source: give --preset NAME or --fields PATH")),
            (None, Some(path)) => {
                if !self.params.is_empty() || self.grid.is_some() {
                    return Err(CliError::config("--param and --grid only apply to presets"));
                }
                Ok(DataSource::Fields(path.clone()))
            }
            (Some(name), None) => {
                if self.n == 0 {
                    return Err(CliError::config("--n must be at least 1"));
                }
                if let Some(g) = self.grid {
                    if g < 2 {
                        return Err(CliError::config(format!("--grid must be at least 2, got {g}")));
                    }
                }
                let mut spec = PresetSpec::new(name.clone(), self.n);
                spec.grid = self.grid;
                for (key, value) in parse_pairs("--param", &self.params)? {
                    spec.params.insert(key, value);
                }
                Ok(DataSource::Preset(spec))
            }
        }
    }
}

/// Threshold overrides, checked against the keys a command understands.
#[derive(Debug, Clone, Default)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    pub fn parse(raw: &[String], allowed: &[&str]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (key, value) in parse_pairs("--tolerance", raw)? {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::config(format!(
                    "unknown tolerance '{key}' (accepted: {})",
                    allowed.join(", ")
                )));
            }
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::config(format!("tolerance '{key}' must be positive, got {value}")));
            }
            map.insert(key, value);
        }
        Ok(Tolerances(map))
    }

    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    pub fn overrides(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

fn parse_pairs(flag: &str, raw: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    raw.iter()
        .map(|item| {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{flag} expects KEY=VALUE, got '{item}'")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{flag} {key}: '{value}' is not a number")))?;
            Ok((key.trim().to_string(), value))
        })
        .collect()
}

pub fn positive(flag: &str, value: f64) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(format!("{flag} must be positive, got {value}")))
    }
}
