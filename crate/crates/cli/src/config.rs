//! Experiment configuration: a TOML file plus `--set path=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use she_core::covariance::CovarianceModel;
use she_core::galerkin::{GalerkinSystem, InitialData, SystemSpec};
use she_core::integrators::StepScheme;

use crate::error::{CliError, CliResult};

/// Overrides `output.directory` when set.
pub const OUTPUT_DIR_ENV: &str = "SHE_OUTPUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: Option<SystemSection>,
    pub noise: Option<NoiseSection>,
    pub time: Option<TimeSection>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub output: OutputSection,
    pub region: Option<RegionSection>,
    pub converge: Option<ConvergeSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialSpec,
    /// Multiplies the Laplacian, e.g. `ν/2`.
    #[serde(default = "one")]
    pub diffusivity: f64,
    #[serde(default = "default_scheme")]
    pub scheme: StepScheme,
}

/// `"poly-x-1mx"`, `"mode-k"`, or an explicit coefficient list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialSpec {
    Named(String),
    Coefficients(Vec<f64>),
}

impl InitialSpec {
    pub fn resolve(&self) -> CliResult<InitialData> {
        match self {
            InitialSpec::Coefficients(c) => Ok(InitialData::Coefficients(c.clone())),
            InitialSpec::Named(name) if name == "poly-x-1mx" => Ok(InitialData::PolyX1mx),
            InitialSpec::Named(name) => name
                .strip_prefix("mode-")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(InitialData::Mode)
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "system.initial: unknown initial condition `{name}` (expected poly-x-1mx, mode-<k> or a list)"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSection {
    PowerLaw {
        exponent: f64,
        count: usize,
    },
    Weights {
        weights: Vec<f64>,
    },
    FbmField {
        hurst: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
    FractionalGaussian {
        hurst: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
    },
}

impl NoiseSection {
    pub fn model(&self) -> CliResult<CovarianceModel> {
        let built = match self {
            NoiseSection::PowerLaw { exponent, count } => {
                CovarianceModel::power_law(*exponent, *count)
            }
            NoiseSection::Weights { weights } => CovarianceModel::weights(weights.clone()),
            NoiseSection::FbmField { hurst, nodes } => {
                CovarianceModel::fbm_field(*hurst).map(|m| m.with_nodes(*nodes))
            }
            NoiseSection::FractionalGaussian { hurst, nodes } => {
                CovarianceModel::fractional_gaussian(*hurst).map(|m| m.with_nodes(*nodes))
            }
        };
        built.map_err(|e| CliError::Config(format!("noise: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub tau: f64,
    pub steps: Option<usize>,
    pub horizon: Option<f64>,
}

impl TimeSection {
    pub fn n_steps(&self) -> CliResult<usize> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(CliError::Config(format!(
                "time.tau must be positive, got {}",
                self.tau
            )));
        }
        match (self.steps, self.horizon) {
            (Some(s), None) if s > 0 => Ok(s),
            (None, Some(h)) if h > 0.0 => Ok(((h / self.tau).round() as usize).max(1)),
            (Some(_), Some(_)) => Err(CliError::Config(
                "time: give exactly one of `steps` and `horizon`".into(),
            )),
            (None, None) => Err(CliError::Config(
                "time: one of `steps` or `horizon` is required".into(),
            )),
            _ => Err(CliError::Config(
                "time: steps and horizon must be positive".into(),
            )),
        }
    }

    pub fn horizon(&self) -> CliResult<f64> {
        Ok(self.n_steps()? as f64 * self.tau)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            paths: default_paths(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "yes")]
    pub log_scale: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            formats: default_formats(),
            log_scale: true,
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub beta1: [f64; 2],
    pub beta0: [f64; 2],
    #[serde(default = "default_grid")]
    pub beta1_count: usize,
    #[serde(default = "default_grid")]
    pub beta0_count: usize,
    #[serde(default = "default_classifier")]
    pub classifier: ClassifierKind,
    /// Paths per cell for the Monte Carlo classifier.
    #[serde(default = "default_region_paths")]
    pub paths: usize,
    #[serde(default = "default_region_horizon")]
    pub horizon: f64,
    /// Falls back to `time.tau`, then 0.01.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub levels: Vec<[usize; 2]>,
    pub reference: [usize; 2],
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

fn default_initial() -> InitialSpec {
    InitialSpec::Named("poly-x-1mx".into())
}
fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_scheme() -> StepScheme {
    StepScheme::ImplicitEuler
}
fn default_nodes() -> usize {
    she_core::covariance::DEFAULT_KERNEL_NODES
}
fn default_paths() -> usize {
    1000
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json, Format::Svg]
}
fn default_grid() -> usize {
    64
}
fn default_classifier() -> ClassifierKind {
    ClassifierKind::Analytic
}
fn default_region_paths() -> usize {
    400
}
fn default_region_horizon() -> f64 {
    5.0
}
fn default_checkpoints() -> usize {
    she_core::convergence::DEFAULT_CHECKPOINTS
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` to a parsed document, creating tables as needed.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects path=value, got `{assignment}`")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("--set: malformed path `{path}`")));
    }
    let mut table = doc;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("--set: `{key}` in `{path}` is not a table"))
        })?;
    }
    table.insert(
        keys[keys.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

/// Reads a config file and applies overrides.
pub fn load(path: &Path, overrides: &[String]) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let located = |e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display()));
    if overrides.is_empty() {
        return toml::from_str::<RunConfig>(&text).map_err(located);
    }
    let mut doc = toml::from_str::<toml::Table>(&text).map_err(located)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    toml::Value::Table(doc)
        .try_into::<RunConfig>()
        .map_err(|e| CliError::Config(format!("{} (after --set): {e}", path.display())))
}

impl RunConfig {
    pub fn system(&self) -> CliResult<&SystemSection> {
        self.system
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [system] section".into()))
    }

    pub fn noise(&self) -> CliResult<&NoiseSection> {
        self.noise
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [noise] section".into()))
    }

    pub fn time(&self) -> CliResult<&TimeSection> {
        self.time
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [time] section".into()))
    }

    pub fn region(&self) -> CliResult<&RegionSection> {
        self.region
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [region] section".into()))
    }

    pub fn converge(&self) -> CliResult<&ConvergeSection> {
        self.converge
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [converge] section".into()))
    }

    /// Assembled system from `[system]` and `[noise]`.
    pub fn build_system(&self) -> CliResult<GalerkinSystem> {
        let s = self.system()?;
        let model = self.noise()?.model()?;
        if s.n == 0 || s.m == 0 {
            return Err(CliError::Config(
                "system.n and system.m must be positive".into(),
            ));
        }
        if !(s.diffusivity > 0.0 && s.diffusivity.is_finite()) {
            return Err(CliError::Config(
                "system.diffusivity must be positive".into(),
            ));
        }
        let spec = SystemSpec::new(s.n, s.m, s.beta0, s.beta1, model);
        let sys = GalerkinSystem::assemble(spec)?;
        Ok(if s.diffusivity == 1.0 {
            sys
        } else {
            sys.with_diffusivity(s.diffusivity)
        })
    }

    /// Output directory, honoring the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output.directory.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> RunConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn overrides_create_and_replace() {
        let mut doc: toml::Table = toml::from_str("[mc]\npaths = 10\n").unwrap();
        apply_override(&mut doc, "mc.paths=5000").unwrap();
        apply_override(&mut doc, "output.directory=runs/a").unwrap();
        apply_override(&mut doc, "system.initial=[1.0, 0.5]").unwrap();
        assert_eq!(doc["mc"]["paths"].as_integer(), Some(5000));
        assert_eq!(doc["output"]["directory"].as_str(), Some("runs/a"));
        assert!(doc["system"]["initial"].is_array());
        assert!(apply_override(&mut doc, "mc.paths").is_err());
        assert!(apply_override(&mut doc, "mc.paths.x=1").is_err());
    }

    #[test]
    fn initial_conditions() {
        let named = |s: &str| InitialSpec::Named(s.into()).resolve();
        assert_eq!(named("poly-x-1mx").unwrap(), InitialData::PolyX1mx);
        assert_eq!(named("mode-3").unwrap(), InitialData::Mode(3));
        assert!(named("mode-0").is_err());
        assert!(named("gaussian").is_err());
    }

    #[test]
    fn time_needs_exactly_one_length() {
        let t = |steps, horizon| TimeSection {
            tau: 0.01,
            steps,
            horizon,
        };
        assert_eq!(t(Some(5), None).n_steps().unwrap(), 5);
        assert_eq!(t(None, Some(1.0)).n_steps().unwrap(), 100);
        assert!(t(Some(5), Some(1.0)).n_steps().is_err());
        assert!(t(None, None).n_steps().is_err());
    }

    #[test]
    fn noise_models_parse() {
        let c = parse("[noise]\nmodel = \"fbm-field\"\nhurst = 0.7\n");
        assert!(matches!(
            c.noise,
            Some(NoiseSection::FbmField { nodes: 256, .. })
        ));
        let c = parse("[noise]\nmodel = \"power-law\"\nexponent = 1.001\ncount = 100\n");
        assert!(c.noise.unwrap().model().unwrap().is_diagonal());
        assert!(toml::from_str::<RunConfig>("[noise]\nmodel = \"white\"\n").is_err());
        let bad = parse("[noise]\nmodel = \"power-law\"\nexponent = 0.5\ncount = 3\n");
        assert!(matches!(
            bad.noise.unwrap().model(),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn missing_sections_are_named() {
        let c = parse("[system]\nn = 2\nm = 2\n");
        let err = c.build_system().unwrap_err();
        assert!(err.to_string().contains("[noise]"));
        assert_eq!(err.exit_code(), 2);
    }
}
