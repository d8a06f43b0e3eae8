use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ghm_core::horseshoe::{make_affine_example_with, make_baker_with, CustomBranch, DEFAULT_FIBER};
use ghm_core::numeric::Interval;
use ghm_core::{Execution, GhmSpec};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Baker {
        lambda: f64,
        #[serde(default)]
        fiber: Option<[f64; 2]>,
    },
    Affine {
        a: f64,
        b: f64,
        #[serde(default)]
        fiber: Option<[f64; 2]>,
        #[serde(default)]
        alpha: Option<f64>,
    },
    Custom {
        branches: Vec<CustomBranch>,
        alpha: f64,
        #[serde(default)]
        k0: Option<f64>,
        #[serde(default)]
        fiber: Option<[f64; 2]>,
    },
}

impl MapConfig {
    pub fn build(&self) -> Result<GhmSpec, CliError> {
        let fiber = |f: &Option<[f64; 2]>| f.map_or(DEFAULT_FIBER, |[lo, hi]| Interval::new(lo, hi));
        let spec = match self {
            MapConfig::Baker { lambda, fiber: f } => make_baker_with(*lambda, fiber(f)),
            MapConfig::Affine { a, b, fiber: f, alpha } => make_affine_example_with(*a, *b, fiber(f), alpha.unwrap_or(0.5)),
            MapConfig::Custom { branches, alpha, k0, fiber: f } => GhmSpec::custom_skew(branches, *alpha, *k0, fiber(f)),
        };
        spec.map_err(|e| CliError::Config(format!("map: {e}")))
    }

    /// `(a − b)/4` for the affine family, 0.05 otherwise.
    pub fn default_delta(&self) -> f64 {
        match self {
            MapConfig::Affine { a, b, .. } => (a - b) / 4.0,
            _ => 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub grid_n: usize,
    pub strict_a4: bool,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { grid_n: 65, strict_a4: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnumerationConfig {
    /// Scales for `M(r)`, in fiber units of `[0,1] × J`; strictly decreasing.
    pub r_sweep: Vec<f64>,
    pub x_grid_n: usize,
    pub max_words: usize,
    pub max_depth: usize,
    /// Reuse and extend `cylinders.bin` in the output directory.
    pub cache: bool,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig {
            r_sweep: (3..=7).map(|k| 0.5f64.powi(k)).collect(),
            x_grid_n: 257,
            max_words: 5_000_000,
            max_depth: 64,
            cache: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    pub bins: usize,
    pub tol: f64,
    pub samples: u64,
    /// Forward iterations; derived from `resolution` when absent.
    pub iterations: Option<usize>,
    pub resolution: f64,
    /// Radii for `I(r)`, in the map's native fiber units; strictly decreasing.
    pub r_list: Vec<f64>,
    pub x_bins: usize,
    pub y_bins: usize,
    pub grid_n: usize,
    pub bounded_ratio: f64,
    pub diverging_slope: f64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            bins: 4096,
            tol: 1e-12,
            samples: 1_000_000,
            iterations: None,
            resolution: 1e-9,
            r_list: (3..=7).map(|k| 0.5f64.powi(k)).collect(),
            x_bins: 256,
            y_bins: 8192,
            grid_n: 64,
            bounded_ratio: 3.0,
            diverging_slope: -0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsConfig {
    pub delta: Option<f64>,
    pub tail_depth: usize,
    pub x_grid_n: usize,
    pub pair_budget: usize,
    pub fatness_depth: usize,
}

impl Default for ConditionsConfig {
    fn default() -> Self {
        ConditionsConfig { delta: None, tail_depth: 4, x_grid_n: 33, pair_budget: 20_000_000, fatness_depth: 12 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub depth: usize,
    pub lattice_n: usize,
    pub x_grid_n: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { depth: 8, lattice_n: 64, x_grid_n: 129 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Any of `csv`, `json`, `svg`.
    pub formats: Vec<String>,
    /// Iterates drawn by the strip figure.
    pub figure_n: Vec<usize>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("ghm-out"),
            formats: vec!["csv".into(), "json".into(), "svg".into()],
            figure_n: vec![1, 5],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory so that every run is reproducible.
    pub seed: Option<u64>,
    #[serde(default)]
    pub exec: Execution,
    pub map: Option<MapConfig>,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub enumeration: EnumerationConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub conditions: ConditionsConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn strictly_decreasing(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.is_empty() {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if v.iter().any(|r| !(*r > 0.0)) || v.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Config(format!("{name} must be positive and strictly decreasing, got {v:?}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Overlays `file` on `base`: every key present in the file wins.
    pub fn merged(base: toml::Table, file: toml::Table) -> Result<Self, CliError> {
        let mut merged = base;
        merge(&mut merged, file);
        let text = toml::to_string(&merged).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn load_file(path: &Path) -> Result<toml::Table, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config carries a seed")
    }

    pub fn map(&self) -> &MapConfig {
        self.map.as_ref().expect("validated config carries a map")
    }

    pub fn delta(&self) -> f64 {
        self.conditions.delta.unwrap_or_else(|| self.map().default_delta())
    }

    /// Checks the invariants and builds the map.
    pub fn validate(&self) -> Result<GhmSpec, CliError> {
        if self.seed.is_none() {
            return Err(CliError::Config("seed is required".into()));
        }
        let map = self.map.as_ref().ok_or_else(|| CliError::Config("no [map] section or --family given".into()))?;
        let spec = map.build()?;
        strictly_decreasing("enumeration.r_sweep", &self.enumeration.r_sweep)?;
        strictly_decreasing("measure.r_list", &self.measure.r_list)?;
        if let Some(d) = self.conditions.delta {
            if !(d > 0.0) {
                return Err(CliError::Config(format!("conditions.delta must be positive, got {d}")));
            }
        }
        for f in &self.output.formats {
            if !["csv", "json", "svg"].contains(&f.as_str()) {
                return Err(CliError::Config(format!("unknown output format {f:?}")));
            }
        }
        std::fs::create_dir_all(&self.output.directory).map_err(|e| {
            CliError::Config(format!("output directory {} is not writable: {e}", self.output.directory.display()))
        })?;
        let probe = self.output.directory.join(".ghm-write-probe");
        std::fs::write(&probe, b"").and_then(|_| std::fs::remove_file(&probe)).map_err(|e| {
            CliError::Config(format!("output directory {} is not writable: {e}", self.output.directory.display()))
        })?;
        Ok(spec)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                // a different family replaces the whole map section
                if b.get("family").is_some() && o.get("family").is_some() && b.get("family") != o.get("family") {
                    *b = o;
                } else {
                    merge(b, o);
                }
            }
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
