//! Experiment configuration file.

use std::path::{Path, PathBuf};

use levy_scale::simulate::make_scheme;
use levy_scale::{EstimationOptions, LaguerreParams, LevyModel, Result, SamplingScheme, ScaleError};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides `mc.workers`.
pub const WORKERS_ENV: &str = "SCALE_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: LevyModel,
    #[serde(default)]
    pub laguerre: LaguerreParams,
    #[serde(default)]
    pub scheme: Option<SchemeConfig>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub x_grid: XGrid,
    #[serde(default)]
    pub estimation: EstimationOptions,
    /// Where `estimate` reads observations; defaults to the output directory.
    #[serde(default)]
    pub data: Option<DataConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_c_eps")]
    pub c_eps: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_a() -> f64 {
    1.0
}

fn default_rho() -> f64 {
    0.49
}

fn default_c_eps() -> f64 {
    1.0
}

impl SchemeConfig {
    pub fn build(&self) -> Result<SamplingScheme> {
        make_scheme(self.t, self.a, self.rho, self.c_eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub replications: usize,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { replications: 100, workers: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Encodings of the curve and table outputs.
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { directory: PathBuf::from("out"), formats: vec![Format::Csv] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl XGrid {
    /// Equally spaced points; a single point sits at `min`.
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.min],
            n => {
                let h = (self.max - self.min) / (n - 1) as f64;
                (0..n).map(|i| if i + 1 == n { self.max } else { self.min + i as f64 * h }).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub directory: PathBuf,
}

/// Parsed configuration plus the raw bytes it was read from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub bytes: Vec<u8>,
    pub path: PathBuf,
}

pub fn load(path: &Path) -> Result<LoadedConfig> {
    let bytes = std::fs::read(path)
        .map_err(|e| ScaleError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let config: ExperimentConfig = serde_json::from_slice(&bytes)
        .map_err(|e| ScaleError::Config(format!("{}: {e}", path.display())))?;
    config.validate()?;
    Ok(LoadedConfig { config, bytes, path: path.to_path_buf() })
}

impl ExperimentConfig {
    /// Checks every block before any work starts.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: ScaleError| match e {
            ScaleError::Config(m) => ScaleError::Config(m),
            other => ScaleError::Config(other.to_string()),
        };
        self.model.require_npc().map_err(as_config)?;
        self.laguerre.validate()?;
        let g = &self.x_grid;
        if g.points == 0 {
            return Err(ScaleError::Config("x_grid is empty (points = 0)".into()));
        }
        if !(g.min.is_finite() && g.max.is_finite() && g.min >= 0.0 && g.max >= g.min) {
            return Err(ScaleError::Config(format!("x_grid needs 0 <= min <= max, got [{}, {}]", g.min, g.max)));
        }
        if let Some(s) = &self.scheme {
            s.build().map_err(as_config)?;
        }
        if self.output.formats.is_empty() {
            return Err(ScaleError::Config("output.formats is empty".into()));
        }
        let e = &self.estimation;
        if !(e.d_window > 0.0) || !(e.confidence > 0.0 && e.confidence < 1.0) {
            return Err(ScaleError::Config("estimation needs d_window > 0 and confidence in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<(SamplingScheme, u64)> {
        let s = self.scheme.ok_or_else(|| ScaleError::Config("this command needs a scheme block".into()))?;
        Ok((s.build()?, s.seed))
    }

    /// `mc.workers`, overridden by `SCALE_WORKERS` when set.
    pub fn workers(&self) -> Result<usize> {
        match std::env::var(WORKERS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(ScaleError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
            },
            Err(_) if self.mc.workers > 0 => Ok(self.mc.workers),
            Err(_) => Err(ScaleError::Config("mc.workers must be positive".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"model": {"c": 1.0, "D": 0.5, "q": 0.1, "jumps": {"kind": "none"}},
            "x_grid": {"min": 0, "max": 2, "points": 5}}"#
    }

    #[test]
    fn defaults_fill_optional_blocks() {
        let c: ExperimentConfig = serde_json::from_str(minimal()).unwrap();
        c.validate().unwrap();
        assert_eq!(c.laguerre, LaguerreParams::default());
        assert_eq!(c.x_grid.values(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(c.scheme().is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_blocks() {
        let bad = minimal().replace("\"points\": 5", "\"points\": 5, \"step\": 1");
        assert!(serde_json::from_str::<ExperimentConfig>(&bad).is_err());
        let empty = minimal().replace("\"points\": 5", "\"points\": 0");
        let c: ExperimentConfig = serde_json::from_str(&empty).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let npc = minimal().replace("\"c\": 1.0", "\"c\": 0.5").replace(
            "{\"kind\": \"none\"}",
            "{\"kind\": \"compound-poisson-exponential\", \"rate\": 1, \"mean\": 1}",
        );
        let c: ExperimentConfig = serde_json::from_str(&npc).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }
}
