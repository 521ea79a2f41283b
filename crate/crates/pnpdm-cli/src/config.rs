//! TOML experiment configuration: schema, validation with field paths, and
//! `--override key=value` application.

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schedule: ScheduleSection,
    pub coupling: CouplingSection,
    pub likelihood: LikelihoodSection,
    pub prior: PriorSection,
    pub sampler: SamplerSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// One of "edm", "ve", "vp".
    #[serde(default = "default_family")]
    pub family: String,
    #[serde(default = "default_sigma_min")]
    pub sigma_min: f64,
    #[serde(default = "default_sigma_max")]
    pub sigma_max: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// One of "sde", "ode".
    #[serde(default = "default_solver")]
    pub solver: String,
}

fn default_family() -> String {
    "edm".into()
}
fn default_sigma_min() -> f64 {
    0.002
}
fn default_sigma_max() -> f64 {
    80.0
}
fn default_steps() -> usize {
    100
}
fn default_solver() -> String {
    "sde".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub rho0: f64,
    pub rho_min: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSection {
    /// One of "dense", "conv", "downsample", "cdp", "fpr".
    pub model: String,
    pub sigma_y: f64,
    /// One of "auto", "exact", "lmc".
    #[serde(default = "default_method")]
    pub method: String,
    /// LMC step size; required when method resolves to "lmc".
    pub gamma: Option<f64>,
    /// LMC iteration count; required when method resolves to "lmc".
    pub lmc_steps: Option<usize>,

    /// Image geometry (required for conv/downsample/cdp/fpr).
    pub height: Option<usize>,
    pub width: Option<usize>,

    /// Dense model: NPY path of an m-by-n matrix.
    pub matrix: Option<PathBuf>,
    /// Circulant model: NPY path of an H-by-W kernel image.
    pub kernel: Option<PathBuf>,
    /// Downsampling factor.
    pub factor: Option<usize>,
    /// CDP mask as an NPY array of shape (2, H, W): real and imaginary
    /// parts. Generated from the run seed and persisted when omitted.
    pub mask: Option<PathBuf>,
    #[serde(default = "default_pad_factor")]
    pub pad_factor: usize,

    /// Measured data (NPY). Exactly one of `measurement` and `truth` must
    /// be set; with `truth`, data are simulated deterministically from the
    /// run seed.
    pub measurement: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

fn default_method() -> String {
    "auto".into()
}
fn default_pad_factor() -> usize {
    2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    /// One of "gaussian", "gmm".
    pub kind: String,
    /// Gaussian: NPY paths for the mean (n) and covariance (n×n).
    pub mean: Option<PathBuf>,
    pub covariance: Option<PathBuf>,
    /// GMM: NPY paths for weights (K), means (K×n), covariances (K×n×n).
    pub weights: Option<PathBuf>,
    pub means: Option<PathBuf>,
    pub covariances: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    /// One of "zeros", "std_normal", "uniform".
    #[serde(default = "default_init")]
    pub init: String,
    #[serde(default)]
    pub keep_iterates: bool,
}

fn default_thin() -> usize {
    1
}
fn default_chains() -> usize {
    1
}
fn default_init() -> String {
    "zeros".into()
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// PSNR peak (data range); defaults to 1.0.
    pub peak: Option<f64>,
}

/// Parse `key=value` override strings and apply them to the raw TOML tree
/// before deserialization. Keys are dotted paths (`sampler.seed=7`); values
/// are parsed as TOML scalars, falling back to strings.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for entry in overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{entry}' is not of the form key=value"))?;
        let parsed: toml::Value = if let Ok(i) = value.parse::<i64>() {
            toml::Value::Integer(i)
        } else if let Ok(f) = value.parse::<f64>() {
            toml::Value::Float(f)
        } else if let Ok(b) = value.parse::<bool>() {
            toml::Value::Boolean(b)
        } else {
            toml::Value::String(value.trim_matches('"').to_string())
        };
        let parts: Vec<&str> = key.split('.').collect();
        if parts.is_empty() || parts.iter().any(|p| p.is_empty()) {
            bail!("override key '{key}' is malformed");
        }
        let mut node = &mut *table;
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| anyhow!("override key '{key}': '{part}' is not a table"))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parsed);
    }
    Ok(())
}

/// Load, override, and schema-check a config file. Errors carry field paths.
pub fn load(path: &Path, overrides: &[String]) -> Result<(Config, String)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("failed to read config {}", path.display()))?;
    let mut table: toml::Table = text
        .parse()
        .with_context(|| format!("config {} is not valid TOML", path.display()))?;
    apply_overrides(&mut table, overrides)?;
    let canonical = toml::to_string(&table).context("failed to re-serialize config")?;
    let config: Config = table
        .try_into()
        .map_err(|e| anyhow!("config schema error: {e}"))?;
    config.validate()?;
    Ok((config, canonical))
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        match self.schedule.family.as_str() {
            "edm" | "ve" | "vp" => {}
            other => bail!("schedule.family: unknown family '{other}' (expected edm|ve|vp)"),
        }
        match self.schedule.solver.as_str() {
            "sde" | "ode" => {}
            other => bail!("schedule.solver: unknown solver '{other}' (expected sde|ode)"),
        }
        if !(self.schedule.sigma_min > 0.0 && self.schedule.sigma_max > self.schedule.sigma_min) {
            bail!("schedule.sigma_min/sigma_max: need 0 < sigma_min < sigma_max");
        }
        if self.schedule.steps == 0 {
            bail!("schedule.steps: must be >= 1");
        }

        if !(self.coupling.rho0 > 0.0) {
            bail!("coupling.rho0: must be positive");
        }
        if !(self.coupling.rho_min > 0.0 && self.coupling.rho_min <= self.coupling.rho0) {
            bail!("coupling.rho_min: must satisfy 0 < rho_min <= rho0");
        }
        if !(self.coupling.alpha > 0.0 && self.coupling.alpha <= 1.0) {
            bail!("coupling.alpha: must lie in (0, 1]");
        }

        let lk = &self.likelihood;
        if !(lk.sigma_y > 0.0) {
            bail!("likelihood.sigma_y: must be positive");
        }
        let model_is_linear = match lk.model.as_str() {
            "dense" => {
                if lk.matrix.is_none() {
                    bail!("likelihood.matrix: required for model = \"dense\"");
                }
                true
            }
            "conv" => {
                if lk.kernel.is_none() {
                    bail!("likelihood.kernel: required for model = \"conv\"");
                }
                require_geometry(lk)?;
                true
            }
            "downsample" => {
                if lk.factor.is_none() {
                    bail!("likelihood.factor: required for model = \"downsample\"");
                }
                require_geometry(lk)?;
                true
            }
            "cdp" => {
                require_geometry(lk)?;
                false
            }
            "fpr" => {
                require_geometry(lk)?;
                if lk.pad_factor < 1 {
                    bail!("likelihood.pad_factor: must be >= 1");
                }
                false
            }
            other => bail!(
                "likelihood.model: unknown model '{other}' (expected dense|conv|downsample|cdp|fpr)"
            ),
        };
        let method = match lk.method.as_str() {
            "auto" => {
                if model_is_linear {
                    "exact"
                } else {
                    "lmc"
                }
            }
            "exact" => {
                if !model_is_linear {
                    bail!(
                        "likelihood.method: exact conjugate sampling requires a linear model, got '{}'",
                        lk.model
                    );
                }
                "exact"
            }
            "lmc" => "lmc",
            other => bail!("likelihood.method: unknown method '{other}' (expected auto|exact|lmc)"),
        };
        if method == "lmc" {
            if let Some(g) = lk.gamma {
                if !(g > 0.0) {
                    bail!("likelihood.gamma: must be positive");
                }
            }
            if lk.lmc_steps == Some(0) {
                bail!("likelihood.lmc_steps: must be >= 1");
            }
        }
        match (&lk.measurement, &lk.truth) {
            (Some(_), Some(_)) => {
                bail!("likelihood.measurement/truth: set exactly one, not both")
            }
            (None, None) => bail!("likelihood.measurement/truth: one of the two is required"),
            _ => {}
        }

        let pr = &self.prior;
        match pr.kind.as_str() {
            "gaussian" => {
                if pr.mean.is_none() || pr.covariance.is_none() {
                    bail!("prior.mean/prior.covariance: required for kind = \"gaussian\"");
                }
            }
            "gmm" => {
                if pr.weights.is_none() || pr.means.is_none() || pr.covariances.is_none() {
                    bail!(
                        "prior.weights/prior.means/prior.covariances: required for kind = \"gmm\""
                    );
                }
            }
            other => bail!("prior.kind: unknown kind '{other}' (expected gaussian|gmm)"),
        }

        let sm = &self.sampler;
        if sm.iterations == 0 {
            bail!("sampler.iterations: must be >= 1");
        }
        if sm.burn_in >= sm.iterations {
            bail!(
                "sampler.burn_in: must be below sampler.iterations ({} >= {})",
                sm.burn_in,
                sm.iterations
            );
        }
        if sm.thin == 0 {
            bail!("sampler.thin: must be >= 1");
        }
        if sm.chains == 0 {
            bail!("sampler.chains: must be >= 1");
        }
        match sm.init.as_str() {
            "zeros" | "std_normal" | "uniform" => {}
            other => bail!("sampler.init: unknown init '{other}' (expected zeros|std_normal|uniform)"),
        }

        if let Some(peak) = self.io.peak {
            if !(peak > 0.0) {
                bail!("io.peak: must be positive");
            }
        }
        Ok(())
    }

    /// Resolve the effective likelihood method ("exact" or "lmc").
    pub fn method(&self) -> &'static str {
        match self.likelihood.method.as_str() {
            "exact" => "exact",
            "lmc" => "lmc",
            _ => match self.likelihood.model.as_str() {
                "cdp" | "fpr" => "lmc",
                _ => "exact",
            },
        }
    }
}

fn require_geometry(lk: &LikelihoodSection) -> Result<()> {
    if lk.height.is_none() || lk.width.is_none() {
        bail!(
            "likelihood.height/width: required for model = \"{}\"",
            lk.model
        );
    }
    Ok(())
}

/// Resolve a config-relative path against the config file's directory.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const MINIMAL: &str = r#"
[schedule]
family = "edm"

[coupling]
rho0 = 10.0
rho_min = 0.3
alpha = 0.9

[likelihood]
model = "dense"
sigma_y = 0.05
matrix = "A.npy"
measurement = "y.npy"

[prior]
kind = "gaussian"
mean = "mu.npy"
covariance = "cov.npy"

[sampler]
iterations = 100
burn_in = 10
"#;

    fn write_config(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn minimal_config_parses() {
        let (_dir, path) = write_config(MINIMAL);
        let (config, _) = load(&path, &[]).unwrap();
        assert_eq!(config.schedule.steps, 100);
        assert_eq!(config.method(), "exact");
        assert_eq!(config.sampler.thin, 1);
    }

    #[test]
    fn overrides_change_values_and_types() {
        let (_dir, path) = write_config(MINIMAL);
        let overrides = vec![
            "sampler.seed=42".to_string(),
            "coupling.rho_min=0.05".to_string(),
            "sampler.keep_iterates=true".to_string(),
        ];
        let (config, _) = load(&path, &overrides).unwrap();
        assert_eq!(config.sampler.seed, 42);
        assert_eq!(config.coupling.rho_min, 0.05);
        assert!(config.sampler.keep_iterates);
    }

    #[test]
    fn schema_error_carries_field_path() {
        let (_dir, path) = write_config(MINIMAL);
        let err = load(&path, &["coupling.alpha=1.5".to_string()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("coupling.alpha"), "error was: {err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let (_dir, path) = write_config(MINIMAL);
        let err = load(&path, &["sampler.bogus=1".to_string()]).unwrap_err();
        assert!(err.to_string().contains("schema error"), "{err}");
    }

    #[test]
    fn measurement_and_truth_are_exclusive() {
        let (_dir, path) = write_config(MINIMAL);
        let err = load(&path, &["likelihood.truth=\"t.npy\"".to_string()]).unwrap_err();
        assert!(err.to_string().contains("measurement/truth"), "{err}");
    }

    #[test]
    fn exact_method_rejected_for_nonlinear_model() {
        let (_dir, path) = write_config(MINIMAL);
        let overrides = vec![
            "likelihood.model=\"cdp\"".to_string(),
            "likelihood.method=\"exact\"".to_string(),
            "likelihood.height=8".to_string(),
            "likelihood.width=8".to_string(),
        ];
        let err = load(&path, &overrides).unwrap_err();
        assert!(err.to_string().contains("likelihood.method"), "{err}");
    }

    #[test]
    fn malformed_override_rejected() {
        let mut table = toml::Table::new();
        assert!(apply_overrides(&mut table, &["no_equals_sign".to_string()]).is_err());
    }
}
