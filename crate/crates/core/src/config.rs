//! Declarative run configuration, loaded from TOML.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Command-line flags override the matching fields after loading.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::classifier::SvmParams;
use crate::distribution::DistributionMetric;
use crate::edges::LearnOptions;
use crate::eval::{EvalSettings, InferenceMode, SourceMode};
use crate::kernel::{EdgeKernelMode, KernelParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("`{field}` is required")]
    Missing { field: &'static str },
    #[error("`{field}`: {path} does not exist")]
    NoSuchPath { field: &'static str, path: PathBuf },
    #[error("`{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub amr: Option<PathBuf>,
    pub sdg: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub edge_vectors: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub folds: usize,
    pub runs: usize,
    pub fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            folds: 11,
            runs: 25,
            fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub max_sweeps: Option<usize>,
    pub tol: Option<f64>,
    pub ridge_scale: Option<f64>,
    /// Reduce the embedding dimension to this many components first.
    pub reduce: Option<usize>,
}

impl EdgeConfig {
    pub fn options(&self) -> LearnOptions {
        let d = LearnOptions::default();
        LearnOptions {
            max_sweeps: self.max_sweeps.unwrap_or(d.max_sweeps),
            tol: self.tol.unwrap_or(d.tol),
            ridge_scale: self.ridge_scale.unwrap_or(d.ridge_scale),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    lambda: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    edge_mode: Option<EdgeKernelMode>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    workers: Option<usize>,
    mode: Option<InferenceMode>,
    sources: Option<SourceMode>,
    metric: Option<DistributionMetric>,
    bandwidth: Option<f64>,
    divergence_threshold: Option<f64>,
    #[serde(default)]
    paths: Paths,
    kernel: Option<KernelSection>,
    #[serde(default)]
    split: SplitConfig,
    svm: Option<SvmParams>,
    #[serde(default)]
    edges: EdgeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: Option<usize>,
    pub mode: InferenceMode,
    pub sources: SourceMode,
    pub paths: Paths,
    pub out: PathBuf,
    pub split: SplitConfig,
    pub edges: EdgeConfig,
    pub settings: EvalSettings,
    /// Path of the config file itself.
    pub origin: PathBuf,
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path, overrides)
    }

    pub fn from_toml(text: &str, origin: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(".")).to_path_buf();
        let seed = overrides.seed.or(raw.seed).ok_or(ConfigError::Missing { field: "seed" })?;
        let workers = overrides.workers.or(raw.workers);
        if workers == Some(0) {
            return Err(ConfigError::Invalid {
                field: "workers",
                message: "must be positive".into(),
            });
        }
        let p = raw.paths;
        let paths = Paths {
            amr: resolve(&base, p.amr),
            sdg: resolve(&base, p.sdg),
            embeddings: resolve(&base, p.embeddings),
            edge_vectors: resolve(&base, p.edge_vectors),
            lexicon: resolve(&base, p.lexicon),
            gazetteer: resolve(&base, p.gazetteer),
            labels: resolve(&base, p.labels),
            out: None,
        };
        let out = match &overrides.out {
            Some(o) => o.clone(),
            None => resolve(&base, p.out).unwrap_or_else(|| base.join("out")),
        };
        let inputs: [(&'static str, &Option<PathBuf>); 7] = [
            ("paths.amr", &paths.amr),
            ("paths.sdg", &paths.sdg),
            ("paths.embeddings", &paths.embeddings),
            ("paths.edge_vectors", &paths.edge_vectors),
            ("paths.lexicon", &paths.lexicon),
            ("paths.gazetteer", &paths.gazetteer),
            ("paths.labels", &paths.labels),
        ];
        for (field, path) in inputs {
            if let Some(path) = path {
                if !path.exists() {
                    return Err(ConfigError::NoSuchPath {
                        field,
                        path: path.clone(),
                    });
                }
            }
        }
        let d = KernelParams::default();
        let k = raw.kernel;
        let kernel = KernelParams {
            lambda: k.and_then(|k| k.lambda).unwrap_or(d.lambda),
            alpha: k.and_then(|k| k.alpha).unwrap_or(d.alpha),
            beta: k.and_then(|k| k.beta).unwrap_or(d.beta),
            edge_mode: k.and_then(|k| k.edge_mode).unwrap_or(if paths.edge_vectors.is_some() {
                EdgeKernelMode::EmbeddedSparseRbf
            } else {
                EdgeKernelMode::Identity
            }),
        };
        kernel.validate().map_err(|e| ConfigError::Invalid {
            field: "kernel",
            message: e.to_string(),
        })?;
        if kernel.edge_mode == EdgeKernelMode::EmbeddedSparseRbf && paths.edge_vectors.is_none() {
            return Err(ConfigError::Missing {
                field: "paths.edge_vectors",
            });
        }
        let split = raw.split;
        if split.folds == 0 {
            return Err(ConfigError::Invalid {
                field: "split.folds",
                message: "must be positive".into(),
            });
        }
        if split.runs == 0 {
            return Err(ConfigError::Invalid {
                field: "split.runs",
                message: "must be positive".into(),
            });
        }
        if !(split.fraction > 0.0 && split.fraction <= 1.0) {
            return Err(ConfigError::Invalid {
                field: "split.fraction",
                message: format!("must be in (0, 1], got {}", split.fraction),
            });
        }
        let base_settings = EvalSettings::default();
        let settings = EvalSettings {
            kernel,
            svm: raw.svm.unwrap_or_default(),
            metric: raw.metric.unwrap_or_default(),
            bandwidth: raw.bandwidth.unwrap_or(base_settings.bandwidth),
            divergence_threshold: raw.divergence_threshold.unwrap_or(base_settings.divergence_threshold),
        };
        if !(settings.bandwidth > 0.0) {
            return Err(ConfigError::Invalid {
                field: "bandwidth",
                message: "must be positive".into(),
            });
        }
        if !(settings.svm.c > 0.0) {
            return Err(ConfigError::Invalid {
                field: "svm.c",
                message: "must be positive".into(),
            });
        }
        Ok(RunConfig {
            seed,
            workers,
            mode: raw.mode.unwrap_or(InferenceMode::Gdk),
            sources: raw.sources.unwrap_or(SourceMode::Joint),
            paths,
            out,
            split,
            edges: raw.edges,
            settings,
            origin: origin.to_path_buf(),
        })
    }

    /// The path for `field`, or a `Missing` error naming it.
    pub fn require<'a>(&self, field: &'static str, p: &'a Option<PathBuf>) -> Result<&'a Path, ConfigError> {
        p.as_deref().ok_or(ConfigError::Missing { field })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_toml(text, Path::new("/nonexistent/config.toml"), &Overrides::default())
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = load("seed = 3").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.mode, InferenceMode::Gdk);
        assert_eq!(c.sources, SourceMode::Joint);
        assert_eq!(c.split, SplitConfig::default());
        assert_eq!(c.out, PathBuf::from("/nonexistent/out"));
        assert_eq!(c.settings.kernel, KernelParams::default());
    }

    #[test]
    fn seed_is_required() {
        let e = load("mode = \"SLI\"").unwrap_err();
        assert!(e.to_string().contains("seed"));
        let c = RunConfig::from_toml(
            "",
            Path::new("c.toml"),
            &Overrides {
                seed: Some(9),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn missing_path_names_field() {
        let e = load("seed = 1\n[paths]\nembeddings = \"vectors.txt\"").unwrap_err();
        assert!(matches!(e, ConfigError::NoSuchPath { field: "paths.embeddings", .. }));
        assert!(e.to_string().contains("paths.embeddings"));
    }

    #[test]
    fn invalid_values_name_field() {
        assert!(load("seed = 1\n[split]\nfraction = 1.5").unwrap_err().to_string().contains("split.fraction"));
        assert!(load("seed = 1\n[kernel]\nlambda = 1.0").unwrap_err().to_string().contains("kernel"));
        assert!(load("seed = 1\nbogus = 2").is_err());
        let e = load("seed = 1\n[kernel]\nedge_mode = \"EmbeddedSparseRbf\"").unwrap_err();
        assert!(e.to_string().contains("paths.edge_vectors"));
    }

    #[test]
    fn enums_parse_by_name() {
        let c = load("seed = 1\nmode = \"MSI\"\nsources = \"SDG\"\nmetric = \"KL\"").unwrap();
        assert_eq!((c.mode, c.sources, c.settings.metric), (InferenceMode::Msi, SourceMode::Sdg, DistributionMetric::Kl));
    }
}
