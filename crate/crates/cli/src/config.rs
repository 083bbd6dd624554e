//! Run configuration: one TOML file, overridden key by key from the command
//! line. The resolved value is written back as `effective_config.toml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use solcur::baseline::{HpoConfig, HpoConfigSpace};
use solcur::curate::{CurationConfig, QualityTable};
use solcur::dataset::SchemaMapping;
use solcur::metrics::{MetricKind, DEFAULT_RESAMPLES};

pub const OUT_DIR_ENV: &str = "SOLCUR_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "solcur-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Output directory. When absent, `$SOLCUR_OUT_DIR`, then `solcur-out`.
    pub out_dir: Option<PathBuf>,
    /// Seeds the fold plan, the bootstrap and the selection experiments.
    pub seed: u64,
    pub inputs: Vec<InputSpec>,
    pub pipeline: PipelineConfig,
    pub curation: CurationSection,
    pub folds: FoldsConfig,
    pub metric: MetricConfig,
    pub model: ModelConfig,
    pub hpo: HpoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: None,
            seed: 42,
            inputs: Vec::new(),
            pipeline: PipelineConfig::default(),
            curation: CurationSection::default(),
            folds: FoldsConfig::default(),
            metric: MetricConfig::default(),
            model: ModelConfig::default(),
            hpo: HpoSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub path: PathBuf,
    /// Dataset name; defaults to the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Column mapping; detected from the header when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SchemaMapping>,
}

impl InputSpec {
    pub fn dataset_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| solcur::dataset::table_name(&self.path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clean,
    Curated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub neutralize: bool,
    /// Keep only records at 25 ± 5 °C and pH 7 ± 1 (when recorded).
    pub protocol_filter: bool,
    /// Which tables `split`, `train-eval` and `hpo-demo` read.
    pub stage: Stage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            neutralize: true,
            protocol_filter: false,
            stage: Stage::Curated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationSection {
    pub d: f64,
    /// TOML file of `SET = weight` entries laid over `qualities`. It is
    /// merged at load time, so the effective config never refers to it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality_weights: Option<PathBuf>,
    pub qualities: QualityTable,
}

impl Default for CurationSection {
    fn default() -> Self {
        let d = CurationConfig::default().d;
        CurationSection {
            d,
            quality_weights: None,
            qualities: QualityTable::default(),
        }
    }
}

impl CurationSection {
    pub fn to_core(&self) -> CurationConfig {
        CurationConfig {
            d: self.d,
            qualities: self.qualities.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldsConfig {
    pub k: usize,
}

impl Default for FoldsConfig {
    fn default() -> Self {
        FoldsConfig { k: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub name: MetricKind,
    pub resamples: usize,
    /// Method label used for predictions evaluated by `eval`.
    pub method: String,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            name: MetricKind::Rmse,
            resamples: DEFAULT_RESAMPLES,
            method: "ridge".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: f64,
    pub radius: u8,
    pub n_bits: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lambda: 1.0,
            radius: 2,
            n_bits: 256,
        }
    }
}

impl ModelConfig {
    pub fn to_core(&self) -> HpoConfig {
        HpoConfig {
            lambda: self.lambda,
            radius: self.radius,
            n_bits: self.n_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSection {
    pub lambdas: Vec<f64>,
    pub radii: Vec<u8>,
    pub n_bits: Vec<usize>,
    pub n_samples: usize,
    pub n_features: usize,
    pub config_counts: Vec<usize>,
    pub trials: usize,
}

impl Default for HpoSection {
    fn default() -> Self {
        HpoSection {
            lambdas: vec![0.1, 1.0, 10.0, 100.0],
            radii: vec![0, 1, 2, 3],
            n_bits: vec![16, 32, 64, 128],
            n_samples: 200,
            n_features: 20,
            config_counts: vec![1, 4, 16, 64],
            trials: 50,
        }
    }
}

impl HpoSection {
    pub fn space(&self) -> anyhow::Result<HpoConfigSpace> {
        HpoConfigSpace::grid(&self.lambdas, &self.radii, &self.n_bits).context("hpo grid")
    }
}

/// Command-line values that replace config keys when given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub no_neutralize: bool,
    pub protocol_filter: bool,
    pub stage: Option<Stage>,
    pub quality_weights: Option<PathBuf>,
    pub merge_threshold: Option<f64>,
    pub inputs: Vec<PathBuf>,
    pub metric: Option<MetricKind>,
}

impl RunConfig {
    /// Reads a TOML config, or the `config` member of a JSON run manifest.
    /// Relative input paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            serde_json::from_value(inner).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        for input in &mut cfg.inputs {
            if input.path.is_relative() {
                input.path = base.join(&input.path);
            }
        }
        if let Some(q) = &mut cfg.curation.quality_weights {
            if q.is_relative() {
                *q = base.join(&*q);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out_dir {
            self.out_dir = Some(d.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.folds {
            self.folds.k = k;
        }
        if o.no_neutralize {
            self.pipeline.neutralize = false;
        }
        if o.protocol_filter {
            self.pipeline.protocol_filter = true;
        }
        if let Some(s) = o.stage {
            self.pipeline.stage = s;
        }
        if let Some(q) = &o.quality_weights {
            self.curation.quality_weights = Some(q.clone());
        }
        if let Some(d) = o.merge_threshold {
            self.curation.d = d;
        }
        if !o.inputs.is_empty() {
            self.inputs = o
                .inputs
                .iter()
                .map(|p| InputSpec {
                    path: p.clone(),
                    name: None,
                    schema: None,
                })
                .collect();
        }
        if let Some(m) = o.metric {
            self.metric.name = m;
        }
    }

    /// Folds the quality-weights file into the table, fills the output
    /// directory and checks every value. Returns the files read.
    pub fn resolve(&mut self, env_out_dir: Option<PathBuf>) -> anyhow::Result<Vec<PathBuf>> {
        let mut read = Vec::new();
        if let Some(path) = self.curation.quality_weights.take() {
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading quality weights {}", path.display()))?;
            let extra: BTreeMap<String, f64> = toml::from_str(&text)
                .with_context(|| format!("parsing quality weights {}", path.display()))?;
            self.curation.qualities.0.extend(extra);
            read.push(path);
        }
        if self.out_dir.is_none() {
            self.out_dir = Some(env_out_dir.unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR)));
        }
        // Absolute paths keep an echoed config valid from any directory.
        for input in &mut self.inputs {
            input.path = std::path::absolute(&input.path)?;
        }
        if let Some(d) = &mut self.out_dir {
            *d = std::path::absolute(&*d)?;
        }
        self.validate()?;
        Ok(read)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.curation.to_core().validate().context("curation")?;
        if self.folds.k < 2 {
            bail!("folds.k must be at least 2, got {}", self.folds.k);
        }
        if self.metric.resamples < 100 {
            bail!(
                "metric.resamples must be at least 100, got {}",
                self.metric.resamples
            );
        }
        HpoConfigSpace::new(vec![self.model.to_core()]).context("model")?;
        self.hpo.space()?;
        if self.hpo.trials < 20 {
            bail!("hpo.trials must be at least 20, got {}", self.hpo.trials);
        }
        let mut names: Vec<String> = self.inputs.iter().map(InputSpec::dataset_name).collect();
        names.sort();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            bail!("two inputs share the dataset name '{}'", w[0]);
        }
        Ok(())
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir
            .as_deref()
            .unwrap_or(Path::new(FALLBACK_OUT_DIR))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.curation.d, 0.5);
        assert_eq!(cfg.folds.k, 10);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.inputs.push(InputSpec {
            path: "a/b.csv".into(),
            name: Some("B".into()),
            schema: Some(SchemaMapping::new("SMILES", "logS")),
        });
        cfg.out_dir = Some("out".into());
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn flags_override_keys() {
        let mut cfg: RunConfig =
            toml::from_str("seed = 1\n[folds]\nk = 5\n[curation]\nd = 0.3\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            folds: Some(4),
            merge_threshold: Some(0.7),
            no_neutralize: true,
            ..Overrides::default()
        });
        assert_eq!((cfg.seed, cfg.folds.k, cfg.curation.d), (9, 4, 0.7));
        assert!(!cfg.pipeline.neutralize);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        let mut cfg: RunConfig = toml::from_str("[curation]\nd = 0").unwrap();
        assert!(cfg.resolve(None).is_err());
        let mut cfg: RunConfig = toml::from_str("[folds]\nk = 1").unwrap();
        assert!(cfg.resolve(None).is_err());
    }

    #[test]
    fn out_dir_precedence() {
        let mut cfg = RunConfig::default();
        cfg.resolve(Some("env".into())).unwrap();
        assert!(cfg.out_dir().ends_with("env") && cfg.out_dir().is_absolute());
        let mut cfg = RunConfig {
            out_dir: Some("cfg".into()),
            ..RunConfig::default()
        };
        cfg.resolve(Some("env".into())).unwrap();
        assert!(cfg.out_dir().ends_with("cfg"));
    }

    #[test]
    fn quality_file_is_merged() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("q.toml");
        std::fs::write(&q, "AQSOL = 0.5\nNEW = 0.9\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.curation.quality_weights = Some(q.clone());
        assert_eq!(cfg.resolve(None).unwrap(), vec![q]);
        assert_eq!(cfg.curation.qualities.get("AQSOL"), Some(0.5));
        assert_eq!(cfg.curation.qualities.get("NEW"), Some(0.9));
        assert_eq!(cfg.curation.qualities.get("OCHEM"), Some(0.85));
        assert!(cfg.curation.quality_weights.is_none());
    }
}
