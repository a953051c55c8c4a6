use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use stackcast::cv::CvPreset;
use stackcast::feature_select::ImportanceKind;
use stackcast::features::{reference_candidate_specs, reference_confirmed_specs, raw_specs, IndicatorSpec};
use stackcast::learners::{ElasticNetParams, ForestParams, LearnerSpec, SvrParams};
use stackcast::market_data::CsvSchema;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Days between the indicator row and the target close; 0 is nowcasting.
    pub horizon: usize,
    pub jobs: Option<usize>,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub features: FeaturesConfig,
    pub select: SelectConfig,
    pub cv: CvConfig,
    pub glmnet: GlmnetConfig,
    pub rf: ForestConfig,
    pub svr: SvrConfig,
    pub stack: StackSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 2019,
            out_dir: PathBuf::from("out"),
            horizon: 0,
            jobs: None,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            features: FeaturesConfig::default(),
            select: SelectConfig::default(),
            cv: CvConfig::default(),
            glmnet: GlmnetConfig::default(),
            rf: ForestConfig::default(),
            svr: SvrConfig::default(),
            stack: StackSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub schema: CsvSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Last training day, inclusive.
    pub boundary: NaiveDate,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            boundary: NaiveDate::from_ymd_opt(2018, 2, 5).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// The 37 candidates offered to Boruta.
    #[default]
    Candidate,
    /// The 34 confirmed features.
    Confirmed,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesConfig {
    pub normalize: bool,
    pub set: FeatureSet,
    /// Explicit indicator list; replaces `set` when present.
    pub indicators: Option<Vec<IndicatorSpec>>,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        Self {
            normalize: true,
            set: FeatureSet::default(),
            indicators: None,
        }
    }
}

impl FeaturesConfig {
    pub fn specs(&self) -> Vec<IndicatorSpec> {
        match (&self.indicators, self.set) {
            (Some(list), _) => list.clone(),
            (None, FeatureSet::Candidate) => reference_candidate_specs(),
            (None, FeatureSet::Confirmed) => reference_confirmed_specs(),
            (None, FeatureSet::Raw) => raw_specs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// When off, every feature is kept.
    pub enabled: bool,
    pub drop_tentative: bool,
    pub max_runs: usize,
    pub p_value: f64,
    pub importance: ImportanceKind,
    pub forest: ForestParams,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            drop_tentative: false,
            max_runs: 99,
            p_value: 0.01,
            importance: ImportanceKind::default(),
            forest: ForestParams {
                ntree: 100,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub time_series: bool,
}

/// Preset overrides taken from a learner section.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Resampling {
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlmnetConfig {
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub standardize: bool,
}

impl Default for GlmnetConfig {
    fn default() -> Self {
        Self {
            folds: None,
            repeats: None,
            alpha: vec![0.0, 0.5, 1.0],
            lambda: vec![1e-4, 1e-3, 1e-2],
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub ntree: Vec<usize>,
    /// 0 selects the `p / 3` default.
    pub mtry: Vec<usize>,
    pub bag_fraction: Vec<f64>,
    pub min_node_size: Vec<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            folds: None,
            repeats: None,
            ntree: vec![500],
            mtry: vec![0],
            bag_fraction: vec![0.5, 0.75],
            min_node_size: vec![5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
    pub cost: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub tol: f64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        Self {
            folds: None,
            repeats: None,
            cost: vec![0.07],
            epsilon: vec![0.1],
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackSection {
    pub folds: usize,
    pub repeats: usize,
    pub meta_cost: f64,
    pub meta_epsilon: f64,
    /// Reuse the tuned glmnet and forest winners as base learners.
    pub use_tuned: bool,
}

impl Default for StackSection {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 5,
            meta_cost: 1.0,
            meta_epsilon: 0.0,
            use_tuned: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Glmnet,
    Rf,
    Svr,
    Stack,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Glmnet, ModelKind::Rf, ModelKind::Svr, ModelKind::Stack];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Glmnet => "glmnet",
            ModelKind::Rf => "rf",
            ModelKind::Svr => "svr",
            ModelKind::Stack => "stack",
        }
    }

    pub fn preset(self) -> CvPreset {
        match self {
            ModelKind::Glmnet => CvPreset::Glmnet,
            ModelKind::Rf => CvPreset::Forest,
            ModelKind::Svr => CvPreset::Svr,
            ModelKind::Stack => CvPreset::StackMeta,
        }
    }
}

fn cartesian<A: Clone, B: Clone>(a: &[A], b: &[B]) -> Vec<(A, B)> {
    a.iter().flat_map(|x| b.iter().map(move |y| (x.clone(), y.clone()))).collect()
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Relative data paths are taken from the config file's directory.
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.data.path.as_os_str().is_empty() {
            return bad("data.path is not set".into());
        }
        if !self.data.path.is_file() {
            return bad(format!("data file {} does not exist", self.data.path.display()));
        }
        if self.glmnet.alpha.is_empty() || self.glmnet.lambda.is_empty() {
            return bad("glmnet grid is empty".into());
        }
        if self.rf.ntree.is_empty()
            || self.rf.mtry.is_empty()
            || self.rf.bag_fraction.is_empty()
            || self.rf.min_node_size.is_empty()
        {
            return bad("rf grid is empty".into());
        }
        if self.svr.cost.is_empty() || self.svr.epsilon.is_empty() {
            return bad("svr grid is empty".into());
        }
        if !(self.select.p_value > 0.0 && self.select.p_value < 1.0) || self.select.max_runs == 0 {
            return bad("select.p_value must lie in (0, 1) and max_runs be positive".into());
        }
        if self.stack.folds < 2 || self.stack.repeats == 0 {
            return bad("stack needs folds >= 2 and repeats >= 1".into());
        }
        Ok(())
    }

    pub fn resampling(&self, kind: ModelKind) -> Resampling {
        match kind {
            ModelKind::Glmnet => Resampling {
                folds: self.glmnet.folds,
                repeats: self.glmnet.repeats,
            },
            ModelKind::Rf => Resampling {
                folds: self.rf.folds,
                repeats: self.rf.repeats,
            },
            ModelKind::Svr => Resampling {
                folds: self.svr.folds,
                repeats: self.svr.repeats,
            },
            ModelKind::Stack => Resampling {
                folds: Some(self.stack.folds),
                repeats: Some(self.stack.repeats),
            },
        }
    }

    /// Candidate list for a single learner. Forest candidates whose `mtry`
    /// exceeds `n_features` are skipped.
    pub fn grid(&self, kind: ModelKind, n_features: usize, seed: u64) -> Vec<LearnerSpec> {
        match kind {
            ModelKind::Glmnet => cartesian(&self.glmnet.alpha, &self.glmnet.lambda)
                .into_iter()
                .map(|(alpha, lambda)| {
                    LearnerSpec::ElasticNet(ElasticNetParams {
                        alpha,
                        lambda,
                        standardize: self.glmnet.standardize,
                        ..Default::default()
                    })
                })
                .collect(),
            ModelKind::Rf => {
                let mut out = Vec::new();
                for &ntree in &self.rf.ntree {
                    for &mtry in &self.rf.mtry {
                        if mtry > n_features {
                            log::warn!("train: skipping rf candidate with mtry {mtry} > {n_features} features");
                            continue;
                        }
                        for (bag_fraction, min_node_size) in cartesian(&self.rf.bag_fraction, &self.rf.min_node_size) {
                            out.push(LearnerSpec::Forest(ForestParams {
                                ntree,
                                mtry: (mtry > 0).then_some(mtry),
                                bag_fraction,
                                min_node_size,
                                replace: false,
                                rng_seed: seed,
                            }));
                        }
                    }
                }
                out
            }
            ModelKind::Svr => cartesian(&self.svr.cost, &self.svr.epsilon)
                .into_iter()
                .map(|(cost, epsilon)| {
                    LearnerSpec::Svr(SvrParams {
                        cost,
                        epsilon,
                        tol: self.svr.tol,
                        ..Default::default()
                    })
                })
                .collect(),
            ModelKind::Stack => Vec::new(),
        }
    }
}
