//! Pipeline stages. Each stage reads its inputs from the output directory,
//! writes its artifacts there and leaves a stamp recording the input hash
//! and output hashes, so an unchanged stage is skipped on the next run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stackcast::cv::{grid_search, CvSpec};
use stackcast::evaluation::{comparison_table, compute_metrics, error_series, Slice};
use stackcast::feature_select::{
    run_boruta_traced, selected_features, write_boxplot_csv, write_report_csv, BorutaConfig, Decision,
    FeatureVerdict,
};
use stackcast::features::{FeatureCache, FeatureError, FeatureMatrix};
use stackcast::learners::{LearnerSpec, SvrParams};
use stackcast::market_data::{load_csv, split, SplitSpec};
use stackcast::persist::{ModelDocument, TrainedModel};
use stackcast::preprocess::{fit_scaler, ScalerState};
use stackcast::stacking::{fit_stack_traced, meta_matrix, StackConfig};

use crate::config::{ModelKind, PipelineConfig};
use crate::error::CliError;

pub const FEATURES_TRAIN: &str = "features_train.csv";
pub const FEATURES_TEST: &str = "features_test.csv";
pub const SCALER: &str = "scaler.json";
pub const BORUTA_REPORT: &str = "boruta_report.csv";
pub const BORUTA_BOXPLOT: &str = "boruta_boxplot.csv";
pub const SELECTED: &str = "selected_features.txt";
pub const METRICS: &str = "metrics.json";
pub const COMPARISON: &str = "comparison.md";
pub const MANIFEST: &str = "manifest.json";

const STAGE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn model_file(kind: ModelKind) -> String {
    format!("models/{}.json", kind.name())
}

pub fn cv_file(kind: ModelKind) -> String {
    format!("cv_results_{}.csv", kind.name())
}

/// Independent seed for one stochastic consumer of the global seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn hex_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub input_hash: String,
    pub outputs: BTreeMap<String, String>,
    /// True when the stamp matched and the stage did not run.
    pub reused: bool,
    pub duration_ms: u128,
}

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    input_hash: String,
    outputs: BTreeMap<String, String>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
}

/// Accumulates the pieces of a stage's input hash.
struct InputHash(Sha256);

impl InputHash {
    fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        h.update(STAGE_VERSION.as_bytes());
        Self(h)
    }

    fn json<T: Serialize>(mut self, v: &T) -> Self {
        self.0.update(serde_json::to_vec(v).expect("config serializes"));
        self
    }

    fn bytes(mut self, b: &[u8]) -> Self {
        self.0.update((b.len() as u64).to_le_bytes());
        self.0.update(b);
        self
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let out = cfg.out_dir.clone();
        Self { cfg, out }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn read(&self, stage: &'static str, rel: &str, producer: &str) -> Result<Vec<u8>, CliError> {
        let p = self.path(rel);
        fs::read(&p).map_err(|e| CliError::Stage {
            stage,
            message: format!("missing input {} ({e}); run the `{producer}` stage (cmd_{producer}) first", p.display()),
        })
    }

    fn write(&self, stage: &'static str, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let p = self.path(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
        }
        fs::write(&p, bytes).map_err(|e| CliError::io(stage, &p, e))
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.out.join(".stamps").join(format!("{stage}.json"))
    }

    fn hash_outputs(&self, stage: &'static str, files: &[String]) -> Result<BTreeMap<String, String>, CliError> {
        files
            .iter()
            .map(|f| {
                let p = self.path(f);
                let bytes = fs::read(&p).map_err(|e| CliError::io(stage, &p, e))?;
                Ok((f.clone(), hex_digest(&bytes)))
            })
            .collect()
    }

    /// Runs `body` unless the stamp shows identical inputs and untouched
    /// outputs. `body` returns the output files it wrote.
    fn run_stage(
        &self,
        stage: &'static str,
        seed: u64,
        input_hash: String,
        body: impl FnOnce() -> Result<Vec<String>, CliError>,
    ) -> Result<StageRecord, CliError> {
        let started = Instant::now();
        if let Ok(text) = fs::read_to_string(self.stamp_path(stage)) {
            if let Ok(stamp) = serde_json::from_str::<Stamp>(&text) {
                let files: Vec<String> = stamp.outputs.keys().cloned().collect();
                let fresh = stamp.input_hash == input_hash
                    && self.hash_outputs(stage, &files).ok().as_ref() == Some(&stamp.outputs);
                if fresh {
                    info!(target: stage, "inputs unchanged; reusing {} output(s)", files.len());
                    return Ok(StageRecord {
                        stage: stage.into(),
                        version: STAGE_VERSION.into(),
                        seed,
                        input_hash,
                        outputs: stamp.outputs,
                        reused: true,
                        duration_ms: started.elapsed().as_millis(),
                    });
                }
            }
        }
        let files = body()?;
        let outputs = self.hash_outputs(stage, &files)?;
        let stamp = Stamp {
            input_hash: input_hash.clone(),
            outputs: outputs.clone(),
        };
        let sp = self.stamp_path(stage);
        fs::create_dir_all(sp.parent().expect("stamp dir")).map_err(|e| CliError::io(stage, &sp, e))?;
        fs::write(&sp, serde_json::to_vec_pretty(&stamp).expect("stamp serializes"))
            .map_err(|e| CliError::io(stage, &sp, e))?;
        let duration_ms = started.elapsed().as_millis();
        info!(target: stage, "done in {:.2} s", duration_ms as f64 / 1000.0);
        Ok(StageRecord {
            stage: stage.into(),
            version: STAGE_VERSION.into(),
            seed,
            input_hash,
            outputs,
            reused: false,
            duration_ms,
        })
    }

    pub fn cmd_features(&self) -> Result<StageRecord, CliError> {
        const STAGE: &str = "features";
        let cfg = &self.cfg;
        let data = fs::read(&cfg.data.path)
            .map_err(|e| CliError::Config(format!("cannot read data file {}: {e}", cfg.data.path.display())))?;
        let specs = cfg.features.specs();
        let hash = InputHash::new(STAGE)
            .bytes(&data)
            .json(&cfg.data.schema)
            .json(&cfg.split)
            .json(&cfg.features)
            .json(&specs)
            .json(&cfg.horizon)
            .finish();
        self.run_stage(STAGE, cfg.seed, hash, || {
            let series = load_csv(&cfg.data.path, &cfg.data.schema).map_err(|e| CliError::data(STAGE, e))?;
            let (train_rows, test_rows) = split(&series, SplitSpec { boundary_date: cfg.split.boundary })
                .map_err(|e| CliError::data(STAGE, e))?;
            info!(target: STAGE, "{} rows; split at {}: {} train / {} test", series.len(), cfg.split.boundary, train_rows.len(), test_rows.len());
            let m = FeatureCache::new(self.out.join(".cache"))
                .get_or_build(&series, &specs, cfg.horizon)
                .map_err(|e| match e {
                    FeatureError::Io(_) | FeatureError::Cache(_) => CliError::stage(STAGE, e),
                    e => CliError::data(STAGE, e),
                })?;
            let b = cfg.split.boundary;
            let train = m.filter_dates(|d| d <= b);
            let test = m.filter_dates(|d| d > b);
            info!(
                target: STAGE,
                "{} features; dropped {} warm-up row(s) and {} trailing row(s) for horizon {}",
                m.n_features(),
                series.len() - m.n_rows() - cfg.horizon,
                cfg.horizon,
                cfg.horizon
            );
            info!(target: STAGE, "usable rows: {} train / {} test", train.n_rows(), test.n_rows());
            if train.is_empty() || test.is_empty() {
                return Err(CliError::Data {
                    stage: STAGE,
                    message: format!("split leaves {} train and {} test rows after warm-up", train.n_rows(), test.n_rows()),
                });
            }
            let scaler = if cfg.features.normalize {
                fit_scaler(&train).map_err(|e| CliError::stage(STAGE, e))?
            } else {
                ScalerState::identity(&train.column_names)
            };
            let csv = |m: &FeatureMatrix| -> Result<Vec<u8>, CliError> {
                let mut buf = Vec::new();
                m.write_csv(&mut buf).map_err(|e| CliError::stage(STAGE, e))?;
                Ok(buf)
            };
            self.write(STAGE, FEATURES_TRAIN, &csv(&train)?)?;
            self.write(STAGE, FEATURES_TEST, &csv(&test)?)?;
            self.write(STAGE, SCALER, &json_bytes(&scaler))?;
            Ok(vec![FEATURES_TRAIN.into(), FEATURES_TEST.into(), SCALER.into()])
        })
    }

    fn load_matrix(&self, stage: &'static str, rel: &str) -> Result<(FeatureMatrix, Vec<u8>), CliError> {
        let bytes = self.read(stage, rel, "features")?;
        let m = FeatureMatrix::read_csv(bytes.as_slice()).map_err(|e| CliError::stage(stage, e))?;
        Ok((m, bytes))
    }

    fn load_scaler(&self, stage: &'static str) -> Result<(ScalerState, Vec<u8>), CliError> {
        let bytes = self.read(stage, SCALER, "features")?;
        let s = serde_json::from_slice(&bytes).map_err(|e| CliError::stage(stage, e))?;
        Ok((s, bytes))
    }

    pub fn cmd_select(&self) -> Result<StageRecord, CliError> {
        const STAGE: &str = "select";
        let cfg = &self.cfg;
        let (train, train_bytes) = self.load_matrix(STAGE, FEATURES_TRAIN)?;
        let (scaler, scaler_bytes) = self.load_scaler(STAGE)?;
        let seed = derive_seed(cfg.seed, "boruta");
        let hash = InputHash::new(STAGE)
            .bytes(&train_bytes)
            .bytes(&scaler_bytes)
            .json(&cfg.select)
            .json(&seed)
            .finish();
        self.run_stage(STAGE, seed, hash, || {
            let scaled = scaler.transform(&train).map_err(|e| CliError::stage(STAGE, e))?;
            if !cfg.select.enabled {
                info!(target: STAGE, "selection disabled; keeping all {} features", train.n_features());
                self.write(STAGE, SELECTED, lines(&train.column_names).as_bytes())?;
                return Ok(vec![SELECTED.into()]);
            }
            let (verdicts, history) = if scaled.n_features() == 1 {
                warn!(target: STAGE, "one feature; Boruta needs two, marking it Tentative");
                let v = FeatureVerdict {
                    feature_name: scaled.column_names[0].clone(),
                    decision: Decision::Tentative,
                    mean_importance: 0.0,
                    hit_count: 0,
                };
                (vec![v], None)
            } else {
                let bcfg = BorutaConfig {
                    max_runs: cfg.select.max_runs,
                    p_value: cfg.select.p_value,
                    forest_params: cfg.select.forest.clone(),
                    importance: cfg.select.importance,
                    rng_seed: seed,
                };
                let r = run_boruta_traced(&scaled, &bcfg).map_err(|e| CliError::stage(STAGE, e))?;
                info!(target: STAGE, "Boruta finished after {} run(s)", r.runs);
                (r.verdicts, Some(r.history))
            };
            let count = |d: Decision| verdicts.iter().filter(|v| v.decision == d).count();
            info!(
                target: STAGE,
                "{} confirmed, {} tentative, {} rejected",
                count(Decision::Confirmed),
                count(Decision::Tentative),
                count(Decision::Rejected)
            );
            let keep = selected_features(&verdicts, !cfg.select.drop_tentative);
            if keep.is_empty() {
                return Err(CliError::Stage {
                    stage: STAGE,
                    message: "no feature survived selection".into(),
                });
            }
            let mut report = Vec::new();
            write_report_csv(&verdicts, &mut report).map_err(|e| CliError::stage(STAGE, e))?;
            self.write(STAGE, BORUTA_REPORT, &report)?;
            let mut files = vec![BORUTA_REPORT.to_string()];
            if let Some(h) = history {
                let mut boxplot = Vec::new();
                write_boxplot_csv(&h, &mut boxplot).map_err(|e| CliError::stage(STAGE, e))?;
                self.write(STAGE, BORUTA_BOXPLOT, &boxplot)?;
                files.push(BORUTA_BOXPLOT.into());
            }
            self.write(STAGE, SELECTED, lines(&keep).as_bytes())?;
            files.push(SELECTED.into());
            Ok(files)
        })
    }

    /// Scaled training matrix restricted to the selected features, the
    /// matching scaler, and the raw bytes of every input for hashing.
    fn training_inputs(&self, stage: &'static str) -> Result<(FeatureMatrix, ScalerState, Vec<Vec<u8>>), CliError> {
        let (train, train_bytes) = self.load_matrix(stage, FEATURES_TRAIN)?;
        let (scaler, scaler_bytes) = self.load_scaler(stage)?;
        let selected_bytes = self.read(stage, SELECTED, "select")?;
        let names: Vec<String> = String::from_utf8_lossy(&selected_bytes)
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let train = train.select_columns(&names).map_err(|e| CliError::stage(stage, e))?;
        let scaler = scaler.select_columns(&names).ok_or_else(|| CliError::Stage {
            stage,
            message: format!("{SELECTED} names a column missing from {SCALER}"),
        })?;
        let scaled = scaler.transform(&train).map_err(|e| CliError::stage(stage, e))?;
        Ok((scaled, scaler, vec![train_bytes, scaler_bytes, selected_bytes]))
    }

    fn cv_spec(&self, kind: ModelKind) -> CvSpec {
        let r = self.cfg.resampling(kind);
        let mut spec = CvSpec::preset(kind.preset(), derive_seed(self.cfg.seed, &format!("cv-{}", kind.name())));
        if let Some(f) = r.folds {
            spec.folds = f;
        }
        if let Some(k) = r.repeats {
            spec.repeats = k;
        }
        spec.time_series = self.cfg.cv.time_series;
        spec
    }

    pub fn cmd_train(&self, kind: ModelKind) -> Result<StageRecord, CliError> {
        if kind == ModelKind::Stack {
            return self.train_stack();
        }
        let stage: &'static str = match kind {
            ModelKind::Glmnet => "train-glmnet",
            ModelKind::Rf => "train-rf",
            _ => "train-svr",
        };
        let cfg = &self.cfg;
        let (train, scaler, inputs) = self.training_inputs(stage)?;
        let seed = derive_seed(cfg.seed, kind.name());
        let grid = cfg.grid(kind, train.n_features(), seed);
        if grid.is_empty() {
            return Err(CliError::Config(format!("{} grid has no usable candidate", kind.name())));
        }
        let spec = self.cv_spec(kind);
        let mut hash = InputHash::new(stage);
        for b in &inputs {
            hash = hash.bytes(b);
        }
        let hash = hash.json(&grid).json(&spec).finish();
        self.run_stage(stage, seed, hash, || {
            info!(
                target: stage,
                "{} candidate(s) × {} fold(s) × {} repeat(s) on {} rows, {} features",
                grid.len(),
                spec.folds,
                if spec.time_series { 1 } else { spec.repeats },
                train.n_rows(),
                train.n_features()
            );
            let result = grid_search(&train, &grid, &spec, Some(&scaler)).map_err(|e| CliError::stage(stage, e))?;
            let winner = result.winner_spec().clone();
            let s = &result.summaries[result.winner];
            info!(target: stage, "winner {} (mean RMSE {:.6}, sd {:.6})", winner.describe(), s.mean_rmse, s.std_rmse);
            let model = winner.fit(&train).map_err(|e| CliError::stage(stage, e))?;
            let doc = ModelDocument::new(kind.name(), cfg.seed, TrainedModel::Single { spec: winner, model }, scaler.clone())
                .map_err(|e| CliError::stage(stage, e))?;
            self.save_model(stage, kind, &doc)?;
            let mut buf = Vec::new();
            result.write_csv(&mut buf).map_err(|e| CliError::io(stage, &self.path(&cv_file(kind)), e))?;
            self.write(stage, &cv_file(kind), &buf)?;
            Ok(vec![model_file(kind), cv_file(kind)])
        })
    }

    fn save_model(&self, stage: &'static str, kind: ModelKind, doc: &ModelDocument) -> Result<(), CliError> {
        let text = doc.to_json().map_err(|e| CliError::stage(stage, e))?;
        self.write(stage, &model_file(kind), text.as_bytes())
    }

    /// Tuned winner of a previous `train` run, if it matches the columns.
    fn tuned_spec(&self, kind: ModelKind, columns: &[String]) -> Option<(LearnerSpec, Vec<u8>)> {
        let bytes = fs::read(self.path(&model_file(kind))).ok()?;
        let doc = ModelDocument::from_json(std::str::from_utf8(&bytes).ok()?).ok()?;
        match doc.model {
            TrainedModel::Single { spec, model } if model.column_names() == columns => Some((spec, bytes)),
            _ => None,
        }
    }

    fn train_stack(&self) -> Result<StageRecord, CliError> {
        const STAGE: &str = "train-stack";
        let cfg = &self.cfg;
        let (train, scaler, inputs) = self.training_inputs(STAGE)?;
        let seed = derive_seed(cfg.seed, "stack");
        let mut base_specs = Vec::new();
        let mut hash = InputHash::new(STAGE);
        for b in &inputs {
            hash = hash.bytes(b);
        }
        for kind in [ModelKind::Rf, ModelKind::Glmnet] {
            let tuned = cfg.stack.use_tuned.then(|| self.tuned_spec(kind, &train.column_names)).flatten();
            let spec = match tuned {
                Some((spec, bytes)) => {
                    info!(target: STAGE, "base {}: tuned {}", kind.name(), spec.describe());
                    hash = hash.bytes(&bytes);
                    spec
                }
                None => {
                    let spec = cfg.grid(kind, train.n_features(), derive_seed(cfg.seed, kind.name()))
                        .into_iter()
                        .next()
                        .ok_or_else(|| CliError::Config(format!("{} grid has no usable candidate", kind.name())))?;
                    info!(target: STAGE, "base {}: untuned {}", kind.name(), spec.describe());
                    spec
                }
            };
            base_specs.push(spec);
        }
        let stack_cfg = StackConfig {
            base_specs,
            meta_spec: LearnerSpec::Svr(SvrParams {
                cost: cfg.stack.meta_cost,
                epsilon: cfg.stack.meta_epsilon,
                tol: 1e-6,
                ..Default::default()
            }),
            folds: cfg.stack.folds,
            repeats: cfg.stack.repeats,
            rng_seed: seed,
        };
        let cv_spec = self.cv_spec(ModelKind::Stack);
        let hash = hash.json(&stack_cfg).json(&cv_spec).finish();
        self.run_stage(STAGE, seed, hash, || {
            info!(
                target: STAGE,
                "out-of-fold meta-features: {} fold(s) × {} repeat(s)",
                stack_cfg.folds,
                stack_cfg.repeats
            );
            let (model, oof) = fit_stack_traced(&train, &stack_cfg).map_err(|e| CliError::stage(STAGE, e))?;
            if !oof.is_leak_free() {
                return Err(CliError::Stage {
                    stage: STAGE,
                    message: "a meta-feature was produced by a model that saw its row".into(),
                });
            }
            let meta = meta_matrix(&train, &stack_cfg, &oof);
            let result = grid_search(&meta, &[stack_cfg.meta_spec.clone()], &cv_spec, Some(&scaler))
                .map_err(|e| CliError::stage(STAGE, e))?;
            info!(target: STAGE, "meta-learner CV mean RMSE {:.6}", result.summaries[0].mean_rmse);
            let doc = ModelDocument::new("stack", cfg.seed, TrainedModel::Stack(model), scaler.clone())
                .map_err(|e| CliError::stage(STAGE, e))?;
            self.save_model(STAGE, ModelKind::Stack, &doc)?;
            let mut buf = Vec::new();
            result
                .write_csv(&mut buf)
                .map_err(|e| CliError::io(STAGE, &self.path(&cv_file(ModelKind::Stack)), e))?;
            self.write(STAGE, &cv_file(ModelKind::Stack), &buf)?;
            Ok(vec![model_file(ModelKind::Stack), cv_file(ModelKind::Stack)])
        })
    }

    pub fn cmd_evaluate(&self) -> Result<StageRecord, CliError> {
        const STAGE: &str = "evaluate";
        let (train, train_bytes) = self.load_matrix(STAGE, FEATURES_TRAIN)?;
        let (test, test_bytes) = self.load_matrix(STAGE, FEATURES_TEST)?;
        let mut hash = InputHash::new(STAGE).bytes(&train_bytes).bytes(&test_bytes);
        let mut docs = Vec::new();
        for kind in ModelKind::ALL {
            let p = self.path(&model_file(kind));
            if !p.exists() {
                continue;
            }
            let text = fs::read_to_string(&p).map_err(|e| CliError::io(STAGE, &p, e))?;
            hash = hash.bytes(kind.name().as_bytes()).bytes(text.as_bytes());
            docs.push((kind, ModelDocument::from_json(&text).map_err(|e| CliError::stage(STAGE, e))?));
        }
        if docs.is_empty() {
            return Err(CliError::Stage {
                stage: STAGE,
                message: format!("no model files under {}; run the `train` stage (cmd_train) first", self.path("models").display()),
            });
        }
        self.run_stage(STAGE, self.cfg.seed, hash.finish(), || {
            let mut reports = Vec::new();
            let mut files = Vec::new();
            for (kind, doc) in &docs {
                let mut pred_csv = String::from("date,slice,actual,predicted\n");
                for (slice, m) in [(Slice::Train, &train), (Slice::Test, &test)] {
                    let m = m.select_columns(doc.model.column_names()).map_err(|e| CliError::Stage {
                        stage: STAGE,
                        message: format!("ModelFeatureMismatch: model `{}` needs {e}", doc.name),
                    })?;
                    let pred = doc.predict(&m).map_err(|e| CliError::stage(STAGE, e))?;
                    let report = compute_metrics(&m.target, &pred)
                        .map_err(|e| CliError::stage(STAGE, e))?
                        .labelled(&doc.name, slice);
                    info!(
                        target: STAGE,
                        "{} {}: MAPE {:.4}% RMSE {:.4} MAE {:.4} R² {:.6}",
                        doc.name,
                        slice.label(),
                        report.mape,
                        report.rmse,
                        report.mae,
                        report.r_squared
                    );
                    reports.push(report);
                    for ((d, a), p) in m.dates.iter().zip(&m.target).zip(&pred) {
                        let _ = writeln!(pred_csv, "{},{},{a},{p}", d.format("%Y-%m-%d"), slice.label());
                    }
                    if slice == Slice::Test {
                        let es = error_series(&m.target, &pred, &m.dates).map_err(|e| CliError::stage(STAGE, e))?;
                        let mut buf = Vec::new();
                        es.write_csv(&mut buf).map_err(|e| CliError::stage(STAGE, e))?;
                        let rel = format!("error_series_{}.csv", kind.name());
                        self.write(STAGE, &rel, &buf)?;
                        files.push(rel);
                    }
                }
                let rel = format!("predictions_{}.csv", kind.name());
                self.write(STAGE, &rel, pred_csv.as_bytes())?;
                files.push(rel);
            }
            self.write(STAGE, METRICS, &json_bytes(&reports))?;
            let table = comparison_table(&reports).to_markdown();
            self.write(STAGE, COMPARISON, table.as_bytes())?;
            files.push(METRICS.into());
            files.push(COMPARISON.into());
            Ok(files)
        })
    }

    /// Hash of the settings that shape results; the output location, data
    /// location and worker count are left out.
    fn config_hash(&self) -> String {
        let mut cfg = self.cfg.clone();
        cfg.out_dir = PathBuf::new();
        cfg.data.path = PathBuf::new();
        cfg.jobs = None;
        hex_digest(&serde_json::to_vec(&cfg).expect("config serializes"))
    }

    pub fn cmd_run_all(&self) -> Result<Manifest, CliError> {
        let started = Instant::now();
        let mut stages = vec![self.cmd_features()?, self.cmd_select()?];
        for kind in ModelKind::ALL {
            stages.push(self.cmd_train(kind)?);
        }
        stages.push(self.cmd_evaluate()?);
        let data = fs::read(&self.cfg.data.path).map_err(|e| CliError::io("run-all", &self.cfg.data.path, e))?;
        let manifest = Manifest {
            version: STAGE_VERSION.into(),
            seed: self.cfg.seed,
            config_hash: self.config_hash(),
            data_hash: hex_digest(&data),
            stages,
            total_duration_ms: started.elapsed().as_millis(),
        };
        self.write("run-all", MANIFEST, &json_bytes(&manifest))?;
        info!(target: "run-all", "finished in {:.2} s; manifest at {}", manifest.total_duration_ms as f64 / 1000.0, self.path(MANIFEST).display());
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub data_hash: String,
    pub stages: Vec<StageRecord>,
    pub total_duration_ms: u128,
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s.into_bytes()
}

fn lines(names: &[String]) -> String {
    names.iter().map(|n| format!("{n}\n")).collect()
}
