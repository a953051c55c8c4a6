//! Repeated k-fold cross-validation and grid search by mean validation RMSE.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{mae, mape, r_squared, rmse};
use crate::features::FeatureMatrix;
use crate::learners::{LearnError, LearnerSpec};
use crate::preprocess::ScalerState;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CvError {
    #[error("need at least {needed} rows for this resampling, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid resampling: {0}")]
    InvalidSpec(String),
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error("candidate {candidate} ({params}), repeat {repeat}, fold {fold}: {source}")]
    Learner {
        candidate: usize,
        params: String,
        repeat: usize,
        fold: usize,
        #[source]
        source: LearnError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvSpec {
    pub folds: usize,
    pub repeats: usize,
    pub rng_seed: u64,
    pub shuffle: bool,
    /// Forward-chaining splits over time-ordered rows instead of random folds.
    pub time_series: bool,
}

impl Default for CvSpec {
    fn default() -> Self {
        Self {
            folds: 10,
            repeats: 1,
            rng_seed: 0,
            shuffle: true,
            time_series: false,
        }
    }
}

/// Resampling protocols of the reference study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvPreset {
    /// 10 folds, 6 repeats.
    Glmnet,
    /// 12 folds, 8 repeats.
    Forest,
    /// 10 folds, 1 repeat.
    Svr,
    /// 10 folds, 5 repeats.
    StackMeta,
}

impl CvSpec {
    pub fn preset(preset: CvPreset, rng_seed: u64) -> Self {
        let (folds, repeats) = match preset {
            CvPreset::Glmnet => (10, 6),
            CvPreset::Forest => (12, 8),
            CvPreset::Svr => (10, 1),
            CvPreset::StackMeta => (10, 5),
        };
        Self {
            folds,
            repeats,
            rng_seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CvError> {
        if self.folds < 2 {
            return Err(CvError::InvalidSpec("folds must be at least 2".into()));
        }
        if self.repeats < 1 {
            return Err(CvError::InvalidSpec("repeats must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fold label of every row, one vector per repeat. Within a repeat, fold
/// sizes differ by at most one.
pub fn kfold_indices(n: usize, spec: &CvSpec) -> Result<Vec<Vec<usize>>, CvError> {
    spec.validate()?;
    let k = spec.folds;
    if n < k {
        return Err(CvError::TooFewRows { needed: k, got: n });
    }
    Ok((0..spec.repeats)
        .map(|r| {
            let mut labels = vec![0; n];
            if spec.shuffle {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
                rng.set_stream(r as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                for (pos, &row) in perm.iter().enumerate() {
                    labels[row] = pos % k;
                }
            } else {
                // contiguous blocks, the first n % k blocks one row longer
                let (base, extra) = (n / k, n % k);
                let mut row = 0;
                for f in 0..k {
                    let size = base + usize::from(f < extra);
                    labels[row..row + size].iter_mut().for_each(|l| *l = f);
                    row += size;
                }
            }
            labels
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub validate: Vec<usize>,
}

/// All (train, validate) pairs for the spec. Time-series mode cuts the rows
/// into `folds + 1` contiguous blocks and validates block `j + 1` on blocks
/// `0..=j`; it ignores `repeats` and `shuffle`.
pub fn splits(n: usize, spec: &CvSpec) -> Result<Vec<FoldSplit>, CvError> {
    spec.validate()?;
    if spec.time_series {
        let blocks = spec.folds + 1;
        if n < blocks {
            return Err(CvError::TooFewRows { needed: blocks, got: n });
        }
        let bound = |b: usize| b * n / blocks;
        return Ok((0..spec.folds)
            .map(|j| FoldSplit {
                repeat: 0,
                fold: j,
                train: (0..bound(j + 1)).collect(),
                validate: (bound(j + 1)..bound(j + 2)).collect(),
            })
            .collect());
    }
    let labels = kfold_indices(n, spec)?;
    Ok(labels
        .iter()
        .enumerate()
        .flat_map(|(repeat, lab)| {
            (0..spec.folds).map(move |fold| FoldSplit {
                repeat,
                fold,
                train: (0..n).filter(|&i| lab[i] != fold).collect(),
                validate: (0..n).filter(|&i| lab[i] == fold).collect(),
            })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub candidate: usize,
    pub repeat: usize,
    pub fold: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Absent when a validation actual is zero.
    pub mape: Option<f64>,
    /// Absent when the validation actuals are constant.
    pub r_squared: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub candidates: Vec<LearnerSpec>,
    pub summaries: Vec<CandidateSummary>,
    pub records: Vec<CvRecord>,
    pub winner: usize,
}

impl GridResult {
    pub fn winner_spec(&self) -> &LearnerSpec {
        &self.candidates[self.winner]
    }

    /// One row per (candidate, repeat, fold), followed by `#`-prefixed
    /// summary lines naming the winner.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record([
                "candidate", "learner", "params", "repeat", "fold", "rmse", "mae", "mape", "r_squared",
            ])?;
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            for r in &self.records {
                let spec = &self.candidates[r.candidate];
                w.write_record([
                    r.candidate.to_string(),
                    spec.name().to_string(),
                    spec.describe(),
                    r.repeat.to_string(),
                    r.fold.to_string(),
                    r.rmse.to_string(),
                    r.mae.to_string(),
                    opt(r.mape),
                    opt(r.r_squared),
                ])?;
            }
            w.flush()?;
        }
        for (i, s) in self.summaries.iter().enumerate() {
            writeln!(
                out,
                "# candidate {i} ({}): mean_rmse={} std_rmse={}",
                self.candidates[i].describe(),
                s.mean_rmse,
                s.std_rmse
            )?;
        }
        writeln!(
            out,
            "# winner {} ({})",
            self.winner,
            self.candidates[self.winner].describe()
        )
    }
}

/// Index of the smallest value; the first one wins ties.
pub fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v >= b => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

/// Evaluates every candidate on the same folds. When `target_scaler` is
/// given, predictions and actuals are mapped back to original units before
/// scoring (the winner is unaffected: RMSE just scales).
pub fn grid_search(
    m: &FeatureMatrix,
    grid: &[LearnerSpec],
    spec: &CvSpec,
    target_scaler: Option<&ScalerState>,
) -> Result<GridResult, CvError> {
    if grid.is_empty() {
        return Err(CvError::EmptyGrid);
    }
    let folds = splits(m.n_rows(), spec)?;
    let tasks: Vec<(usize, &FoldSplit)> = (0..grid.len())
        .flat_map(|c| folds.iter().map(move |f| (c, f)))
        .collect();
    let unscale = |v: f64| target_scaler.map_or(v, |s| s.unscale_target(v));
    let records = tasks
        .par_iter()
        .map(|&(c, f)| {
            let train = m.take_rows(&f.train);
            let valid = m.take_rows(&f.validate);
            let model = grid[c].fit(&train).map_err(|source| CvError::Learner {
                candidate: c,
                params: grid[c].describe(),
                repeat: f.repeat,
                fold: f.fold,
                source,
            })?;
            let pred: Vec<f64> = model.predict_rows(&valid.rows).into_iter().map(unscale).collect();
            let actual: Vec<f64> = valid.target.iter().map(|&v| unscale(v)).collect();
            Ok(CvRecord {
                candidate: c,
                repeat: f.repeat,
                fold: f.fold,
                rmse: rmse(&actual, &pred).expect("validation fold is non-empty"),
                mae: mae(&actual, &pred).expect("validation fold is non-empty"),
                mape: mape(&actual, &pred).ok(),
                r_squared: r_squared(&actual, &pred).ok(),
            })
        })
        .collect::<Result<Vec<_>, CvError>>()?;
    Ok(summarize(grid.to_vec(), records))
}

/// Aggregates per-fold records into per-candidate summaries and a winner.
pub fn summarize(candidates: Vec<LearnerSpec>, records: Vec<CvRecord>) -> GridResult {
    let summaries: Vec<CandidateSummary> = (0..candidates.len())
        .map(|c| {
            let v: Vec<f64> = records.iter().filter(|r| r.candidate == c).map(|r| r.rmse).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            CandidateSummary {
                mean_rmse: mean,
                std_rmse: var.sqrt(),
            }
        })
        .collect();
    let means: Vec<f64> = summaries.iter().map(|s| s.mean_rmse).collect();
    let winner = argmin(&means).unwrap_or(0);
    GridResult {
        candidates,
        summaries,
        records,
        winner,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ElasticNetParams, SvrParams};
    use proptest::prelude::*;

    fn spec(folds: usize, repeats: usize) -> CvSpec {
        CvSpec {
            folds,
            repeats,
            rng_seed: 3,
            ..Default::default()
        }
    }

    fn fold_sizes(labels: &[usize], k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        sizes
    }

    #[test]
    fn one_row_per_fold() {
        let l = kfold_indices(10, &spec(10, 1)).unwrap();
        assert_eq!(fold_sizes(&l[0], 10), vec![1; 10]);
    }

    #[test]
    fn pigeonhole_fold_sizes() {
        let l = kfold_indices(11, &spec(10, 1)).unwrap();
        let mut sizes = fold_sizes(&l[0], 10);
        sizes.sort_unstable();
        assert_eq!(sizes, [vec![1; 9], vec![2]].concat());
        let blocks = kfold_indices(11, &CvSpec { shuffle: false, ..spec(10, 1) }).unwrap();
        assert_eq!(blocks[0][..3], [0, 0, 1]);
    }

    #[test]
    fn sixty_pairs_partition_rows() {
        let s = splits(100, &spec(10, 6)).unwrap();
        assert_eq!(s.len(), 60);
        for r in 0..6 {
            let mut seen = vec![0; 100];
            for f in s.iter().filter(|f| f.repeat == r) {
                f.validate.iter().for_each(|&i| seen[i] += 1);
                assert_eq!(f.train.len() + f.validate.len(), 100);
                assert!(f.train.iter().all(|i| !f.validate.contains(i)));
            }
            assert!(seen.iter().all(|&c| c == 1));
        }
        let again = splits(100, &spec(10, 6)).unwrap();
        assert_eq!(s, again);
        assert_ne!(s[0].validate, s[10].validate);
    }

    #[test]
    fn errors() {
        assert_eq!(kfold_indices(5, &spec(10, 1)), Err(CvError::TooFewRows { needed: 10, got: 5 }));
        assert!(matches!(kfold_indices(5, &spec(1, 1)), Err(CvError::InvalidSpec(_))));
        assert!(matches!(kfold_indices(5, &spec(2, 0)), Err(CvError::InvalidSpec(_))));
        let m = FeatureMatrix::from_xy(vec![vec![0.0]; 4], vec![0.0; 4]).unwrap();
        assert_eq!(grid_search(&m, &[], &spec(2, 1), None), Err(CvError::EmptyGrid));
    }

    #[test]
    fn presets() {
        let counts: Vec<usize> = [CvPreset::Glmnet, CvPreset::Forest, CvPreset::Svr, CvPreset::StackMeta]
            .iter()
            .map(|&p| splits(200, &CvSpec::preset(p, 1)).unwrap().len())
            .collect();
        assert_eq!(counts, vec![60, 96, 10, 50]);
    }

    #[test]
    fn forward_chaining() {
        let s = splits(20, &CvSpec { folds: 4, time_series: true, ..Default::default() }).unwrap();
        assert_eq!(s.len(), 4);
        for f in &s {
            assert!(f.train.iter().max().unwrap() < f.validate.iter().min().unwrap());
            assert_eq!(f.train[0], 0);
        }
        assert_eq!(s[3].validate.last(), Some(&19));
    }

    fn linear_data(n: usize) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64, ((i * 7) % 11) as f64]).collect();
        let target = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
        FeatureMatrix::from_xy(rows, target).unwrap()
    }

    #[test]
    fn single_candidate_wins() {
        let m = linear_data(30);
        let g = grid_search(&m, &[LearnerSpec::Svr(SvrParams::default())], &spec(5, 2), None).unwrap();
        assert_eq!(g.winner, 0);
        assert_eq!(g.records.len(), 10);
    }

    #[test]
    fn dominant_candidate_wins() {
        let m = linear_data(40);
        let weak = LearnerSpec::ElasticNet(ElasticNetParams { lambda: 1e3, ..Default::default() });
        let strong = LearnerSpec::ElasticNet(ElasticNetParams { lambda: 0.0, tol: 1e-12, ..Default::default() });
        let g = grid_search(&m, &[weak, strong], &spec(5, 2), None).unwrap();
        for r in g.records.iter().filter(|r| r.candidate == 1) {
            let other = g
                .records
                .iter()
                .find(|o| o.candidate == 0 && o.repeat == r.repeat && o.fold == r.fold)
                .unwrap();
            assert!(r.rmse < other.rmse);
        }
        assert_eq!(g.winner, 1);
        let again = grid_search(&m, &g.candidates, &spec(5, 2), None).unwrap();
        assert_eq!(again, g);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 21);
        assert!(text.contains("# winner 1"));
    }

    #[test]
    fn argmin_ties_take_first() {
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), Some(1));
        assert_eq!(argmin(&[]), None);
    }

    proptest! {
        #[test]
        fn argmin_invariant_to_positive_scaling(v in prop::collection::vec(0.0f64..1e3, 1..20), s in 1e-3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            prop_assert_eq!(argmin(&v), argmin(&scaled));
        }

        #[test]
        fn folds_partition_and_balance(n in 2usize..300, k in 2usize..15, seed in 0u64..100) {
            prop_assume!(n >= k);
            let labels = kfold_indices(n, &CvSpec { folds: k, repeats: 2, rng_seed: seed, ..Default::default() }).unwrap();
            for lab in labels {
                let sizes = fold_sizes(&lab, k);
                prop_assert_eq!(sizes.iter().sum::<usize>(), n);
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
