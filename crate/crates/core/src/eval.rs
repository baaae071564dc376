//! Cross-validation, threshold sweeps, ROC points and confusion matrices.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nndr::{
    check_threshold, outcome_of, score_candidates, Candidate, MatchDecision, NndrError, NndrScore,
    OutcomeCounts, Prediction,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("k must be between 2 and the sample count {n}, got {k}")]
    InvalidFoldCount { k: usize, n: usize },
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("class {0:?} has no samples")]
    EmptyRow(String),
    #[error("class count must be at least 1")]
    NoClasses,
    #[error("thresholds must be ascending values in [0, 1]")]
    BadThresholdGrid,
    #[error("distance matrix is {0}x{0}, expected {1}x{1}")]
    MatrixSize(usize, usize),
    #[error(transparent)]
    Nndr(#[from] NndrError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldMode {
    LeaveOneOut,
    KFold(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    /// Sample indices held out.
    pub test: Vec<usize>,
    /// Sample indices forming the gallery.
    pub train: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub mode: FoldMode,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Partitions `n` samples. Leave-one-out keeps sample order; k-fold shuffles
/// with a seeded ChaCha8 stream and splits into k near-equal parts, the first
/// `n % k` parts taking one extra sample.
pub fn make_folds(n: usize, mode: FoldMode, seed: u64) -> Result<FoldPlan, EvalError> {
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    let parts: Vec<Vec<usize>> = match mode {
        FoldMode::LeaveOneOut => (0..n).map(|i| vec![i]).collect(),
        FoldMode::KFold(k) => {
            if k < 2 || k > n {
                return Err(EvalError::InvalidFoldCount { k, n });
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let (base, extra) = (n / k, n % k);
            let mut parts = Vec::with_capacity(k);
            let mut start = 0;
            for f in 0..k {
                let len = base + usize::from(f < extra);
                let mut part = order[start..start + len].to_vec();
                part.sort_unstable();
                parts.push(part);
                start += len;
            }
            parts
        }
    };
    let folds = parts
        .into_iter()
        .map(|test| {
            let train = (0..n).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { test, train }
        })
        .collect();
    Ok(FoldPlan { mode, seed, folds })
}

/// Query-to-gallery distances for every ordered pair of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn<E: Send>(
        n: usize,
        f: impl Fn(usize, usize) -> Result<f64, E> + Sync,
    ) -> Result<Self, E> {
        let values = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (q, g) = (k / n, k % n);
                if q == g {
                    Ok(0.0)
                } else {
                    f(q, g)
                }
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, query: usize, gallery: usize) -> f64 {
        self.values[query * self.n + gallery]
    }
}

/// Ratio score of one held-out sample against its fold's gallery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub index: usize,
    pub sample_id: String,
    pub true_class: String,
    pub score: NndrScore,
    /// Whether the gallery held any sample of the true class.
    pub class_in_gallery: bool,
}

/// Scores every test sample of every fold. Results come back ordered by
/// sample index regardless of how folds were scheduled.
pub fn score_queries(
    plan: &FoldPlan,
    sample_ids: &[String],
    labels: &[String],
    distances: &DistanceMatrix,
) -> Result<Vec<QueryResult>, EvalError> {
    let n = labels.len();
    if distances.len() != n || sample_ids.len() != n {
        return Err(EvalError::MatrixSize(distances.len(), n));
    }
    let per_fold: Vec<Vec<QueryResult>> = plan
        .folds
        .par_iter()
        .map(|fold| {
            fold.test
                .iter()
                .map(|&q| {
                    let candidates: Vec<Candidate> = fold
                        .train
                        .iter()
                        .map(|&g| Candidate {
                            sample_id: sample_ids[g].clone(),
                            class_label: labels[g].clone(),
                            distance: distances.get(q, g),
                        })
                        .collect();
                    let score = score_candidates(&candidates)?;
                    Ok(QueryResult {
                        index: q,
                        sample_id: sample_ids[q].clone(),
                        true_class: labels[q].clone(),
                        score,
                        class_in_gallery: fold.train.iter().any(|&g| labels[g] == labels[q]),
                    })
                })
                .collect::<Result<Vec<_>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut results: Vec<QueryResult> = per_fold.into_iter().flatten().collect();
    results.sort_by_key(|r| r.index);
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: f64,
    pub fpr: f64,
    /// `TP + FN == 0`; the TPR was defined as 0.
    pub tpr_degenerate: bool,
    /// `FP + TN == 0`; the FPR was defined as 0.
    pub fpr_degenerate: bool,
}

pub fn compute_rates(counts: &OutcomeCounts) -> Rates {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            (0.0, true)
        } else {
            (num as f64 / den as f64, false)
        }
    };
    let (tpr, tpr_degenerate) = ratio(counts.tp, counts.tp + counts.fn_);
    let (fpr, fpr_degenerate) = ratio(counts.fp, counts.fp + counts.tn);
    Rates {
        tpr,
        fpr,
        tpr_degenerate,
        fpr_degenerate,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub counts: OutcomeCounts,
    pub rates: Rates,
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

pub fn check_threshold_grid(thresholds: &[f64]) -> Result<(), EvalError> {
    let in_range = thresholds.iter().all(|t| (0.0..=1.0).contains(t));
    let ascending = thresholds.windows(2).all(|w| w[0] < w[1]);
    if thresholds.is_empty() || !in_range || !ascending {
        return Err(EvalError::BadThresholdGrid);
    }
    Ok(())
}

/// Re-derives every query's outcome at each threshold from its single ratio
/// score and aggregates the counts.
pub fn sweep_thresholds(
    queries: &[QueryResult],
    thresholds: &[f64],
) -> Result<Vec<SweepPoint>, EvalError> {
    check_threshold_grid(thresholds)?;
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let mut counts = OutcomeCounts::default();
            for q in queries {
                counts.add(outcome_of(&q.score, &q.true_class, threshold));
            }
            SweepPoint {
                threshold,
                counts,
                rates: compute_rates(&counts),
            }
        })
        .collect())
}

/// Trapezoidal area under the ROC polyline through `(0,0)`, the sweep points
/// ordered by FPR then TPR, and `(1,1)`.
pub fn roc_auc(points: &[SweepPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.rates.fpr, p.rates.tpr)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

pub const MANY_LABEL: &str = "MANY";

/// Rows are true classes; columns are the predicted classes followed by MANY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// Raw counts, `n x (n + 1)`; empty when built from proportions.
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized, `n x (n + 1)`.
    pub proportions: Vec<Vec<f64>>,
    /// Indices of rows without any sample.
    pub empty_rows: Vec<usize>,
}

impl ConfusionMatrix {
    /// From already-normalized rows (for example a published matrix).
    pub fn from_proportions(
        classes: Vec<String>,
        proportions: Vec<Vec<f64>>,
    ) -> Result<Self, EvalError> {
        let n = classes.len();
        if proportions.len() != n || proportions.iter().any(|r| r.len() != n + 1) {
            return Err(EvalError::MatrixSize(proportions.len(), n));
        }
        let empty_rows = proportions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.iter().all(|&v| v == 0.0))
            .map(|(i, _)| i)
            .collect();
        Ok(Self {
            classes,
            counts: Vec::new(),
            proportions,
            empty_rows,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.proportions.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_labels(&self) -> Vec<&str> {
        self.classes
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(MANY_LABEL))
            .collect()
    }
}

pub fn build_confusion(
    classes: &[String],
    decisions: &[(String, Prediction)],
) -> Result<ConfusionMatrix, EvalError> {
    let n = classes.len();
    let index = |c: &str| {
        classes
            .iter()
            .position(|k| k == c)
            .ok_or_else(|| EvalError::UnknownClass(c.to_string()))
    };
    let mut counts = vec![vec![0u64; n + 1]; n];
    for (truth, prediction) in decisions {
        let row = index(truth)?;
        let col = match prediction {
            Prediction::Accept(c) => index(c)?,
            Prediction::Many => n,
        };
        counts[row][col] += 1;
    }
    let mut empty_rows = Vec::new();
    let proportions = counts
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty_rows.push(i);
                vec![0.0; n + 1]
            } else {
                row.iter().map(|&c| c as f64 / total as f64).collect()
            }
        })
        .collect();
    Ok(ConfusionMatrix {
        classes: classes.to_vec(),
        counts,
        proportions,
        empty_rows,
    })
}

/// Unweighted mean of per-class recall: the diagonal mean of the
/// row-normalized matrix.
pub fn average_accuracy(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    if cm.classes.is_empty() {
        return Err(EvalError::NoClasses);
    }
    if let Some(&row) = cm.empty_rows.first() {
        return Err(EvalError::EmptyRow(cm.classes[row].clone()));
    }
    let diag: f64 = (0..cm.n_classes()).map(|i| cm.proportions[i][i]).sum();
    Ok(diag / cm.n_classes() as f64)
}

/// Fraction of all classified samples predicted correctly. `None` without raw
/// counts.
pub fn micro_accuracy(cm: &ConfusionMatrix) -> Option<f64> {
    if cm.counts.is_empty() {
        return None;
    }
    let total: u64 = cm.counts.iter().flatten().sum();
    if total == 0 {
        return None;
    }
    let diag: u64 = (0..cm.n_classes()).map(|i| cm.counts[i][i]).sum();
    Some(diag as f64 / total as f64)
}

pub fn random_guess_baseline(n_classes: usize) -> Result<f64, EvalError> {
    if n_classes == 0 {
        return Err(EvalError::NoClasses);
    }
    Ok(1.0 / n_classes as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDecision {
    pub sample_id: String,
    pub true_class: String,
    pub predicted: String,
    pub beta: f64,
    pub nearest_sample: String,
    pub top_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub sweep: Vec<SweepPoint>,
    pub roc_auc: f64,
    pub operating_threshold: f64,
    pub confusion: ConfusionMatrix,
    /// `None` when some class never appears as a query.
    pub macro_accuracy: Option<f64>,
    pub micro_accuracy: Option<f64>,
    pub chance_accuracy: f64,
    pub decisions: Vec<QueryDecision>,
    /// Queries whose class had no other sample in their gallery.
    pub unmatched_class_queries: Vec<String>,
    pub query_count: usize,
}

/// Sweep plus confusion matrix at `operating_threshold`.
pub fn build_report(
    queries: &[QueryResult],
    classes: &[String],
    thresholds: &[f64],
    operating_threshold: f64,
) -> Result<EvalReport, EvalError> {
    check_threshold(operating_threshold)?;
    let sweep = sweep_thresholds(queries, thresholds)?;
    let mut decisions = Vec::with_capacity(queries.len());
    let mut pairs = Vec::with_capacity(queries.len());
    for q in queries {
        let d = MatchDecision::from_score(q.score.clone(), operating_threshold)?;
        decisions.push(QueryDecision {
            sample_id: q.sample_id.clone(),
            true_class: q.true_class.clone(),
            predicted: d.prediction.label().to_string(),
            beta: q.score.beta,
            nearest_sample: q.score.best.sample_id.clone(),
            top_tie: q.score.top_tie,
        });
        pairs.push((q.true_class.clone(), d.prediction));
    }
    let confusion = build_confusion(classes, &pairs)?;
    Ok(EvalReport {
        roc_auc: roc_auc(&sweep),
        sweep,
        operating_threshold,
        macro_accuracy: average_accuracy(&confusion).ok(),
        micro_accuracy: micro_accuracy(&confusion),
        chance_accuracy: random_guess_baseline(classes.len())?,
        confusion,
        decisions,
        unmatched_class_queries: queries
            .iter()
            .filter(|q| !q.class_in_gallery)
            .map(|q| q.sample_id.clone())
            .collect(),
        query_count: queries.len(),
    })
}
