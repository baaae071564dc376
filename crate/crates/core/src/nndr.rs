//! Nearest-neighbour distance ratio classification.
//!
//! For a query the ratio `beta = d_top / d_second` is taken over the two
//! nearest gallery entries, whatever their class. A match is accepted when
//! `beta <= threshold` and the nearest distance is not shared by an entry of
//! another class; everything else is predicted as `MANY`.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NndrError {
    #[error("gallery needs at least 2 entries, got {0}")]
    GalleryTooSmall(usize),
    #[error("duplicate sample id {0:?} in gallery")]
    DuplicateSample(String),
    #[error("distance to {0:?} is not a finite non-negative number")]
    BadDistance(String),
    #[error("threshold must be in [0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("distance failed: {0}")]
    Distance(String),
}

/// Relative tolerance under which two nearest distances count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalleryEntry<D> {
    pub descriptor: D,
    pub class_label: String,
    pub sample_id: String,
}

/// Gallery entries with unique sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery<D> {
    entries: Vec<GalleryEntry<D>>,
}

impl<D> Gallery<D> {
    pub fn new(entries: Vec<GalleryEntry<D>>) -> Result<Self, NndrError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(NndrError::DuplicateSample(e.sample_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GalleryEntry<D>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One gallery entry with its distance to the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub sample_id: String,
    pub class_label: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRef {
    pub sample_id: String,
    pub class_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NndrScore {
    pub beta: f64,
    pub best: MatchRef,
    pub second: MatchRef,
    pub omega_top: f64,
    pub omega_2nd: f64,
    /// Another class sits at the nearest distance.
    pub top_tie: bool,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.sample_id.cmp(&b.sample_id))
}

/// Ratio score over precomputed candidate distances. Ties in distance are
/// ordered by sample id, so the result does not depend on candidate order.
pub fn score_candidates(candidates: &[Candidate]) -> Result<NndrScore, NndrError> {
    if candidates.len() < 2 {
        return Err(NndrError::GalleryTooSmall(candidates.len()));
    }
    for c in candidates {
        if !(c.distance.is_finite() && c.distance >= 0.0) {
            return Err(NndrError::BadDistance(c.sample_id.clone()));
        }
    }
    let mut best = &candidates[0];
    for c in &candidates[1..] {
        if rank(c, best) == Ordering::Less {
            best = c;
        }
    }
    let mut second: Option<&Candidate> = None;
    for c in candidates {
        if std::ptr::eq(c, best) {
            continue;
        }
        if second.is_none_or(|s| rank(c, s) == Ordering::Less) {
            second = Some(c);
        }
    }
    let second = second.expect("at least two candidates");

    let omega_top = best.distance;
    let omega_2nd = second.distance;
    // With omega_2nd == 0 the nearest is an exact duplicate as well.
    let beta = if omega_2nd > 0.0 {
        omega_top / omega_2nd
    } else {
        0.0
    };
    let tol = TIE_TOLERANCE * omega_top;
    let top_tie = candidates.iter().any(|c| {
        !std::ptr::eq(c, best)
            && c.class_label != best.class_label
            && (c.distance - omega_top).abs() <= tol
    });
    Ok(NndrScore {
        beta,
        best: MatchRef {
            sample_id: best.sample_id.clone(),
            class_label: best.class_label.clone(),
        },
        second: MatchRef {
            sample_id: second.sample_id.clone(),
            class_label: second.class_label.clone(),
        },
        omega_top,
        omega_2nd,
        top_tie,
    })
}

/// Scores `query` against every gallery entry under `distance`.
pub fn nndr_score<D, F, E>(
    query: &D,
    gallery: &Gallery<D>,
    distance: F,
) -> Result<NndrScore, NndrError>
where
    F: Fn(&D, &D) -> Result<f64, E>,
    E: std::fmt::Display,
{
    if gallery.len() < 2 {
        return Err(NndrError::GalleryTooSmall(gallery.len()));
    }
    let candidates = gallery
        .entries()
        .iter()
        .map(|e| {
            Ok(Candidate {
                sample_id: e.sample_id.clone(),
                class_label: e.class_label.clone(),
                distance: distance(query, &e.descriptor)
                    .map_err(|err| NndrError::Distance(err.to_string()))?,
            })
        })
        .collect::<Result<Vec<_>, NndrError>>()?;
    score_candidates(&candidates)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Accept(String),
    Many,
}

impl Prediction {
    pub fn label(&self) -> &str {
        match self {
            Prediction::Accept(c) => c,
            Prediction::Many => "MANY",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub prediction: Prediction,
    pub score: NndrScore,
    pub threshold: f64,
}

pub fn check_threshold(threshold: f64) -> Result<(), NndrError> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(NndrError::InvalidThreshold(threshold))
    }
}

impl MatchDecision {
    pub fn from_score(score: NndrScore, threshold: f64) -> Result<Self, NndrError> {
        check_threshold(threshold)?;
        let prediction = if !score.top_tie && score.beta <= threshold {
            Prediction::Accept(score.best.class_label.clone())
        } else {
            Prediction::Many
        };
        Ok(Self {
            prediction,
            score,
            threshold,
        })
    }

    pub fn is_accept(&self) -> bool {
        matches!(self.prediction, Prediction::Accept(_))
    }
}

pub fn classify<D, F, E>(
    query: &D,
    gallery: &Gallery<D>,
    threshold: f64,
    distance: F,
) -> Result<MatchDecision, NndrError>
where
    F: Fn(&D, &D) -> Result<f64, E>,
    E: std::fmt::Display,
{
    check_threshold(threshold)?;
    MatchDecision::from_score(nndr_score(query, gallery, distance)?, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    TrueNegative,
    FalseNegative,
}

/// Outcome of one query at `threshold`. A nearest-distance tie between
/// classes is a false negative; otherwise the nearest match decides between
/// the same-class (TP/FN) and other-class (FP/TN) branches.
pub fn outcome_of(score: &NndrScore, true_class: &str, threshold: f64) -> Outcome {
    let passes = score.beta <= threshold;
    if score.top_tie {
        Outcome::FalseNegative
    } else if score.best.class_label == true_class {
        if passes {
            Outcome::TruePositive
        } else {
            Outcome::FalseNegative
        }
    } else if passes {
        Outcome::FalsePositive
    } else {
        Outcome::TrueNegative
    }
}

pub fn outcome(decision: &MatchDecision, true_class: &str, threshold: f64) -> Outcome {
    outcome_of(&decision.score, true_class, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl OutcomeCounts {
    pub fn add(&mut self, o: Outcome) {
        match o {
            Outcome::TruePositive => self.tp += 1,
            Outcome::FalsePositive => self.fp += 1,
            Outcome::TrueNegative => self.tn += 1,
            Outcome::FalseNegative => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}
