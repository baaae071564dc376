//! Individual identification of sea turtles from upright carapace images.
//!
//! Each region of interest is smoothed, resized to a 96x128 window and
//! described by a 5,940-value HOG template. A query is matched against a
//! gallery of labelled descriptors with a nearest-neighbour distance ratio
//! rule; ambiguous matches go to an extra `MANY` class. The [`eval`] module
//! runs the cross-validation protocol and produces ROC points and a confusion
//! matrix, and [`keypoint`] provides an ORB-style baseline for comparison.

pub mod cli;
pub mod dataset;
pub mod eval;
pub mod hog;
pub mod imgproc;
pub mod keypoint;
pub mod nndr;
pub mod pipeline;
pub mod synthetic;

pub use dataset::{load_manifest, DatasetStats, RoiRect, SampleRecord};
pub use hog::{compute_hog, hog_distance, HogDescriptor, HogParams};
pub use imgproc::{GrayImage, Kernel};
pub use nndr::{classify, nndr_score, MatchDecision, NndrScore, Outcome};
