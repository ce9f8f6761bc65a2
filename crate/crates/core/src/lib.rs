//! Compressed spectral screening for differential co-expression.
//!
//! The differential matrix `D = R1 - R2` between two groups' correlation
//! matrices is observed only on a random subset of variable pairs. Its
//! leading eigenvectors, weighted by eigenvalue magnitude, give one score per
//! variable. The rank is tuned on held-out pairs and selections are
//! stabilised with a bootstrap null built from the second group.
//!
//! ```
//! use csscreen::{css, CssConfig, Expression, StatKind};
//!
//! let rows: Vec<Vec<f64>> = (0..6)
//!     .map(|r| (0..5).map(|c| ((r * 7 + c * 3) % 11) as f64 + c as f64 * 0.1).collect())
//!     .collect();
//! let x1 = Expression::from_rows(&rows, None).unwrap();
//! let x2 = Expression::from_rows(&rows.iter().rev().cloned().collect::<Vec<_>>(), None).unwrap();
//! let scores = css(&x1, &x2, &CssConfig::new(1.0, 2, StatKind::Pearson, 7)).unwrap();
//! assert_eq!(scores.len(), 5);
//! ```

pub mod correlation;
pub mod eigen;
pub mod error;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod screening;
pub mod sim;
pub mod sparse;
pub mod stability;
pub mod tuning;

pub use correlation::{build_sparse_differential, prepare_group, StatKind};
pub use eigen::{top_k_eigen, top_k_eigen_with, DenseSymmetric, EigenOptions, SpectralResult, SymmetricOperator};
pub use error::{Result, ScreenError};
pub use matrix::ExpressionMatrix;
pub use pipeline::{run_pipeline, RunConfig, ScreeningReport};
pub use sampler::{sample_pairs, split_train_validation, Pair, PairIndexMap, PairSample};
pub use scalar::Scalar;
pub use screening::{css, css_run, spectral_scores, threshold_select, CssConfig, EigenWeighting, ScoreVector};
pub use sparse::SparseDifferential;
pub use stability::{stability_select, StabilityConfig, StabilityResult};
pub use tuning::{tune_rank, tune_rank_on, TuneConfig, TuningResult};

pub type Expression = ExpressionMatrix<f64>;
pub type Differential = SparseDifferential<f64>;
pub type Spectrum = SpectralResult<f64>;
pub type Scores = ScoreVector<f64>;

pub type Expression32 = ExpressionMatrix<f32>;
pub type Differential32 = SparseDifferential<f32>;
pub type Spectrum32 = SpectralResult<f32>;
pub type Scores32 = ScoreVector<f32>;
