//! Contrastive representation learning with a trainable augmentation channel.
//!
//! The pipeline couples a spherical encoder `h = g ∘ f` with a per-input
//! categorical distribution over a finite family of crop transformations.
//! Both are trained against a mutual-information objective in which the
//! augmentation distribution appears explicitly, so the crop policy learns
//! to avoid information-destroying views instead of being fixed to uniform.
//!
//! Module map:
//! - [`geometry`]: unit-sphere embeddings, the dot-product similarity, and
//!   the von Mises–Fisher encoder noise model.
//! - [`vmf`]: the projected-similarity analysis (exact density of `g2ᵀZ`,
//!   its large-dimension approximation, Beta-proposal sampling).
//! - [`augmentation`]: the crop family, the policy network, sampling and
//!   entropy, and the oracle policy.
//! - [`objective`]: the MI estimators (exact form, Jensen lower bound),
//!   the pairwise special case, and the entropy-regularized training loss.
//! - [`encoder`]: the CNN feature extractor and projection head.
//! - [`data`]: IDX ingestion, grid-canvas synthesis, dataset persistence.
//! - [`trainer`]: the alternating update loop with checkpoints and metrics.
//! - [`evaluation`]: linear probes, uniformity metrics, policy diagnostics.
//! - [`mi_oracle`]: exact mutual-information references on small channels.

// Ensure the system BLAS is linked for ndarray's gemm-backed `dot`.
use blas_src as _;

pub mod augmentation;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod evaluation;
pub mod float;
pub mod geometry;
pub mod mi_oracle;
pub mod nn;
pub mod objective;
pub mod quadrature;
pub mod special;
pub mod trainer;
pub mod vmf;

pub use float::Float;

/// Default scalar for oracle-grade math (quadrature, exact MI, probes).
pub type Real = f64;

/// Scalar used by the training pipeline; single precision keeps the
/// desk-scale runs inside the CPU budget.
pub type TrainScalar = f32;
