//! Unitary tree tensor network classifiers for square images.
//!
//! Pixels are embedded as unit vectors ([`feature`]), an image becomes their
//! product state, and a hierarchy of isometric 5-index tensors ([`model`])
//! coarse-grains 2×2 blocks until a single label vector remains. Training
//! ([`trainer`]) replaces one tensor at a time by the isometric optimum of
//! its environment. Multi-class prediction uses one yes/no network per class
//! ([`ensemble`]), whose class states can be compared by fidelity and
//! entanglement ([`analysis`]).

pub mod analysis;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod feature;
pub mod format;
mod kernels;
pub mod model;
pub mod par;
pub mod report;
pub mod tensor;
pub mod trainer;

pub use analysis::{entanglement_report, entanglement_spectrum, fidelity_matrix, ttn_overlap, Cut};
pub use data::{build_dataset, Dataset, DatasetConfig};
pub use ensemble::{evaluate, predict, BinaryClassifier, Ensemble};
pub use error::{Error, Result};
pub use feature::{feature_vector, vectorize_image, FeatureConfig, VectorizedImage};
pub use model::{TtnLayout, TtnModel};
pub use tensor::DenseTensor;
pub use trainer::{train, TrainConfig, TrainingSet};
