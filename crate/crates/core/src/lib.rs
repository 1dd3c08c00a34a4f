//! Competition-based adaptive ReLU (CAReLU) activations with manual
//! backpropagation, a small MLP trainer and a finite-difference oracle.
//!
//! ```
//! use carelu_core::{cas_forward, cas_init, CompetitionKind, Tensor};
//!
//! let z = Tensor::from_rows(&[vec![2.0, -1.0]]).unwrap();
//! let (y, _) = cas_forward(&cas_init(CompetitionKind::Energy), &z).unwrap();
//! assert_eq!(y.data(), z.data());
//! ```

pub mod activations;
pub mod batchnorm;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod indicators;
pub mod network;
pub mod telemetry;
pub mod tensor;

pub use activations::{
    carelu_backward, carelu_forward, cas_backward, cas_forward, cas_init, BaselineActivation,
    BaselineKind, CasParams,
};
pub use batchnorm::{bn_carelu_backward, bn_carelu_forward, BnState, Mode};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use data::{Dataset, Normalizer, NormalizePolicy, Split};
pub use error::{Error, Result};
pub use gradcheck::{GradCheckReport, BatteryConfig};
pub use indicators::{indicator_backward, indicator_forward, CompetitionKind, IndicatorResult};
pub use network::{
    ActivationDesc, LayerDesc, LossKind, Network, NetworkSpec, OptimizerKind, Targets, TrainConfig,
};
pub use telemetry::LayerTelemetry;
pub use tensor::Tensor;
