//! Shared inputs for the criterion benches.

use carelu_core::{ActivationDesc, LossKind, Network, NetworkSpec, Targets, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n × d` matrix of uniform values in `[-2, 2)`.
pub fn random_matrix(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

pub fn random_labels(n: usize, classes: usize, seed: u64) -> Targets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Targets::Classes {
        labels: (0..n).map(|_| rng.random_range(0..classes)).collect(),
        classes,
    }
}

/// The activations compared in the benches.
pub const ACTIVATIONS: [&str; 6] = ["relu", "swish", "prelu", "carelu_e", "carelu_l1", "bn_carelu_e"];

pub fn mlp(activation: &str, input: usize, hidden: &[usize], classes: usize) -> Network {
    let act: ActivationDesc = activation.parse().unwrap();
    Network::from_spec(NetworkSpec::mlp(input, hidden, classes, act, LossKind::CrossEntropy, 0)).unwrap()
}
